#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/math.hpp"
#include "crossview/rng.hpp"
#include "crossview/selector.hpp"

namespace crossview {

// The three stream slots of a triplet. Third-person frames feed stream 0,
// the corresponding and non-corresponding first-person frames feed 1 and 2.
enum class Stream : int { Third = 0, EgoPos = 1, EgoNeg = 2 };

struct ModelConfig {
  std::size_t feature_dim = 0;
  std::size_t embed_dim = 128;
  std::size_t hidden_dim = 0;  // 0 means "same as embed_dim"
  std::size_t n_classes = 0;   // classifier width; 0 disables the classifier
  bool share_trunk = true;         // one trunk for all three streams
  bool share_ego_selector = true;  // one selector head for both ego slots
  double scale_init_sigma = 5.0;   // stddev of the tanh-scale init draw
  double scale_floor = 0.01;       // scales are projected to >= this

  std::size_t hidden() const { return hidden_dim == 0 ? embed_dim : hidden_dim; }
  bool with_classifier() const { return n_classes > 0; }
};

// Embedding trunk: affine, tanh, affine. No output normalization.
struct EmbeddingHead {
  AffineLayer l1;
  AffineLayer l2;
};

// Streams that share parameters point at the same storage group, so shared
// weights are bit-identical at all times by construction. Unshared trunks
// still keep one first-person trunk (slots 1 and 2 are the same network);
// unshared selector heads give each ego slot its own head.
struct ModelParameters {
  ModelConfig config;
  std::vector<EmbeddingHead> trunks;
  std::vector<SelectorHead> selectors;
  AffineLayer classifier;  // unused unless config.with_classifier()
  std::array<int, 3> trunk_group{};
  std::array<int, 3> selector_group{};

  const EmbeddingHead& trunk(Stream s) const { return trunks[trunk_group[int(s)]]; }
  EmbeddingHead& trunk(Stream s) { return trunks[trunk_group[int(s)]]; }
  const SelectorHead& selector(Stream s) const { return selectors[selector_group[int(s)]]; }
  SelectorHead& selector(Stream s) { return selectors[selector_group[int(s)]]; }
};

inline ModelParameters init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.feature_dim == 0) throw ConfigError("model feature_dim must be positive");
  if (config.embed_dim == 0) throw ConfigError("model embed_dim must be positive");
  ModelParameters m;
  m.config = config;
  m.trunk_group = config.share_trunk ? std::array<int, 3>{0, 0, 0} : std::array<int, 3>{0, 1, 1};
  m.selector_group =
      config.share_ego_selector ? std::array<int, 3>{0, 1, 1} : std::array<int, 3>{0, 1, 2};

  Rng rng(mix_seed(seed, fnv1a("model-init")));
  const std::size_t n_trunks = config.share_trunk ? 1 : 2;
  const std::size_t n_sel = config.share_ego_selector ? 2 : 3;
  const std::size_t hid = config.hidden();

  auto draw_affine = [&](std::size_t out, std::size_t in) {
    AffineLayer l;
    l.out_dim = out;
    l.in_dim = in;
    l.weight.resize(out * in);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : l.weight) w = rng.normal(0.0, sigma);
    l.bias.assign(out, 0.0);
    return l;
  };

  for (std::size_t g = 0; g < n_trunks; ++g) {
    EmbeddingHead head;
    head.l1 = draw_affine(hid, config.feature_dim);
    head.l2 = draw_affine(config.embed_dim, hid);
    m.trunks.push_back(std::move(head));
  }
  for (std::size_t g = 0; g < n_sel; ++g) {
    SelectorHead head;
    head.weight.resize(config.embed_dim);
    for (double& w : head.weight) w = rng.normal(0.0, 0.01);
    head.bias = 0.0;
    head.scale = std::max(std::fabs(rng.normal(0.0, config.scale_init_sigma)),
                          config.scale_floor);
    m.selectors.push_back(std::move(head));
  }
  if (config.with_classifier()) m.classifier = draw_affine(config.n_classes, config.embed_dim);
  return m;
}

// Forward state kept around for the backward pass.
struct FrameForward {
  Vector hidden;     // tanh(l1 x)
  Vector embedding;  // l2 hidden
};

inline FrameForward embed_frame(const ModelParameters& m, Stream s, const Vector& x) {
  const EmbeddingHead& trunk = m.trunk(s);
  FrameForward f;
  f.hidden = affine_forward(trunk.l1, x);
  for (double& h : f.hidden) h = std::tanh(h);
  f.embedding = affine_forward(trunk.l2, f.hidden);
  return f;
}

struct ScoreForward {
  double raw = 0.0;    // pre-tanh selector activation
  double score = 0.0;  // scale * tanh(raw)
};

inline ScoreForward score_frame(const ModelParameters& m, Stream s, const Vector& embedding) {
  const SelectorHead& head = m.selector(s);
  ScoreForward f;
  f.raw = selector_raw(head, embedding);
  f.score = scaled_tanh(f.raw, head.scale);
  return f;
}

inline Vector classifier_logits(const ModelParameters& m, const Vector& embedding) {
  if (!m.config.with_classifier())
    throw ModeError("model has no classifier head; train with n_classes > 0");
  return affine_forward(m.classifier, embedding);
}

// ---- Flat parameter layout ----
//
// Optimizer state, gradient blocks and checkpoints all address parameters
// through one canonical flat order: trunk groups ascending (l1.weight,
// l1.bias, l2.weight, l2.bias), selector groups ascending (weight, bias,
// scale), then the classifier (weight, bias) when present.

struct ParamLayout {
  struct Tensor {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;  // 1 for vectors and scalars
    std::size_t size() const { return rows * cols; }
  };
  std::vector<Tensor> tensors;
  std::size_t total = 0;

  struct TrunkSlots { int w1 = -1, b1 = -1, w2 = -1, b2 = -1; };
  struct SelectorSlots { int w = -1, b = -1, scale = -1; };
  std::vector<TrunkSlots> trunk_slots;
  std::vector<SelectorSlots> selector_slots;
  int cls_w = -1, cls_b = -1;
};

inline ParamLayout build_layout(const ModelParameters& m) {
  ParamLayout lay;
  auto push = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    lay.tensors.push_back({name, lay.total, rows, cols});
    lay.total += rows * cols;
    return static_cast<int>(lay.tensors.size() - 1);
  };
  for (std::size_t g = 0; g < m.trunks.size(); ++g) {
    const auto& t = m.trunks[g];
    ParamLayout::TrunkSlots s;
    const std::string p = "trunk" + std::to_string(g);
    s.w1 = push(p + ".l1.weight", t.l1.out_dim, t.l1.in_dim);
    s.b1 = push(p + ".l1.bias", t.l1.out_dim, 1);
    s.w2 = push(p + ".l2.weight", t.l2.out_dim, t.l2.in_dim);
    s.b2 = push(p + ".l2.bias", t.l2.out_dim, 1);
    lay.trunk_slots.push_back(s);
  }
  for (std::size_t g = 0; g < m.selectors.size(); ++g) {
    ParamLayout::SelectorSlots s;
    const std::string p = "selector" + std::to_string(g);
    s.w = push(p + ".weight", m.selectors[g].weight.size(), 1);
    s.b = push(p + ".bias", 1, 1);
    s.scale = push(p + ".scale", 1, 1);
    lay.selector_slots.push_back(s);
  }
  if (m.config.with_classifier()) {
    lay.cls_w = push("classifier.weight", m.classifier.out_dim, m.classifier.in_dim);
    lay.cls_b = push("classifier.bias", m.classifier.out_dim, 1);
  }
  return lay;
}

inline Vector pack_parameters(const ModelParameters& m) {
  const ParamLayout lay = build_layout(m);
  Vector flat(lay.total, 0.0);
  auto copy_in = [&](int slot, const Vector& src) {
    const auto& t = lay.tensors[slot];
    std::copy(src.begin(), src.end(), flat.begin() + t.offset);
  };
  for (std::size_t g = 0; g < m.trunks.size(); ++g) {
    copy_in(lay.trunk_slots[g].w1, m.trunks[g].l1.weight);
    copy_in(lay.trunk_slots[g].b1, m.trunks[g].l1.bias);
    copy_in(lay.trunk_slots[g].w2, m.trunks[g].l2.weight);
    copy_in(lay.trunk_slots[g].b2, m.trunks[g].l2.bias);
  }
  for (std::size_t g = 0; g < m.selectors.size(); ++g) {
    copy_in(lay.selector_slots[g].w, m.selectors[g].weight);
    flat[lay.tensors[lay.selector_slots[g].b].offset] = m.selectors[g].bias;
    flat[lay.tensors[lay.selector_slots[g].scale].offset] = m.selectors[g].scale;
  }
  if (m.config.with_classifier()) {
    copy_in(lay.cls_w, m.classifier.weight);
    copy_in(lay.cls_b, m.classifier.bias);
  }
  return flat;
}

inline void unpack_parameters(ModelParameters& m, const Vector& flat) {
  const ParamLayout lay = build_layout(m);
  if (flat.size() != lay.total)
    throw ShapeError("flat parameter vector does not match model layout");
  auto copy_out = [&](int slot, Vector& dst) {
    const auto& t = lay.tensors[slot];
    std::copy(flat.begin() + t.offset, flat.begin() + t.offset + t.size(), dst.begin());
  };
  for (std::size_t g = 0; g < m.trunks.size(); ++g) {
    copy_out(lay.trunk_slots[g].w1, m.trunks[g].l1.weight);
    copy_out(lay.trunk_slots[g].b1, m.trunks[g].l1.bias);
    copy_out(lay.trunk_slots[g].w2, m.trunks[g].l2.weight);
    copy_out(lay.trunk_slots[g].b2, m.trunks[g].l2.bias);
  }
  for (std::size_t g = 0; g < m.selectors.size(); ++g) {
    copy_out(lay.selector_slots[g].w, m.selectors[g].weight);
    m.selectors[g].bias = flat[lay.tensors[lay.selector_slots[g].b].offset];
    m.selectors[g].scale = flat[lay.tensors[lay.selector_slots[g].scale].offset];
  }
  if (m.config.with_classifier()) {
    copy_out(lay.cls_w, m.classifier.weight);
    copy_out(lay.cls_b, m.classifier.bias);
  }
}

}  // namespace crossview
