#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/math.hpp"
#include "crossview/model.hpp"
#include "crossview/objective.hpp"
#include "crossview/sampling.hpp"
#include "crossview/selector.hpp"

namespace crossview {

// ---- Streaming state ----

struct AccumulatorKey {
  std::string video_id;
  Modality modality = Modality::Third;
  bool operator<(const AccumulatorKey& o) const {
    if (video_id != o.video_id) return video_id < o.video_id;
    return static_cast<int>(modality) < static_cast<int>(o.modality);
  }
};

// One normalizer per (video, viewpoint). Both first-person slots of a triplet
// come from the same video and therefore update the same accumulator.
using AccumulatorTable = std::map<AccumulatorKey, VideoAccumulator>;

struct TrainConfig {
  std::size_t batch_size = 15;
  double base_lr = 3e-5;
  double lr_decay_factor = 10.0;
  std::size_t lr_decay_every = 3;  // epochs per learning-rate division
  double momentum = 0.95;
  std::size_t epochs = 9;
  std::size_t triplets_per_pair = 64;  // drawn per training pair per epoch
  double k = 0.1;                      // decay of both streaming normalizers
  SigmaInit sigma_init = SigmaInit::FirstExponent;
  bool reset_accumulators_each_epoch = false;
  bool mixed_mode = false;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  double delta = 1.0;
  double delta_prime = 10.0;

  SamplerConfig sampler() const { return {delta, delta_prime, seed}; }
};

inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  const double steps = std::floor(static_cast<double>(epoch) /
                                  static_cast<double>(cfg.lr_decay_every));
  return cfg.base_lr / std::pow(cfg.lr_decay_factor, steps);
}

struct OptimizerState {
  Vector velocity;  // congruent with the flat parameter layout
  std::size_t epochs_done = 0;
};

// ---- Per-triplet forward ----

struct TripletForwardRecord {
  TripletSample triplet;
  FrameForward fx, fz, fzp;
  ScoreForward sx, sz, szp;
  double w_x = 0.0, w_z = 0.0, w_zp = 0.0;  // p/k after the accumulator update
  double p = 0.0;                           // triplet weight, product of the three
  TripletLossValue loss;
  double L_after = 0.0;  // running loss level right after this update
};

// Runs the three streams, then advances the shared streaming state in a fixed
// order: accumulator updates for x, z, z', then the running loss. The record
// keeps every intermediate needed by the backward pass.
inline TripletForwardRecord forward_triplet(const ModelParameters& m, const PairIndex& index,
                                            const TripletSample& t, AccumulatorTable& accums,
                                            RunningLossState& loss_state,
                                            SigmaInit sigma_init = SigmaInit::FirstExponent) {
  const PairEntry& px = index.pairs.at(t.x_pair);
  const PairEntry& pz = index.pairs.at(t.z_pair);
  const Vector& x = px.third.features.at(t.x_frame);
  const Vector& z = pz.ego.features.at(t.z_frame);
  const Vector& zp = pz.ego.features.at(t.zp_frame);

  TripletForwardRecord rec;
  rec.triplet = t;
  rec.fx = embed_frame(m, Stream::Third, x);
  rec.fz = embed_frame(m, Stream::EgoPos, z);
  rec.fzp = embed_frame(m, Stream::EgoNeg, zp);
  rec.sx = score_frame(m, Stream::Third, rec.fx.embedding);
  rec.sz = score_frame(m, Stream::EgoPos, rec.fz.embedding);
  rec.szp = score_frame(m, Stream::EgoNeg, rec.fzp.embedding);

  const double d_pos = l2_distance(rec.fx.embedding, rec.fz.embedding);
  const double d_neg = l2_distance(rec.fx.embedding, rec.fzp.embedding);
  if (!std::isfinite(d_pos) || !std::isfinite(d_neg))
    throw NumericError("non-finite distance on pair " + px.pair_id + " (x frame " +
                       std::to_string(t.x_frame) + ", z frame " + std::to_string(t.z_frame) +
                       ", z' frame " + std::to_string(t.zp_frame) + ")");
  rec.loss = triplet_loss(d_pos, d_neg);

  VideoAccumulator& ax = accums[{px.third.video_id, Modality::Third}];
  VideoAccumulator& az = accums[{pz.ego.video_id, Modality::Ego}];
  rec.w_x = accumulator_update(ax, rec.sx.score, sigma_init);
  rec.w_z = accumulator_update(az, rec.sz.score, sigma_init);
  rec.w_zp = accumulator_update(az, rec.szp.score, sigma_init);
  rec.p = triplet_weight(rec.w_x, rec.w_z, rec.w_zp);
  rec.L_after = running_loss_update(loss_state, rec.p, rec.loss.l);
  return rec;
}

// ---- Gradient scatter helpers ----

namespace detail {

inline void scatter(GradientBlock& block, const ParamLayout& lay, int slot, const Vector& g) {
  const auto& t = lay.tensors[slot];
  for (std::size_t i = 0; i < g.size(); ++i) block[t.offset + i] += g[i];
}

inline void scatter_scalar(GradientBlock& block, const ParamLayout& lay, int slot, double g) {
  block[lay.tensors[slot].offset] += g;
}

// Backward through one trunk: upstream is d(objective)/d(embedding) of a
// frame processed on stream `s`. Accumulates weight/bias grads into `block`.
inline void trunk_backward(const ModelParameters& m, const ParamLayout& lay, Stream s,
                           const Vector& input, const FrameForward& fwd,
                           const Vector& upstream, GradientBlock& block) {
  const int g = m.trunk_group[int(s)];
  const EmbeddingHead& trunk = m.trunks[g];
  AffineGrad g2 = affine_backward(trunk.l2, fwd.hidden, upstream);
  Vector dpre(fwd.hidden.size());
  for (std::size_t i = 0; i < dpre.size(); ++i)
    dpre[i] = g2.dinput[i] * (1.0 - fwd.hidden[i] * fwd.hidden[i]);
  AffineGrad g1 = affine_backward(trunk.l1, input, dpre);
  const auto& slots = lay.trunk_slots[g];
  scatter(block, lay, slots.w2, g2.dweight);
  scatter(block, lay, slots.b2, g2.dbias);
  scatter(block, lay, slots.w1, g1.dweight);
  scatter(block, lay, slots.b1, g1.dbias);
}

// Backward through one selector head given d(objective)/d(score). Returns
// d(objective)/d(embedding) so the caller can continue into the trunk.
inline Vector selector_backward(const ModelParameters& m, const ParamLayout& lay, Stream s,
                                const Vector& embedding, const ScoreForward& fwd,
                                double dscore, GradientBlock& block) {
  const int g = m.selector_group[int(s)];
  const SelectorHead& head = m.selectors[g];
  const ScaledTanhGrad tg = scaled_tanh_backward(fwd.raw, head.scale, dscore);
  const auto& slots = lay.selector_slots[g];
  scatter_scalar(block, lay, slots.scale, tg.dscale);
  scatter_scalar(block, lay, slots.b, tg.draw);
  Vector dw(embedding.size()), de(embedding.size());
  for (std::size_t i = 0; i < embedding.size(); ++i) {
    dw[i] = tg.draw * embedding[i];
    de[i] = tg.draw * head.weight[i];
  }
  scatter(block, lay, slots.w, dw);
  return de;
}

}  // namespace detail

// Gradients are kept in three per-route blocks so each route can be rescaled
// independently before they are combined for the optimizer step.
struct GradientBlocks {
  GradientBlock embed;     // triplet-loss route
  GradientBlock selector;  // score route, p * (l - L)
  GradientBlock classify;  // classification route (mixed mode)

  explicit GradientBlocks(std::size_t n)
      : embed(n, 0.0), selector(n, 0.0), classify(n, 0.0) {}
};

// Backward of one triplet against the running loss level L. The triplet-loss
// route is weighted by the triplet's p/k weight; the score route applies
// p * (l - L) at each of the three scores and flows through the scaled tanh,
// the selector affine, and onward into the trunk.
inline void weighted_backward(const ModelParameters& m, const ParamLayout& lay,
                              const PairIndex& index, const TripletForwardRecord& rec,
                              double L, GradientBlocks& blocks) {
  const PairEntry& px = index.pairs.at(rec.triplet.x_pair);
  const PairEntry& pz = index.pairs.at(rec.triplet.z_pair);
  const Vector& x = px.third.features.at(rec.triplet.x_frame);
  const Vector& z = pz.ego.features.at(rec.triplet.z_frame);
  const Vector& zp = pz.ego.features.at(rec.triplet.zp_frame);

  // Triplet-loss route.
  const TripletLossGrad lg = triplet_loss_backward(rec.loss);
  const DistanceGrad gp =
      l2_distance_backward(rec.fx.embedding, rec.fz.embedding, rec.p * lg.dd_pos);
  const DistanceGrad gn =
      l2_distance_backward(rec.fx.embedding, rec.fzp.embedding, rec.p * lg.dd_neg);
  Vector de_x = gp.da;
  block_axpy(de_x, 1.0, gn.da);
  detail::trunk_backward(m, lay, Stream::Third, x, rec.fx, de_x, blocks.embed);
  detail::trunk_backward(m, lay, Stream::EgoPos, z, rec.fz, gp.db, blocks.embed);
  detail::trunk_backward(m, lay, Stream::EgoNeg, zp, rec.fzp, gn.db, blocks.embed);

  // Score route.
  const double ds = selector_gradient(rec.p, rec.loss.l, L);
  Vector se_x = detail::selector_backward(m, lay, Stream::Third, rec.fx.embedding, rec.sx,
                                          ds, blocks.selector);
  Vector se_z = detail::selector_backward(m, lay, Stream::EgoPos, rec.fz.embedding, rec.sz,
                                          ds, blocks.selector);
  Vector se_zp = detail::selector_backward(m, lay, Stream::EgoNeg, rec.fzp.embedding,
                                           rec.szp, ds, blocks.selector);
  detail::trunk_backward(m, lay, Stream::Third, x, rec.fx, se_x, blocks.selector);
  detail::trunk_backward(m, lay, Stream::EgoPos, z, rec.fz, se_z, blocks.selector);
  detail::trunk_backward(m, lay, Stream::EgoNeg, zp, rec.fzp, se_zp, blocks.selector);
}

// ---- Classification items (mixed mode) ----

struct LabeledFrame {
  std::size_t pair = 0;
  std::size_t frame = 0;           // index into the pair's third-person video
  std::vector<int> class_ids;      // positive classes of this frame
};

// A mixed item carries either a triplet or a labeled third-person frame.
struct MixedItem {
  std::optional<TripletSample> triplet;
  std::optional<LabeledFrame> labeled;

  void validate() const {
    if (triplet.has_value() == labeled.has_value())
      throw MalformedItemError(
          "mixed item must carry exactly one of: triplet, labeled frame");
  }
};

inline double softplus(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LabeledForwardRecord {
  LabeledFrame item;
  FrameForward fwd;
  Vector logits;
  Vector targets;  // multi-hot, one slot per class
  double loss = 0.0;
};

// Independent per-class logistic loss: sum_c softplus(s_c) - y_c * s_c.
inline LabeledForwardRecord forward_labeled(const ModelParameters& m, const PairIndex& index,
                                            const LabeledFrame& item) {
  if (!m.config.with_classifier())
    throw ModeError("labeled item in a model without a classifier head");
  const PairEntry& pair = index.pairs.at(item.pair);
  const Vector& x = pair.third.features.at(item.frame);
  LabeledForwardRecord rec;
  rec.item = item;
  rec.fwd = embed_frame(m, Stream::Third, x);
  rec.logits = classifier_logits(m, rec.fwd.embedding);
  rec.targets.assign(m.config.n_classes, 0.0);
  for (int c : item.class_ids) {
    if (c < 0 || static_cast<std::size_t>(c) >= m.config.n_classes)
      throw ConfigError("class id " + std::to_string(c) + " outside [0, n_classes)");
    rec.targets[static_cast<std::size_t>(c)] = 1.0;
  }
  for (std::size_t c = 0; c < rec.logits.size(); ++c)
    rec.loss += softplus(rec.logits[c]) - rec.targets[c] * rec.logits[c];
  return rec;
}

inline void labeled_backward(const ModelParameters& m, const ParamLayout& lay,
                             const PairIndex& index, const LabeledForwardRecord& rec,
                             GradientBlocks& blocks) {
  const PairEntry& pair = index.pairs.at(rec.item.pair);
  const Vector& x = pair.third.features.at(rec.item.frame);
  Vector dlogits(rec.logits.size());
  for (std::size_t c = 0; c < rec.logits.size(); ++c)
    dlogits[c] = logistic(rec.logits[c]) - rec.targets[c];
  AffineGrad g = affine_backward(m.classifier, rec.fwd.embedding, dlogits);
  detail::scatter(blocks.classify, lay, lay.cls_w, g.dweight);
  detail::scatter(blocks.classify, lay, lay.cls_b, g.dbias);
  detail::trunk_backward(m, lay, Stream::Third, x, rec.fwd, g.dinput, blocks.classify);
}

// ---- Optimizer step ----

struct StepDiagnostics {
  double mean_triplet_loss = 0.0;
  double mean_class_loss = 0.0;
  double reference_norm = 0.0;      // triplet-route gradient norm
  double selector_norm_raw = 0.0;   // before rescaling
  double selector_norm = 0.0;       // after rescaling
  double classify_norm_raw = 0.0;
  double classify_norm = 0.0;
  double learning_rate = 0.0;
  std::size_t n_triplets = 0;
  std::size_t n_labeled = 0;
};

// Processes one batch of mixed items: forwards everything (advancing the
// accumulators and the running loss in item order), then runs every backward
// against the post-batch loss level, rescales the score and classification
// routes to the triplet-route norm, and applies one momentum SGD update.
// `fallback_reference` covers batches that happen to contain no triplet; pass
// the previous batch's reference norm (0 leaves those routes unscaled).
inline StepDiagnostics mixed_step(ModelParameters& m, const ParamLayout& lay,
                                  const PairIndex& index, const std::vector<MixedItem>& batch,
                                  AccumulatorTable& accums, RunningLossState& loss_state,
                                  OptimizerState& opt, const TrainConfig& cfg, double lr,
                                  double fallback_reference = 0.0) {
  if (batch.empty()) throw ConstraintError("mixed_step: empty batch");
  for (const MixedItem& item : batch) item.validate();

  std::vector<TripletForwardRecord> triplet_recs;
  std::vector<LabeledForwardRecord> labeled_recs;
  for (const MixedItem& item : batch) {
    if (item.triplet)
      triplet_recs.push_back(
          forward_triplet(m, index, *item.triplet, accums, loss_state, cfg.sigma_init));
    else
      labeled_recs.push_back(forward_labeled(m, index, *item.labeled));
  }

  GradientBlocks blocks(opt.velocity.size());
  StepDiagnostics diag;
  diag.learning_rate = lr;
  diag.n_triplets = triplet_recs.size();
  diag.n_labeled = labeled_recs.size();

  if (!triplet_recs.empty()) {
    const double L = running_loss_level(loss_state);
    for (const auto& rec : triplet_recs) {
      if (!std::isfinite(rec.loss.l))
        throw NumericError("non-finite triplet loss in batch");
      diag.mean_triplet_loss += rec.loss.l;
      weighted_backward(m, lay, index, rec, L, blocks);
    }
    diag.mean_triplet_loss /= static_cast<double>(triplet_recs.size());
  }
  for (const auto& rec : labeled_recs) {
    if (!std::isfinite(rec.loss)) throw NumericError("non-finite classification loss in batch");
    diag.mean_class_loss += rec.loss;
    labeled_backward(m, lay, index, rec, blocks);
  }
  if (!labeled_recs.empty()) diag.mean_class_loss /= static_cast<double>(labeled_recs.size());

  // Every route is brought to the norm of the triplet-loss gradient.
  diag.reference_norm =
      triplet_recs.empty() ? fallback_reference : block_norm(blocks.embed);
  diag.selector_norm_raw = block_norm(blocks.selector);
  diag.classify_norm_raw = block_norm(blocks.classify);
  if (diag.reference_norm > 0.0) {
    rescale_gradient_block(blocks.selector, diag.reference_norm);
    rescale_gradient_block(blocks.classify, diag.reference_norm);
  }
  diag.selector_norm = block_norm(blocks.selector);
  diag.classify_norm = block_norm(blocks.classify);

  GradientBlock total = blocks.embed;
  block_axpy(total, 1.0, blocks.selector);
  block_axpy(total, 1.0, blocks.classify);
  for (double g : total)
    if (!std::isfinite(g))
      throw NumericError("non-finite gradient after batch of " +
                         std::to_string(batch.size()) + " items");

  Vector flat = pack_parameters(m);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    opt.velocity[i] = cfg.momentum * opt.velocity[i] + total[i];
    flat[i] -= lr * opt.velocity[i];
  }
  unpack_parameters(m, flat);
  for (SelectorHead& head : m.selectors)
    head.scale = std::max(head.scale, m.config.scale_floor);
  return diag;
}

inline StepDiagnostics train_step(ModelParameters& m, const ParamLayout& lay,
                                  const PairIndex& index,
                                  const std::vector<TripletSample>& batch,
                                  AccumulatorTable& accums, RunningLossState& loss_state,
                                  OptimizerState& opt, const TrainConfig& cfg, double lr) {
  std::vector<MixedItem> items;
  items.reserve(batch.size());
  for (const TripletSample& t : batch) items.push_back({t, std::nullopt});
  return mixed_step(m, lay, index, items, accums, loss_state, opt, cfg, lr);
}

// ---- Training loop ----

struct TrainState {
  ModelParameters model;
  OptimizerState opt;
  AccumulatorTable accums;
  RunningLossState loss_state;
  SplitManifest split;
  TrainConfig config;
  ModelConfig model_config;
};

using EpochCallback = std::function<void(std::size_t epoch, const TrainState&)>;

inline Rng epoch_stream_rng(const TrainConfig& cfg, std::size_t epoch) {
  return Rng(mix_seed(cfg.seed, mix_seed(epoch, fnv1a("epoch-stream"))));
}

// One epoch's triplet draw: `triplets_per_pair` slots per training pair in a
// shuffled order, each filled by a fresh uniform draw; pairs without a single
// valid anchor are dropped (with one warning each when `pair_warned` is
// given). Factored out so an audit dump of the stream is byte-identical to
// what the training loop consumed.
inline std::vector<TripletSample> epoch_triplet_stream(const PairIndex& index,
                                                       const std::vector<std::size_t>& train_pairs,
                                                       const TrainConfig& cfg, Rng& rng,
                                                       std::vector<bool>* pair_warned = nullptr) {
  const SamplerConfig sampler = cfg.sampler();
  std::vector<std::size_t> slots;
  for (std::size_t p : train_pairs)
    for (std::size_t i = 0; i < cfg.triplets_per_pair; ++i) slots.push_back(p);
  rng.shuffle(slots);

  std::vector<TripletSample> stream;
  stream.reserve(slots.size());
  for (std::size_t p : slots) {
    try {
      stream.push_back(sample_triplet(index, p, sampler, rng));
    } catch (const InfeasiblePairError& e) {
      if (pair_warned && !(*pair_warned)[p]) {
        std::cerr << "warning: skipping infeasible pair: " << e.what() << "\n";
        (*pair_warned)[p] = true;
      }
    }
  }
  return stream;
}

// Full training run over the training side of an 80/20 pair split. Each
// epoch draws `triplets_per_pair` triplets from every feasible training pair
// in a seeded shuffled order; mixed mode interleaves labeled third-person
// frames 1:1 with the triplet stream. Deterministic for a fixed
// (config, seed, data): two runs produce bit-identical states.
inline TrainState train(const PairIndex& index, const ModelConfig& model_cfg,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  TrainState st;
  st.config = cfg;
  st.model_config = model_cfg;
  st.split = split_pairs(index, cfg.test_fraction, cfg.seed);
  if (st.split.train_ids.empty()) throw ConfigError("training split is empty");
  st.model = init_model(model_cfg, cfg.seed);
  st.loss_state.k = cfg.k;
  const ParamLayout lay = build_layout(st.model);
  st.opt.velocity.assign(lay.total, 0.0);

  std::vector<std::size_t> train_pairs;
  for (const auto& id : st.split.train_ids) train_pairs.push_back(index.by_id.at(id));

  // Labeled stream (mixed mode): every third-person frame of every labeled
  // training pair, tagged with its pair's classes.
  std::vector<LabeledFrame> labeled_pool;
  if (cfg.mixed_mode) {
    if (!model_cfg.with_classifier())
      throw ConfigError("mixed_mode requires a model with n_classes > 0");
    for (std::size_t p : train_pairs) {
      const PairEntry& pair = index.pairs[p];
      if (pair.labels.empty()) continue;
      for (std::size_t f = 0; f < pair.third.frame_count(); ++f)
        labeled_pool.push_back({p, f, pair.labels});
    }
    if (labeled_pool.empty())
      throw ConfigError("mixed_mode requires labels on at least one training pair");
  }

  std::vector<bool> pair_warned(index.pairs.size(), false);
  double fallback_reference = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    if (cfg.reset_accumulators_each_epoch) st.accums.clear();

    Rng rng(epoch_stream_rng(cfg, epoch));
    const std::vector<TripletSample> triplet_stream =
        epoch_triplet_stream(index, train_pairs, cfg, rng, &pair_warned);

    std::vector<LabeledFrame> labeled_stream;
    if (cfg.mixed_mode) {
      std::vector<LabeledFrame> pool = labeled_pool;
      rng.shuffle(pool);
      // Cycle the pool until it covers the triplet stream 1:1.
      for (std::size_t i = 0; i < triplet_stream.size(); ++i)
        labeled_stream.push_back(pool[i % pool.size()]);
    }

    std::vector<MixedItem> items;
    for (std::size_t i = 0; i < triplet_stream.size(); ++i) {
      items.push_back({triplet_stream[i], std::nullopt});
      if (cfg.mixed_mode) items.push_back({std::nullopt, labeled_stream[i]});
    }

    for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(items.size(), start + cfg.batch_size);
      std::vector<MixedItem> batch(items.begin() + start, items.begin() + stop);
      const StepDiagnostics diag = mixed_step(st.model, lay, index, batch, st.accums,
                                              st.loss_state, st.opt, cfg, lr,
                                              fallback_reference);
      if (diag.reference_norm > 0.0) fallback_reference = diag.reference_norm;
    }
    st.opt.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(epoch, st);
  }
  return st;
}

// ---- Exact full-batch objective ----
//
// Reference objective for a finite triplet set with the selector weights
// taken as exact per-video softmax probabilities instead of their streaming
// estimates:  J = sum_tau p(x) p(z) p(z') l(tau).  Used to verify that the
// assembled per-triplet backward is the true gradient, and mirrored by the
// exact weighting used at evaluation time.

struct ExactTriplet {
  std::size_t x_video = 0, x_frame = 0;
  std::size_t z_video = 0, z_frame = 0;
  std::size_t zp_video = 0, zp_frame = 0;
};

struct ExactInstance {
  std::vector<VideoFrames> videos;
  std::vector<Modality> modality;  // per video
  std::vector<ExactTriplet> triplets;
};

struct ExactBatchResult {
  double objective = 0.0;
  GradientBlock grad_embed;     // triplet-loss route
  GradientBlock grad_selector;  // score route
  GradientBlock grad_total;     // sum of the two
};

inline ExactBatchResult exact_batch(const ModelParameters& m, const ExactInstance& inst) {
  const ParamLayout lay = build_layout(m);
  ExactBatchResult out;
  out.grad_embed.assign(lay.total, 0.0);
  out.grad_selector.assign(lay.total, 0.0);

  // Streams a video participates in: third-person videos serve slot x,
  // first-person videos serve slots z and z'.
  auto streams_of = [](Modality mod) {
    return mod == Modality::Third ? std::vector<Stream>{Stream::Third}
                                  : std::vector<Stream>{Stream::EgoPos, Stream::EgoNeg};
  };

  struct Block {
    std::vector<FrameForward> fwd;
    std::vector<ScoreForward> score;
    Vector prob;        // exact softmax over the video's frames
    Vector slot_coeff;  // A_i: sum over triplets using frame i of (other weights) * l
    Vector de_embed;    // d(objective)/d(embedding), triplet-loss route
  };
  std::map<std::pair<std::size_t, int>, Block> blocks;  // (video, stream)

  for (std::size_t v = 0; v < inst.videos.size(); ++v) {
    const VideoFrames& video = inst.videos[v];
    if (video.frame_count() == 0) throw EmptyVideoError("exact_batch: empty video");
    for (Stream s : streams_of(inst.modality[v])) {
      Block b;
      Vector scores;
      for (const Vector& x : video.features) {
        b.fwd.push_back(embed_frame(m, s, x));
        b.score.push_back(score_frame(m, s, b.fwd.back().embedding));
        scores.push_back(b.score.back().score);
      }
      b.prob = video_softmax_exact(scores);
      b.slot_coeff.assign(video.frame_count(), 0.0);
      b.de_embed.assign(video.frame_count() * m.config.embed_dim, 0.0);
      blocks.emplace(std::make_pair(v, int(s)), std::move(b));
    }
  }

  auto block_of = [&](std::size_t v, Stream s) -> Block& {
    auto it = blocks.find({v, int(s)});
    if (it == blocks.end())
      throw MismatchError("exact_batch: triplet slot does not match video viewpoint");
    return it->second;
  };

  const std::size_t ed = m.config.embed_dim;
  for (const ExactTriplet& t : inst.triplets) {
    Block& bx = block_of(t.x_video, Stream::Third);
    Block& bz = block_of(t.z_video, Stream::EgoPos);
    Block& bzp = block_of(t.zp_video, Stream::EgoNeg);
    const Vector& ex = bx.fwd[t.x_frame].embedding;
    const Vector& ez = bz.fwd[t.z_frame].embedding;
    const Vector& ezp = bzp.fwd[t.zp_frame].embedding;
    const TripletLossValue lv =
        triplet_loss(l2_distance(ex, ez), l2_distance(ex, ezp));
    const double px = bx.prob[t.x_frame];
    const double pz = bz.prob[t.z_frame];
    const double pzp = bzp.prob[t.zp_frame];
    const double w = px * pz * pzp;
    out.objective += w * lv.l;

    // Triplet-loss route: d(objective)/d(embeddings), weight held fixed.
    const TripletLossGrad lg = triplet_loss_backward(lv);
    const DistanceGrad gp = l2_distance_backward(ex, ez, w * lg.dd_pos);
    const DistanceGrad gn = l2_distance_backward(ex, ezp, w * lg.dd_neg);
    for (std::size_t i = 0; i < ed; ++i) {
      bx.de_embed[t.x_frame * ed + i] += gp.da[i] + gn.da[i];
      bz.de_embed[t.z_frame * ed + i] += gp.db[i];
      bzp.de_embed[t.zp_frame * ed + i] += gn.db[i];
    }

    // Score route coefficients: loss times the other two slot weights.
    bx.slot_coeff[t.x_frame] += pz * pzp * lv.l;
    bz.slot_coeff[t.z_frame] += px * pzp * lv.l;
    bzp.slot_coeff[t.zp_frame] += px * pz * lv.l;
  }

  for (auto& [key, b] : blocks) {
    const std::size_t v = key.first;
    const Stream s = static_cast<Stream>(key.second);
    const VideoFrames& video = inst.videos[v];

    // Softmax backward within the block: ds_j = p_j (A_j - sum_i p_i A_i).
    double level = 0.0;
    for (std::size_t i = 0; i < b.prob.size(); ++i) level += b.prob[i] * b.slot_coeff[i];

    for (std::size_t i = 0; i < video.frame_count(); ++i) {
      // Triplet-loss route into the trunk.
      Vector de(b.de_embed.begin() + i * ed, b.de_embed.begin() + (i + 1) * ed);
      bool nonzero = false;
      for (double x : de) nonzero = nonzero || x != 0.0;
      if (nonzero)
        detail::trunk_backward(m, lay, s, video.features[i], b.fwd[i], de, out.grad_embed);

      // Score route: through the selector head, then into the trunk.
      // d(objective)/d(score_i) = p_i (A_i - sum_j p_j A_j).
      const double dscore = selector_gradient(b.prob[i], b.slot_coeff[i], level);
      Vector de_sel = detail::selector_backward(m, lay, s, b.fwd[i].embedding, b.score[i],
                                                dscore, out.grad_selector);
      detail::trunk_backward(m, lay, s, video.features[i], b.fwd[i], de_sel,
                             out.grad_selector);
    }
  }

  out.grad_total = out.grad_embed;
  block_axpy(out.grad_total, 1.0, out.grad_selector);
  return out;
}

}  // namespace crossview
