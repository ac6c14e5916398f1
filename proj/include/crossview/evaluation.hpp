#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/math.hpp"
#include "crossview/model.hpp"
#include "crossview/rng.hpp"
#include "crossview/sampling.hpp"
#include "crossview/training.hpp"

namespace crossview {

// Evaluation runs against an embedding provider rather than a model, so the
// same protocols cover the trained model, fixed baselines, and ground-truth
// oracles. `stream` distinguishes the third-person slot from the two
// first-person slots for providers that care (the model does when heads are
// unshared); others may ignore it.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(const PairEntry& pair, Stream stream, std::size_t frame) const = 0;
  virtual double score(const PairEntry& pair, Stream stream, std::size_t frame) const = 0;
};

inline const VideoFrames& stream_video(const PairEntry& pair, Stream s) {
  return s == Stream::Third ? pair.third : pair.ego;
}

class ModelEmbedder : public Embedder {
 public:
  explicit ModelEmbedder(const ModelParameters& m) : m_(m) {}
  Vector embed(const PairEntry& pair, Stream s, std::size_t frame) const override {
    return embed_frame(m_, s, stream_video(pair, s).features.at(frame)).embedding;
  }
  double score(const PairEntry& pair, Stream s, std::size_t frame) const override {
    const FrameForward f = embed_frame(m_, s, stream_video(pair, s).features.at(frame));
    return score_frame(m_, s, f.embedding).score;
  }

 private:
  const ModelParameters& m_;
};

// Raw features as embeddings, flat scores. The margin baseline runs on this.
class IdentityEmbedder : public Embedder {
 public:
  Vector embed(const PairEntry& pair, Stream s, std::size_t frame) const override {
    return stream_video(pair, s).features.at(frame);
  }
  double score(const PairEntry&, Stream, std::size_t) const override { return 0.0; }
};

// Content-free embeddings: each frame gets a reproducible Gaussian vector
// keyed by (video, frame). Chance-level reference for every protocol.
class RandomEmbedder : public Embedder {
 public:
  RandomEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  Vector embed(const PairEntry& pair, Stream s, std::size_t frame) const override {
    const VideoFrames& v = stream_video(pair, s);
    Rng rng(mix_seed(seed_, mix_seed(fnv1a(v.video_id), frame)));
    Vector e(dim_);
    for (double& x : e) x = rng.normal();
    return e;
  }
  double score(const PairEntry&, Stream, std::size_t) const override { return 0.0; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// ---- Correspondence protocol ----

// How evaluation triplets are ranked before taking the most-confident slice:
// Selector multiplies the three exact per-video softmax weights; Margin uses
// d_neg - d_pos on the embeddings themselves (no selector involved).
enum class WeightScheme { Selector, Margin };

inline double baseline_weight(const Vector& x, const Vector& z, const Vector& zp) {
  return l2_distance(x, zp) - l2_distance(x, z);
}

struct CorrespondenceResult {
  std::size_t n_triplets = 0;
  double accuracy_all = 0.0;
  std::map<double, double> accuracy_at;       // fraction -> accuracy on top slice
  std::map<double, std::size_t> n_selected;   // fraction -> slice size
};

namespace detail {

// Exact per-video softmax weights for every frame referenced by the triplet
// list, computed once per (pair, stream).
class ExactWeightCache {
 public:
  ExactWeightCache(const Embedder& e, const PairIndex& index) : e_(e), index_(index) {}

  double prob(std::size_t pair_idx, Stream s, std::size_t frame) {
    auto key = std::make_pair(pair_idx, int(s));
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      const PairEntry& pair = index_.pairs.at(pair_idx);
      const VideoFrames& video = stream_video(pair, s);
      if (video.frame_count() == 0) throw EmptyVideoError("weighting an empty video");
      Vector scores(video.frame_count());
      for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = e_.score(pair, s, i);
      it = cache_.emplace(key, video_softmax_exact(scores)).first;
    }
    return it->second.at(frame);
  }

 private:
  const Embedder& e_;
  const PairIndex& index_;
  std::map<std::pair<std::size_t, int>, Vector> cache_;
};

class EmbeddingCache {
 public:
  EmbeddingCache(const Embedder& e, const PairIndex& index) : e_(e), index_(index) {}

  const Vector& get(std::size_t pair_idx, Stream s, std::size_t frame) {
    auto key = std::make_tuple(pair_idx, int(s), frame);
    auto it = cache_.find(key);
    if (it == cache_.end())
      it = cache_.emplace(key, e_.embed(index_.pairs.at(pair_idx), s, frame)).first;
    return it->second;
  }

 private:
  const Embedder& e_;
  const PairIndex& index_;
  std::map<std::tuple<std::size_t, int, std::size_t>, Vector> cache_;
};

}  // namespace detail

// Fraction of triplets whose corresponding frame sits closer than the
// non-corresponding one, overall and on the most-confident slices. Slices
// take the top floor(fraction * n) triplets (at least one) after sorting by
// weight; ties break on the canonical triplet key, never on list order.
inline CorrespondenceResult correspondence_accuracy(const Embedder& emb, const PairIndex& index,
                                                    const std::vector<TripletSample>& triplets,
                                                    const std::vector<double>& fractions,
                                                    WeightScheme scheme = WeightScheme::Selector) {
  if (triplets.empty()) throw ConstraintError("correspondence_accuracy: no triplets");
  for (double f : fractions)
    if (!(f > 0.0) || f > 1.0)
      throw ConfigError("selection fraction must lie in (0, 1]");

  detail::ExactWeightCache weights(emb, index);
  detail::EmbeddingCache embeds(emb, index);

  struct Item {
    bool correct;
    double weight;
    TripletSample key;
  };
  std::vector<Item> items;
  items.reserve(triplets.size());
  double n_correct = 0.0;
  for (const TripletSample& t : triplets) {
    const Vector& ex = embeds.get(t.x_pair, Stream::Third, t.x_frame);
    const Vector& ez = embeds.get(t.z_pair, Stream::EgoPos, t.z_frame);
    const Vector& ezp = embeds.get(t.z_pair, Stream::EgoNeg, t.zp_frame);
    const bool correct = l2_distance(ex, ez) < l2_distance(ex, ezp);
    double w = 0.0;
    if (scheme == WeightScheme::Selector)
      w = weights.prob(t.x_pair, Stream::Third, t.x_frame) *
          weights.prob(t.z_pair, Stream::EgoPos, t.z_frame) *
          weights.prob(t.z_pair, Stream::EgoNeg, t.zp_frame);
    else
      w = baseline_weight(ex, ez, ezp);
    items.push_back({correct, w, t});
    n_correct += correct ? 1.0 : 0.0;
  }

  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.key < b.key;
  });

  CorrespondenceResult r;
  r.n_triplets = items.size();
  r.accuracy_all = n_correct / static_cast<double>(items.size());
  for (double f : fractions) {
    std::size_t take = static_cast<std::size_t>(f * static_cast<double>(items.size()));
    take = std::max<std::size_t>(1, std::min(take, items.size()));
    double c = 0.0;
    for (std::size_t i = 0; i < take; ++i) c += items[i].correct ? 1.0 : 0.0;
    r.accuracy_at[f] = c / static_cast<double>(take);
    r.n_selected[f] = take;
  }
  return r;
}

// ---- One-second moment alignment ----

struct AlignmentChoice {
  double ego_start = 0.0;    // chosen moment on the first-person timeline
  double third_start = 0.0;  // chosen moment on the third-person timeline
  double error_seconds = 0.0;
};

namespace detail {

struct Window {
  double start;
  std::vector<std::size_t> frames;
};

inline std::vector<Window> one_second_windows(const VideoFrames& video,
                                              double frame_rate_hint) {
  const double dur = video.duration();
  if (video.frame_count() == 0 || !(dur >= 1.0))
    throw DegenerateVideoError("alignment needs a video of at least one second");
  std::vector<double> starts;
  if (frame_rate_hint > 0.0) {
    // Uniform start grid, useful when frame timestamps are irregular.
    const double step = 1.0 / frame_rate_hint;
    for (double t = 0.0; t <= dur - 1.0 + 1e-9; t += step) starts.push_back(t);
  } else {
    for (double t : video.timestamps)
      if (t <= dur - 1.0 + 1e-9) starts.push_back(t);
  }
  std::vector<Window> windows;
  for (double s : starts) {
    Window w{s, {}};
    for (std::size_t i = 0; i < video.frame_count(); ++i)
      if (video.timestamps[i] >= s && video.timestamps[i] < s + 1.0) w.frames.push_back(i);
    if (!w.frames.empty()) windows.push_back(std::move(w));
  }
  if (windows.empty())
    throw DegenerateVideoError("no populated one-second window in video " + video.video_id);
  return windows;
}

}  // namespace detail

// Scans every (first-person window, third-person window) combination, scores
// each by the count-normalized sum of cross-view frame distances, and keeps
// the minimum (first in scan order on ties). The reported error compares the
// chosen third-person moment with the chosen first-person moment carried
// through the linear time map onto the third-person timeline.
inline AlignmentChoice align_pair(const Embedder& emb, const PairIndex& index,
                                  std::size_t pair_idx, double frame_rate_hint = 0.0) {
  const PairEntry& pair = index.pairs.at(pair_idx);
  const auto ego_windows = detail::one_second_windows(pair.ego, frame_rate_hint);
  const auto third_windows = detail::one_second_windows(pair.third, frame_rate_hint);

  detail::EmbeddingCache embeds(emb, index);
  AlignmentChoice best;
  double best_score = std::numeric_limits<double>::infinity();
  for (const auto& we : ego_windows) {
    for (const auto& wt : third_windows) {
      double acc = 0.0;
      for (std::size_t a : we.frames)
        for (std::size_t b : wt.frames)
          acc += l2_distance(embeds.get(pair_idx, Stream::EgoPos, a),
                             embeds.get(pair_idx, Stream::Third, b));
      acc /= static_cast<double>(we.frames.size() * wt.frames.size());
      if (acc < best_score) {
        best_score = acc;
        best.ego_start = we.start;
        best.third_start = wt.start;
      }
    }
  }
  const double mapped = time_map(best.ego_start, pair.ego.duration(), pair.third.duration());
  best.error_seconds = std::fabs(best.third_start - mapped);
  return best;
}

struct AlignmentResult {
  std::vector<double> per_pair_error;
  double median_error = 0.0;
  double mean_error = 0.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw ConstraintError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline AlignmentResult align_pairs(const Embedder& emb, const PairIndex& index,
                                   const std::vector<std::size_t>& pair_indices,
                                   double frame_rate_hint = 0.0) {
  AlignmentResult r;
  for (std::size_t p : pair_indices)
    r.per_pair_error.push_back(align_pair(emb, index, p, frame_rate_hint).error_seconds);
  r.median_error = median_of(r.per_pair_error);
  r.mean_error =
      std::accumulate(r.per_pair_error.begin(), r.per_pair_error.end(), 0.0) /
      static_cast<double>(r.per_pair_error.size());
  return r;
}

// ---- Zero-shot first-person recognition ----

// Video-level class probabilities: per-frame logistic probabilities from the
// classifier head, mean-pooled. Frames are reduced in timestamp order, so the
// result does not depend on how the caller happened to order them.
inline Vector zero_shot_predict(const ModelParameters& m, const VideoFrames& ego) {
  if (!m.config.with_classifier())
    throw ModeError("zero_shot_predict requires a model with a classifier head");
  if (ego.frame_count() == 0) throw EmptyVideoError("zero_shot_predict: empty video");
  std::vector<std::size_t> order(ego.frame_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ego.timestamps[a] < ego.timestamps[b]; });
  Vector mean(m.config.n_classes, 0.0);
  for (std::size_t i : order) {
    const FrameForward f = embed_frame(m, Stream::EgoPos, ego.features[i]);
    const Vector logits = classifier_logits(m, f.embedding);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += logistic(logits[c]);
  }
  for (double& v : mean) v /= static_cast<double>(ego.frame_count());
  return mean;
}

// ---- Mean average precision ----

// Non-interpolated AP for one class: videos ranked by score (descending,
// ties broken by video index), precision summed at every positive rank.
inline double average_precision(const Vector& scores, const std::vector<std::uint8_t>& positives) {
  if (scores.size() != positives.size())
    throw ShapeError("average_precision: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (std::uint8_t p : positives) n_pos += p ? 1 : 0;
  if (n_pos == 0) throw ConstraintError("average_precision: class has no positives");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  double hits = 0.0, ap = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positives[order[rank]]) {
      hits += 1.0;
      ap += hits / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

struct MapResult {
  double mean_ap = 0.0;
  std::vector<double> per_class_ap;     // NaN for classes with no positives
  std::vector<std::uint8_t> class_used;
};

// mAP over classes that have at least one positive video.
inline MapResult video_map(const std::vector<Vector>& video_scores,
                           const std::vector<std::vector<std::uint8_t>>& video_labels) {
  if (video_scores.empty()) throw ConstraintError("video_map: no videos");
  if (video_scores.size() != video_labels.size())
    throw ShapeError("video_map: score and label counts differ");
  const std::size_t n_classes = video_scores[0].size();
  for (std::size_t v = 0; v < video_scores.size(); ++v)
    if (video_scores[v].size() != n_classes || video_labels[v].size() != n_classes)
      throw ShapeError("video_map: inconsistent class dimension");

  MapResult r;
  r.per_class_ap.assign(n_classes, std::numeric_limits<double>::quiet_NaN());
  r.class_used.assign(n_classes, 0);
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    Vector s(video_scores.size());
    std::vector<std::uint8_t> y(video_scores.size());
    std::size_t n_pos = 0;
    for (std::size_t v = 0; v < video_scores.size(); ++v) {
      s[v] = video_scores[v][c];
      y[v] = video_labels[v][c];
      n_pos += y[v] ? 1 : 0;
    }
    if (n_pos == 0) continue;
    r.per_class_ap[c] = average_precision(s, y);
    r.class_used[c] = 1;
    acc += r.per_class_ap[c];
    ++used;
  }
  if (used == 0) throw ConfigError("video_map: no class has a positive video");
  r.mean_ap = acc / static_cast<double>(used);
  return r;
}

// ---- Retrieval ----

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Exhaustive scan of the gallery; ties resolve to the lower gallery index.
inline std::vector<Neighbor> nearest_neighbors(const Vector& query,
                                               const std::vector<Vector>& gallery,
                                               std::size_t k) {
  if (k == 0) throw ConfigError("nearest_neighbors: k must be positive");
  if (k > gallery.size())
    throw ConfigError("nearest_neighbors: k exceeds gallery size");
  std::vector<Neighbor> all(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i)
    all[i] = {i, l2_distance(query, gallery[i])};
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.index < b.index;
  });
  all.resize(k);
  return all;
}

// Per-frame selector weights of one video in p/k units (softmax probability
// times frame count, so an average frame sits at 1.0).
inline Vector video_selector_weights(const ModelParameters& m, const PairEntry& pair, Stream s) {
  const VideoFrames& video = stream_video(pair, s);
  if (video.frame_count() == 0) throw EmptyVideoError("video_selector_weights: empty video");
  Vector scores(video.frame_count());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const FrameForward f = embed_frame(m, s, video.features[i]);
    scores[i] = score_frame(m, s, f.embedding).score;
  }
  Vector p = video_softmax_exact(scores);
  for (double& v : p) v *= static_cast<double>(video.frame_count());
  return p;
}

}  // namespace crossview
