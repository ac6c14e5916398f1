#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/math.hpp"

namespace crossview {

// Per-stream scoring head: a single linear unit on top of an embedding,
// squashed by a learned positive tanh scale. The scale keeps every score in
// [-scale, scale], which in turn bounds exp(score) in the accumulators.
struct SelectorHead {
  Vector weight;       // 1 x embed_dim
  double bias = 0.0;
  double scale = 1.0;  // projected to >= scale_floor after every update
};

inline double selector_raw(const SelectorHead& head, const Vector& embedding) {
  if (head.weight.size() != embedding.size())
    throw ShapeError("selector head dim does not match embedding dim");
  double acc = head.bias;
  for (std::size_t i = 0; i < embedding.size(); ++i) acc += head.weight[i] * embedding[i];
  return acc;
}

inline double selector_score(const SelectorHead& head, const Vector& embedding) {
  return scaled_tanh(selector_raw(head, embedding), head.scale);
}

// Normalized frame weight in p/k units: 1.0 means "as useful as the average
// frame of its video". Values stay positive by construction.
using SelectorWeight = double;

// Exact per-video softmax over a full score vector. Max-subtracted, so the
// result is invariant to a constant shift of all scores.
inline Vector video_softmax_exact(const Vector& scores) {
  if (scores.empty()) throw EmptyVideoError("video_softmax_exact: no frames");
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  Vector p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

// Streaming estimate of the per-video softmax normalizer. sigma tracks a
// decaying average of exp(score) over the frames of one video, so that
//   weight = exp(score) / sigma
// is the frame's softmax probability expressed in p/k units.
struct VideoAccumulator {
  double sigma = 0.0;
  std::uint64_t count = 0;
  double k = 0.1;  // decay of the running normalizer
};

// How sigma is seeded on the first observation of a video.
//   FirstExponent: sigma <- exp(f), so the first weight is exactly 1.
//   One:           sigma <- 1, so the first weight is exp(f).
enum class SigmaInit { FirstExponent, One };

inline SelectorWeight accumulator_update(VideoAccumulator& acc, double f,
                                         SigmaInit init = SigmaInit::FirstExponent) {
  const double e = std::exp(f);
  if (acc.count == 0) {
    const double sigma_prev = (init == SigmaInit::FirstExponent) ? e : 1.0;
    acc.sigma = acc.k * e + (1.0 - acc.k) * sigma_prev;
  } else {
    acc.sigma = acc.k * e + (1.0 - acc.k) * acc.sigma;
  }
  acc.count += 1;
  return e / acc.sigma;
}

inline SelectorWeight triplet_weight(SelectorWeight wx, SelectorWeight wz,
                                     SelectorWeight wzp) {
  return wx * wz * wzp;
}

// Gradient of the expected weighted loss with respect to one selector score:
// p * (l - L). Samples whose loss sits below the running level L get their
// score pushed up, samples above it get pushed down.
inline double selector_gradient(double p, double l, double L) {
  return p * (l - L);
}

}  // namespace crossview
