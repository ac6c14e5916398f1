#pragma once

#include <cmath>
#include <cstdint>

#include "crossview/errors.hpp"
#include "crossview/math.hpp"

namespace crossview {

// Soft comparison of the two distances of a triplet. Written in the
// numerically stable logistic form
//   l = 1 / (1 + exp(d_neg - d_pos))
// which equals exp(d_pos) / (exp(d_pos) + exp(d_neg)) without ever forming
// exp of a large positive distance. l is 0.5 exactly when the distances tie
// and approaches 0 as the positive pair pulls ahead of the negative.
struct TripletLossValue {
  double l = 0.0;
  double d_pos = 0.0;
  double d_neg = 0.0;
};

inline TripletLossValue triplet_loss(double d_pos, double d_neg) {
  if (!(d_pos >= 0.0) || !(d_neg >= 0.0))
    throw ConstraintError("triplet_loss: distances must be non-negative");
  return {1.0 / (1.0 + std::exp(d_neg - d_pos)), d_pos, d_neg};
}

struct TripletLossGrad {
  double dd_pos = 0.0;
  double dd_neg = 0.0;
};

// dl/dd_pos = l(1-l), dl/dd_neg = -l(1-l). Saturated triplets (l near 0 or 1)
// contribute nearly nothing, which is what caps runaway updates.
inline TripletLossGrad triplet_loss_backward(const TripletLossValue& v) {
  const double g = v.l * (1.0 - v.l);
  return {g, -g};
}

// Cross-batch estimate of the expected weighted loss
//   L_N = (k * p * l + (1 - k) * sigma_{N-1} * L_{N-1}) / sigma_N
//   sigma_N = k * p + (1 - k) * sigma_{N-1}
// where p is the triplet weight in p/k units. L is the moving target the
// selector gradients compare each sample's loss against.
struct RunningLossState {
  double L = 0.0;
  double sigma = 0.0;
  std::uint64_t count = 0;
  double k = 0.1;
};

inline double running_loss_update(RunningLossState& st, double p, double l) {
  if (!(p > 0.0)) throw ConstraintError("running_loss_update: weight must be positive");
  if (st.count == 0) {
    st.L = l;
    st.sigma = p;
  } else {
    // Incremental form of L = (k p l + (1-k) sigma L) / sigma_next: at the
    // fixed point L == l the correction term is exactly zero, so a constant
    // stream holds L bit-for-bit.
    const double sigma_next = st.k * p + (1.0 - st.k) * st.sigma;
    st.L += (st.k * p / sigma_next) * (l - st.L);
    st.sigma = sigma_next;
  }
  st.count += 1;
  return st.L;
}

// Current loss level, only defined once at least one update has happened.
inline double running_loss_level(const RunningLossState& st) {
  if (st.count == 0)
    throw OrderingError("running loss read before any update; forward the batch first");
  return st.L;
}

// Scales a gradient block to the given reference Euclidean norm. A zero
// block is returned unchanged (there is no direction to rescale).
inline void rescale_gradient_block(GradientBlock& block, double reference_norm) {
  if (!(reference_norm >= 0.0))
    throw ConstraintError("rescale_gradient_block: reference norm must be >= 0");
  const double n = block_norm(block);
  if (n == 0.0) return;
  const double s = reference_norm / n;
  for (double& x : block) x *= s;
}

}  // namespace crossview
