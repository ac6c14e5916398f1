#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "crossview/errors.hpp"

namespace crossview {

// All numerics in this library are IEEE double. Feature vectors, embeddings
// and parameter tensors are plain contiguous vectors; matrices are row major.
using Vector = std::vector<double>;

inline void check_finite(const Vector& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

// Fully connected layer, weight is out_dim x in_dim row major.
struct AffineLayer {
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  Vector weight;  // out_dim * in_dim
  Vector bias;    // out_dim
};

struct AffineGrad {
  Vector dweight;
  Vector dbias;
  Vector dinput;
};

inline void affine_check(const AffineLayer& layer, const Vector& input) {
  if (layer.weight.size() != layer.out_dim * layer.in_dim ||
      layer.bias.size() != layer.out_dim)
    throw ShapeError("affine layer storage does not match declared dims");
  if (input.size() != layer.in_dim)
    throw ShapeError("affine input has dim " + std::to_string(input.size()) +
                     ", layer expects " + std::to_string(layer.in_dim));
}

inline Vector affine_forward(const AffineLayer& layer, const Vector& input) {
  affine_check(layer, input);
  Vector out(layer.out_dim);
  for (std::size_t r = 0; r < layer.out_dim; ++r) {
    double acc = layer.bias[r];
    const double* w = layer.weight.data() + r * layer.in_dim;
    for (std::size_t c = 0; c < layer.in_dim; ++c) acc += w[c] * input[c];
    out[r] = acc;
  }
  return out;
}

// dweight = upstream (outer) input, dbias = upstream, dinput = W^T upstream.
inline AffineGrad affine_backward(const AffineLayer& layer, const Vector& input,
                                  const Vector& upstream) {
  affine_check(layer, input);
  if (upstream.size() != layer.out_dim)
    throw ShapeError("affine upstream has dim " + std::to_string(upstream.size()) +
                     ", layer expects " + std::to_string(layer.out_dim));
  AffineGrad g;
  g.dweight.assign(layer.out_dim * layer.in_dim, 0.0);
  g.dbias = upstream;
  g.dinput.assign(layer.in_dim, 0.0);
  for (std::size_t r = 0; r < layer.out_dim; ++r) {
    const double u = upstream[r];
    const double* w = layer.weight.data() + r * layer.in_dim;
    double* dw = g.dweight.data() + r * layer.in_dim;
    for (std::size_t c = 0; c < layer.in_dim; ++c) {
      dw[c] = u * input[c];
      g.dinput[c] += w[c] * u;
    }
  }
  return g;
}

inline double l2_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("l2_distance: dim mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

struct DistanceGrad {
  Vector da;
  Vector db;
};

// d(||a-b||)/da = (a-b)/||a-b||. At a == b the distance is not differentiable;
// the zero vector is used as the subgradient so updates stay finite.
inline DistanceGrad l2_distance_backward(const Vector& a, const Vector& b,
                                         double upstream) {
  if (a.size() != b.size()) throw ShapeError("l2_distance_backward: dim mismatch");
  DistanceGrad g;
  g.da.assign(a.size(), 0.0);
  g.db.assign(a.size(), 0.0);
  const double d = l2_distance(a, b);
  if (d == 0.0) return g;
  const double s = upstream / d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = s * (a[i] - b[i]);
    g.da[i] = diff;
    g.db[i] = -diff;
  }
  return g;
}

inline double scaled_tanh(double raw, double scale) {
  if (!(scale > 0.0)) throw ConstraintError("scaled_tanh requires scale > 0");
  return scale * std::tanh(raw);
}

struct ScaledTanhGrad {
  double draw = 0.0;
  double dscale = 0.0;
};

inline ScaledTanhGrad scaled_tanh_backward(double raw, double scale, double upstream) {
  if (!(scale > 0.0)) throw ConstraintError("scaled_tanh requires scale > 0");
  const double t = std::tanh(raw);
  return {upstream * scale * (1.0 - t * t), upstream * t};
}

// Flat gradient storage congruent with a flat parameter vector.
using GradientBlock = Vector;

inline double block_norm(const GradientBlock& g) {
  double acc = 0.0;
  for (double x : g) acc += x * x;
  return std::sqrt(acc);
}

inline void block_axpy(GradientBlock& y, double alpha, const GradientBlock& x) {
  if (y.size() != x.size()) throw ShapeError("block_axpy: size mismatch");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

// Central-difference gradient verification. `objective` must be a pure
// function of `params` (read through the same storage being perturbed).
// Returns the worst relative error max|analytic - fd| / max(1, |analytic|).
inline double finite_difference_check(const std::function<double()>& objective,
                                      Vector& params, const Vector& analytic,
                                      double eps = 1e-4) {
  if (params.size() != analytic.size())
    throw ShapeError("finite_difference_check: analytic gradient size mismatch");
  if (!(eps > 0.0)) throw ConstraintError("finite_difference_check requires eps > 0");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = objective();
    params[i] = saved - eps;
    const double down = objective();
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_difference_check: objective returned non-finite value");
    const double fd = (up - down) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace crossview
