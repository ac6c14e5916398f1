#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crossview/rng.hpp"
#include "crossview/selector.hpp"
#include "testutil.hpp"

using namespace crossview;

TEST_CASE("video softmax matches the naive reference") {
  Rng rng(21);
  const Vector scores = testutil::random_vector(9, rng, 2.0);
  const Vector p = video_softmax_exact(scores);
  const Vector want = testutil::ref_softmax(scores);
  REQUIRE(p.size() == want.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(std::fabs(p[i] - want[i]) < 1e-15);
    CHECK(p[i] > 0.0);
    total += p[i];
  }
  CHECK(std::fabs(total - 1.0) < 1e-12);
}

TEST_CASE("video softmax is shift invariant and survives large scores") {
  Rng rng(22);
  Vector scores = testutil::random_vector(6, rng, 3.0);
  const Vector base = video_softmax_exact(scores);
  Vector shifted = scores;
  for (double& s : shifted) s += 700.0;  // exp(700) overflows without max subtraction
  const Vector p = video_softmax_exact(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::fabs(p[i] - base[i]) < 1e-12);
  CHECK_THROWS_AS(video_softmax_exact({}), EmptyVideoError);
}

TEST_CASE("accumulator recursion matches its closed form") {
  // sigma_N = (1-k)^N * sigma_0 + k * sum_i (1-k)^(N-i) e_i, sigma_0 = e_1 here.
  const double k = 0.1;
  Rng rng(23);
  std::vector<double> raw;
  for (int i = 0; i < 12; ++i) raw.push_back(rng.uniform(-1.0, 1.0));

  VideoAccumulator acc;
  acc.k = k;
  std::vector<double> weights;
  for (double f : raw) weights.push_back(accumulator_update(acc, f, SigmaInit::FirstExponent));

  double sigma = std::exp(raw[0]);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double e = std::exp(raw[i]);
    sigma = k * e + (1.0 - k) * sigma;
    CHECK(std::fabs(weights[i] - e / sigma) < 1e-12);
  }
  CHECK(std::fabs(acc.sigma - sigma) < 1e-12);
  CHECK(acc.count == raw.size());
}

TEST_CASE("first observation carries weight exactly one under FirstExponent") {
  VideoAccumulator acc;
  CHECK(accumulator_update(acc, 0.37, SigmaInit::FirstExponent) == 1.0);
  VideoAccumulator hot;
  CHECK(accumulator_update(hot, 5.0, SigmaInit::FirstExponent) == 1.0);
}

TEST_CASE("One seeding starts the normalizer at unity instead") {
  VideoAccumulator acc;
  const double f = 0.37;
  const double w = accumulator_update(acc, f, SigmaInit::One);
  const double e = std::exp(f);
  const double sigma = acc.k * e + (1.0 - acc.k) * 1.0;
  CHECK(std::fabs(w - e / sigma) < 1e-15);
  CHECK(w != 1.0);
}

TEST_CASE("streaming weights approximate the exact softmax on a stationary video") {
  // After burn-in, sigma estimates the running mean of exp(f); the per-frame
  // weight e/sigma then tracks n * softmax within the smoothing tolerance.
  Rng rng(24);
  const std::size_t n = 400;
  Vector scores;
  for (std::size_t i = 0; i < n; ++i) scores.push_back(rng.uniform(-0.02, 0.02));
  const Vector exact = video_softmax_exact(scores);

  VideoAccumulator acc;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = accumulator_update(acc, scores[i], SigmaInit::FirstExponent);
    if (i < 50) continue;  // let the average settle
    const double target = exact[i] * static_cast<double>(n);
    worst = std::max(worst, std::fabs(w - target) / target);
  }
  CHECK(worst < 0.02);
}

TEST_CASE("triplet weight is the product of slot weights") {
  CHECK(triplet_weight(1.5, 2.0, 0.5) == 1.5);
  CHECK(triplet_weight(1.0, 1.0, 1.0) == 1.0);
}

TEST_CASE("selector gradient pushes scores toward informative samples") {
  // Below-average loss lowers the objective, so the score gradient is negative
  // (gradient descent then raises that sample's selection probability).
  CHECK(selector_gradient(0.2, 0.1, 0.5) < 0.0);
  CHECK(selector_gradient(0.2, 0.9, 0.5) > 0.0);
  CHECK(selector_gradient(0.2, 0.5, 0.5) == 0.0);
  CHECK(selector_gradient(0.3, 0.8, 0.5) == 0.3 * (0.8 - 0.5));
}

TEST_CASE("selector raw score and scaling") {
  SelectorHead head;
  head.weight = {0.5, -0.25};
  head.bias = 0.1;
  head.scale = 2.0;
  const Vector h = {1.0, 2.0};
  const double raw = selector_raw(head, h);
  CHECK(std::fabs(raw - (0.5 - 0.5 + 0.1)) < 1e-15);
  CHECK(selector_score(head, h) == scaled_tanh(raw, 2.0));
  CHECK_THROWS_AS(selector_raw(head, {1.0}), ShapeError);
}
