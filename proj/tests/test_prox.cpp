#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tadmm/prox.hpp"

using namespace tadmm;

namespace {

struct Sample {
  double z, delta, label, mu;
};

std::vector<Sample> samples(std::size_t count, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> uz(-6.0, 6.0), ulog(std::log(0.01), std::log(10.0)),
      umu(0.0, 3.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back({uz(gen), std::exp(ulog(gen)), coin(gen) ? 1.0 : -1.0, umu(gen)});
  return out;
}

double radius(const Sample& s) { return s.delta * std::max(1.0, s.mu) + 1.0; }

}  // namespace

TEST(ProxL1, ClosedForm) {
  EXPECT_EQ(prox_l1(Vector{3, -3}, 1.0, 1.0), (Vector{2, -2}));
  const Vector z{0.3, -1.7, 4.0};
  EXPECT_EQ(prox_l1(z, 2.5, 0.0), z);
}

TEST(ProxL1, MatchesOneDimensionalOracle) {
  for (const auto& s : samples(200, 1)) {
    const double got = prox_l1(Vector{s.z}, s.delta, s.mu)[0];
    const double mu = s.mu;
    const double want = oracle::prox_1d([mu](long double y) { return mu * std::fabs(y); }, s.z,
                                        s.delta, radius(s));
    EXPECT_NEAR(got, want, 1e-6);
  }
}

TEST(ProxHinge, ClosedFormCases) {
  EXPECT_EQ(prox_hinge(Vector{2.0}, Vector{1.0}, 0.7)[0], 2.0);
  EXPECT_DOUBLE_EQ(prox_hinge(Vector{0.0}, Vector{1.0}, 0.5)[0], 0.5);
  for (double delta : {0.1, 1.0, 10.0}) EXPECT_EQ(prox_hinge(Vector{-3.0}, Vector{-1.0}, delta)[0], -3.0);
  const double oracle_val = oracle::prox_1d(
      [](long double y) { return std::max(1.0L - y, 0.0L); }, 0.0, 0.5, 2.0);
  EXPECT_NEAR(oracle_val, 0.5, 1e-6);
}

TEST(ProxHinge, MatchesOneDimensionalOracle) {
  for (const auto& s : samples(200, 2)) {
    const double l = s.label;
    const double got = prox_hinge(Vector{s.z}, Vector{l}, s.delta)[0];
    const double want = oracle::prox_1d(
        [l](long double y) { return std::max(1.0L - l * y, 0.0L); }, s.z, s.delta, radius(s));
    EXPECT_NEAR(got, want, 1e-6);
  }
}

TEST(ProxHinge, RejectsBadLabels) {
  EXPECT_THROW(prox_hinge(Vector{1.0}, Vector{0.5}, 1.0), Error);
  EXPECT_THROW(prox_hinge(Vector{1.0, 2.0}, Vector{1.0}, 1.0), DimensionError);
  EXPECT_THROW(prox_hinge(Vector{1.0}, Vector{1.0}, 0.0), Error);
}

TEST(ProxLogistic, FixedPointAtOrigin) {
  const double y = prox_logistic(Vector{0.0}, Vector{1.0}, 1.0)[0];
  const double want = oracle::prox_logistic_bisect(0.0, 1.0, 1.0);
  EXPECT_NEAR(y, want, 1e-10);
  EXPECT_NEAR(y, 1.0 / (1.0 + std::exp(y)), 1e-10);
  EXPECT_NEAR(y, 0.4011, 5e-5);
}

TEST(ProxLogistic, LargeInputIsNearlyIdentity) {
  EXPECT_LE(std::abs(prox_logistic(Vector{50.0}, Vector{1.0}, 1.0)[0] - 50.0), 1e-8);
}

TEST(ProxLogistic, LabelSymmetry) {
  for (const auto& s : samples(100, 3)) {
    const double a = prox_logistic(Vector{s.z}, Vector{-1.0}, s.delta)[0];
    const double b = prox_logistic(Vector{-s.z}, Vector{1.0}, s.delta)[0];
    EXPECT_EQ(a, -b);
  }
}

TEST(ProxLogistic, GradientToleranceAndOracle) {
  for (const auto& s : samples(200, 4)) {
    const double y = prox_logistic(Vector{s.z}, Vector{s.label}, s.delta)[0];
    const double grad = -s.label / (1.0 + std::exp(s.label * y)) + (y - s.z) / s.delta;
    EXPECT_LE(std::abs(grad), 1e-10) << "z=" << s.z << " delta=" << s.delta;
    EXPECT_NEAR(y, oracle::prox_logistic_bisect(s.z, s.label, s.delta), 1e-9);
  }
}

TEST(ProxLogistic, LargeDeltaStillSolved) {
  for (double delta : {50.0, 1e3, 1e5}) {
    const double y = prox_logistic(Vector{-2.0}, Vector{1.0}, delta)[0];
    EXPECT_NEAR(y, oracle::prox_logistic_bisect(-2.0, 1.0, delta), 1e-8 * delta);
  }
}

TEST(ProxLogistic, LargeDeltaSweep) {
  for (double delta : {20.0, 80.0, 400.0}) {
    for (double z = -40.0; z <= 40.0; z += 0.0173) {
      const double y = prox_logistic_scalar(z, 1.0, delta);
      EXPECT_NEAR(y, oracle::prox_logistic_bisect(z, 1.0, delta), 1e-9 * delta)
          << "z=" << z << " delta=" << delta;
    }
  }
}

TEST(ProxQuadratic, ClosedForm) {
  const Vector z{1.0, -2.0};
  const Vector zero{0.0, 0.0};
  const Vector got = prox_quadratic(z, zero, 3.0);
  EXPECT_DOUBLE_EQ(got[0], 0.25);
  EXPECT_DOUBLE_EQ(got[1], -0.5);
  EXPECT_EQ(prox_quadratic(Vector{1.0}, Vector{1.0}, 1.0)[0], 0.0);
  EXPECT_THROW(prox_quadratic(z, Vector{1.0}, 1.0), DimensionError);
}

TEST(ProxQuadratic, MatchesOneDimensionalOracle) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  for (const auto& s : samples(200, 5)) {
    const double b = nd(gen);
    const double got = prox_quadratic(Vector{s.z}, Vector{b}, s.delta)[0];
    const double want = oracle::prox_1d(
        [b](long double y) { return 0.5L * (y + b) * (y + b); }, s.z, s.delta,
        std::abs(s.z) + std::abs(b) + 1.0);
    EXPECT_NEAR(got, want, 1e-8);
  }
}

TEST(ProjectLinf, Clamp) {
  EXPECT_EQ(project_linf(Vector{2.0, -0.5}, 1.0), (Vector{1.0, -0.5}));
  EXPECT_EQ(project_linf(Vector{2.0, -0.5}, 0.0), (Vector{0.0, 0.0}));
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd(0.0, 3.0);
  Vector z(50);
  for (double& v : z) v = nd(gen);
  const Vector once = project_linf(z, 1.3);
  EXPECT_EQ(project_linf(once, 1.3), once);
}

TEST(SeparableProx, NeverWorseThanStayingPut) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd(0.0, 2.0);
  const std::size_t n = 40;
  Vector labels(n), offsets(n), z(n);
  for (std::size_t k = 0; k < n; ++k) {
    labels[k] = k % 3 == 0 ? -1.0 : 1.0;
    offsets[k] = nd(gen);
    z[k] = nd(gen);
  }
  const std::vector<SeparableProx> kinds{SeparableProx::l1(0.7), SeparableProx::hinge(labels, 2.0),
                                         SeparableProx::logistic(labels),
                                         SeparableProx::quadratic(offsets),
                                         SeparableProx::linf_ball(1.5), SeparableProx::zero()};
  const Vector inside = project_linf(z, 1.5);
  for (const auto& f : kinds) {
    for (double delta : {0.05, 1.0, 7.0}) {
      const Vector& start = f.kind() == ProxKind::linf_projection ? inside : z;
      const Vector p = f.prox(start, delta);
      const double lhs = f.value(p) + dist_sq(p, start) / (2.0 * delta);
      EXPECT_LE(lhs, f.value(start) + 1e-12) << to_string(f.kind());
    }
  }
}

TEST(SeparableProx, NonExpansive) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0.0, 3.0);
  const std::size_t n = 30;
  Vector labels(n), offsets(n);
  for (std::size_t k = 0; k < n; ++k) {
    labels[k] = k % 2 ? -1.0 : 1.0;
    offsets[k] = nd(gen);
  }
  const std::vector<SeparableProx> kinds{SeparableProx::l1(0.4), SeparableProx::hinge(labels, 1.0),
                                         SeparableProx::logistic(labels),
                                         SeparableProx::quadratic(offsets),
                                         SeparableProx::linf_ball(1.0)};
  for (int trial = 0; trial < 50; ++trial) {
    Vector a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = nd(gen);
      b[k] = nd(gen);
    }
    for (const auto& f : kinds) {
      const double delta = 0.1 + trial * 0.2;
      EXPECT_LE(norm2(subtract(f.prox(a, delta), f.prox(b, delta))), norm2(subtract(a, b)) + 1e-12);
    }
  }
}

TEST(SeparableProx, CoordinateWise) {
  const Vector labels{1, -1, 1, -1};
  const auto f = SeparableProx::logistic(labels);
  const Vector z{0.3, -2.0, 1.0, 4.0};
  Vector z2 = z;
  z2[2] = -7.0;
  const Vector a = f.prox(z, 0.8), b = f.prox(z2, 0.8);
  for (std::size_t k : {0u, 1u, 3u}) EXPECT_EQ(a[k], b[k]);
}

TEST(SeparableProx, HingeUsesScaledDelta) {
  const Vector labels{1.0};
  const auto f = SeparableProx::hinge(labels, 3.0);
  EXPECT_EQ(f.prox(Vector{0.0}, 0.25)[0], prox_hinge(Vector{0.0}, labels, 0.75)[0]);
}

TEST(Logistic, GradientIsQuarterLipschitz) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = nd(gen), b = nd(gen);
    EXPECT_LE(std::abs(sigmoid_neg(a) - sigmoid_neg(b)), 0.25 * std::abs(a - b) + 1e-15);
  }
  EXPECT_EQ(SeparableProx::logistic(Vector{1.0}).gradient_lipschitz(), 0.25);
  EXPECT_EQ(SeparableProx::quadratic(Vector{0.0}).gradient_lipschitz(), 1.0);
}

TEST(Logistic, StableLossEvaluation) {
  EXPECT_NEAR(logistic_loss(800.0), 0.0, 1e-300);
  EXPECT_NEAR(logistic_loss(-800.0), 800.0, 1e-9);
  EXPECT_TRUE(std::isfinite(sigmoid_neg(-1000.0)));
  EXPECT_TRUE(std::isfinite(sigmoid_neg(1000.0)));
}

TEST(Lookup, GridPointsAreExact) {
  const auto t = build_lookup(0.5);
  for (std::size_t i : {0u, 17u, 30000u, static_cast<unsigned>(t.size() - 1)}) {
    const double z = t.grid_point(i);
    EXPECT_EQ(eval_lookup(t, z, 1.0), t.stored(i));
    EXPECT_EQ(t.stored(i), prox_logistic_positive(z, 0.5));
  }
}

TEST(Lookup, OutsideRangeFallsBack) {
  const auto t = build_lookup(2.0);
  for (double z : {-45.0, 31.0, 1e4})
    for (double l : {-1.0, 1.0})
      EXPECT_EQ(eval_lookup(t, z, l), prox_logistic_scalar(z, l, 2.0));
}

TEST(Lookup, RandomQueriesWithinTolerance) {
  const auto t = build_lookup(1.0);
  EXPECT_LE(t.validated_error(), kLookupTolerance);
  std::mt19937_64 gen(10);
  std::uniform_real_distribution<double> uz(-30.0, 30.0);
  for (int i = 0; i < 10000; ++i) {
    const double z = uz(gen);
    const double l = i % 2 ? 1.0 : -1.0;
    EXPECT_LE(std::abs(eval_lookup(t, z, l) - prox_logistic_scalar(z, l, 1.0)), 1e-6);
  }
}

TEST(Lookup, BuildsForLargeDelta) {
  for (double delta : {20.0, 80.0}) {
    const auto t = build_lookup(delta);
    EXPECT_LE(t.validated_error(), kLookupTolerance);
    for (double z = -29.0; z < 29.0; z += 0.731)
      EXPECT_LE(std::abs(eval_lookup(t, z, 1.0) - prox_logistic_scalar(z, 1.0, delta)), 1e-6);
  }
}

TEST(Lookup, InvalidGrid) {
  EXPECT_THROW(build_lookup(1.0, 1.0, -1.0), Error);
  EXPECT_THROW(build_lookup(1.0, -1.0, 1.0, 0.0), Error);
  EXPECT_THROW(build_lookup(0.0), Error);
}

TEST(Lookup, UsedOnlyForMatchingDelta) {
  const Vector labels{1.0, -1.0};
  auto f = SeparableProx::logistic(labels);
  f.set_lookup(std::make_shared<const ProxLookupTable>(build_lookup(1.0)));
  const Vector z{0.1234567, -3.3};
  EXPECT_EQ(f.prox(z, 2.0), prox_logistic(z, labels, 2.0));
  const Vector via = f.prox(z, 1.0);
  const Vector exact = prox_logistic(z, labels, 1.0);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(via[k], exact[k], 1e-6);
}
