#include <cmath>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "recdev/ratefn.hpp"

using namespace recdev;

namespace {

const psi_evaluator& gaussian_quarter() {
  static const psi_evaluator ev(builtin_kernel("gaussian", 1), 0.25);
  return ev;
}

// I(t) by grid sup of u t - psi(u) over [lo, hi].
double grid_legendre(const psi_evaluator& ev, double t, double lo, double hi, int points = 4001) {
  std::vector<double> u(static_cast<std::size_t>(points));
  std::vector<double> g(u.size());
  for (int k = 0; k < points; ++k) {
    u[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (points - 1);
    g[static_cast<std::size_t>(k)] = ev.psi(u[static_cast<std::size_t>(k)]);
  }
  return oracle::grid_sup(u, g, t);
}

}  // namespace

TEST(RateValue, Semantics) {
  EXPECT_TRUE(rate_value::infinity().is_infinite());
  EXPECT_EQ(rate_value::infinity().to_string(), "inf");
  EXPECT_EQ(rate_value::of(-1e-18).value(), 0.0);
  EXPECT_THROW((void)rate_value::infinity().value(), recdev::invalid_argument);
  EXPECT_EQ(min(rate_value::infinity(), rate_value::of(2.0)).value(), 2.0);
  EXPECT_EQ(rate_value::of(0.5).to_string(), "0.5");
}

TEST(Psi, ZeroAndConvexityProbe) {
  const auto& ev = gaussian_quarter();
  EXPECT_EQ(ev.psi(0.0), 0.0);
  EXPECT_GE(ev.psi(1.0) + ev.psi(-1.0), 0.0);
}

TEST(Psi, MatchesMidpointOracle) {
  const auto& ev = gaussian_quarter();
  const double mid = oracle::psi_midpoint([](double z) { return oracle::gauss_pdf(z); }, 0.25, 1.0, 8.0);
  EXPECT_LT(std::abs(ev.psi(1.0) - mid) / std::abs(mid), 1e-6);
}

TEST(Psi, DerivativeValuesAndIdentities) {
  const psi_evaluator ev(builtin_kernel("gaussian", 1), 0.2);
  EXPECT_NEAR(ev.psi_prime(0.0), 1.25, 1e-12);
  const auto& q = gaussian_quarter();
  const double step = 1e-4;
  EXPECT_NEAR(q.psi_prime(0.7), (q.psi(0.7 + step) - q.psi(0.7 - step)) / (2 * step), 1e-6);
  EXPECT_NEAR(q.psi_second(0.7), (q.psi_prime(0.7 + step) - q.psi_prime(0.7 - step)) / (2 * step), 1e-6);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  for (int i = 0; i < 20; ++i) EXPECT_GT(q.psi_second(unif(rng)), 0.0);
  EXPECT_GE(q.psi(0.8), 0.8 / 0.75);
  EXPECT_GE(q.psi(-0.8), -0.8 / 0.75);
}

TEST(Psi, Preconditions) {
  EXPECT_THROW(psi_evaluator(builtin_kernel("gaussian", 1), 1.0), recdev::invalid_argument);
  EXPECT_THROW(psi_evaluator(builtin_kernel("gaussian", 2), 0.5), recdev::invalid_argument);
  EXPECT_NO_THROW(psi_evaluator(builtin_kernel("gaussian", 2), 0.2));
}

TEST(Legendre, MinimumAndBranches) {
  const auto& ev = gaussian_quarter();
  EXPECT_LE(ev.legendre(1.0 / 0.75).value(), 1e-10);
  EXPECT_TRUE(ev.legendre(-0.5).is_infinite());
  EXPECT_TRUE(ev.legendre(0.0).is_infinite());
  const psi_evaluator epa(builtin_kernel("epanechnikov", 1), 0.25);
  EXPECT_EQ(epa.legendre(0.0).value(), 2.0 / 0.75);
  EXPECT_TRUE(epa.legendre(-1e-3).is_infinite());
}

TEST(Legendre, MatchesGridSupAboveTheMean) {
  const auto& ev = gaussian_quarter();
  const double oracle_value = grid_legendre(ev, 2.0, 0.0, 3.0);
  EXPECT_NEAR(ev.legendre(2.0).value(), oracle_value, 1e-6);
  EXPECT_NEAR(grid_legendre(ev, 2.0, -3.0, 3.0), oracle_value, 1e-9);
}

TEST(Legendre, DerivativeIsInverseOfPsiPrime) {
  const auto& ev = gaussian_quarter();
  for (double t : {0.4, 1.0, 1.8, 2.6}) {
    const double h = 1e-4;
    const double fd = (ev.legendre(t + h).value() - ev.legendre(t - h).value()) / (2 * h);
    EXPECT_NEAR(fd, ev.psi_prime_inverse(t), 1e-5) << t;
    EXPECT_NEAR(ev.psi_prime(ev.psi_prime_inverse(t)), t, 1e-10);
  }
}

TEST(Legendre, StrictlyConvex) {
  const auto& ev = gaussian_quarter();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.2, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double s = unif(rng);
    const double t = unif(rng);
    if (std::abs(s - t) < 1e-2) continue;
    EXPECT_LT(ev.legendre(0.5 * (s + t)).value(),
              0.5 * (ev.legendre(s).value() + ev.legendre(t).value()));
  }
}

TEST(Legendre, SignedKernelHasFiniteRateBelowZero) {
  kernel_profile p;
  p.name = "fourth_order";
  p.eval = [](int, double t) { return 0.5 * (3.0 - t * t) * oracle::gauss_pdf(t); };
  p.radius = 10.0;
  p.moment_order = 4;
  p.positive_measure = 2.0 * std::sqrt(3.0);
  p.negative_measure = std::numeric_limits<double>::infinity();
  const psi_evaluator ev(kernel_model(p, 1), 0.25);
  const rate_value neg = ev.legendre(-0.1);
  ASSERT_TRUE(neg.finite());
  EXPECT_GT(neg.value(), 0.0);
  EXPECT_NEAR(neg.value(), grid_legendre(ev, -0.1, -20.0, 0.0), 1e-5);
}

TEST(PointwiseRate, Examples) {
  const auto& ev = gaussian_quarter();
  EXPECT_LE(pointwise_rate_density(ev, 0.3, 0.0).value(), 1e-10);
  EXPECT_TRUE(pointwise_rate_density(ev, 0.0, 0.3).is_infinite());
  EXPECT_EQ(pointwise_rate_density(ev, 0.0, 0.0).value(), 0.0);
  const double t_arg = 4.0 / 3.0 + 0.4 / 0.375;
  const double composed = 0.5 * 0.75 * grid_legendre(ev, t_arg, 0.0, 3.0);
  EXPECT_NEAR(pointwise_rate_density(ev, 0.5, 0.4).value(), composed, 1e-6);
}

TEST(QuadraticRate, Examples) {
  const double l2 = builtin_kernel("gaussian", 1).l2_norm_sq(multi_index({0}));
  EXPECT_EQ(quadratic_rate(1.0, 0.5, 1, 0, l2, 0.0).value(), 0.0);
  const double oracle_l2 = oracle::simpson([](double z) { return std::pow(oracle::gauss_pdf(z), 2); }, -12, 12);
  EXPECT_NEAR(quadratic_rate(1.0, 0.5, 1, 0, l2, 1.0).value(), 0.75 / (2 * oracle_l2), 1e-12);
  EXPECT_NEAR(0.75 / (2 * oracle_l2), 1.3294, 1e-4);
  for (double t : {0.1, 0.7, 3.0}) {
    EXPECT_EQ(quadratic_rate(0.4, 0.3, 1, 1, 0.2, t), quadratic_rate(0.4, 0.3, 1, 1, 0.2, -t));
  }
  EXPECT_TRUE(quadratic_rate(0.0, 0.3, 1, 0, l2, 0.1).is_infinite());
}

TEST(UniformRate, QuadraticAndLdpModes) {
  const double l2 = builtin_kernel("gaussian", 1).l2_norm_sq(multi_index({0}));
  const uniform_rate_spec quad_spec{0.4, 0.3, 1, 0, uniform_mode::quadratic};
  const auto z = uniform_rate(quad_spec, nullptr, l2, 0.0);
  EXPECT_EQ(z.g_tilde.value(), 0.0);
  const auto r = uniform_rate(quad_spec, nullptr, l2, 0.2);
  EXPECT_EQ(r.g_tilde, r.g_plus);
  EXPECT_EQ(r.g_plus, r.g_minus);

  const auto& ev = gaussian_quarter();
  const uniform_rate_spec ldp{0.3, 0.25, 1, 0, uniform_mode::ldp_density};
  const auto big = uniform_rate(ldp, &ev, l2, 0.35);
  EXPECT_TRUE(big.g_minus.is_infinite());
  EXPECT_TRUE(big.g_tilde.finite());
  EXPECT_EQ(big.g_tilde, big.g_plus);
  const auto small = uniform_rate(ldp, &ev, l2, 0.1);
  EXPECT_TRUE(small.g_minus.finite());
  EXPECT_THROW(uniform_rate(ldp, nullptr, l2, 0.1), recdev::invalid_argument);
  const uniform_rate_spec bad{0.3, 0.25, 1, 1, uniform_mode::ldp_density};
  EXPECT_THROW(uniform_rate(bad, &ev, l2, 0.1), recdev::invalid_argument);
}

TEST(UniformRate, MonotoneAwayFromZero) {
  const auto& ev = gaussian_quarter();
  const double l2 = builtin_kernel("gaussian", 1).l2_norm_sq(multi_index({0}));
  const uniform_rate_spec ldp{0.3, 0.25, 1, 0, uniform_mode::ldp_density};
  double prev = 0.0;
  for (double d = 0.05; d < 1.0; d += 0.1) {
    const double g = g_uniform(ldp, &ev, l2, d).value();
    EXPECT_GT(g, prev);
    prev = g;
  }
  prev = 0.0;
  for (double d = 0.05; d < 0.29; d += 0.05) {
    const double g = g_uniform(ldp, &ev, l2, -d).value();
    EXPECT_GT(g, prev);
    prev = g;
  }
}

TEST(Phi, DualityIdentity) {
  const auto& ev = gaussian_quarter();
  const double l2 = builtin_kernel("gaussian", 1).l2_norm_sq(multi_index({0}));
  const uniform_rate_spec ldp{0.3, 0.25, 1, 0, uniform_mode::ldp_density};
  for (double delta : {0.05, 0.2, 0.6}) {
    const double u = phi_maximizer(ldp, &ev, l2, delta);
    EXPECT_GT(u, 0.0);
    const double lhs = u * delta - uniform_cgf_limit(ldp, &ev, l2, u);
    EXPECT_NEAR(lhs, g_uniform(ldp, &ev, l2, delta).value(), 1e-8);
    const auto lo = phi_maximizer_lower(ldp, &ev, l2, std::min(delta, 0.25));
    ASSERT_TRUE(lo.has_value());
    EXPECT_LT(*lo, 0.0);
  }
  EXPECT_FALSE(phi_maximizer_lower(ldp, &ev, l2, 0.31).has_value());

  const uniform_rate_spec quad_spec{0.4, 0.3, 1, 0, uniform_mode::quadratic};
  EXPECT_NEAR(phi_maximizer(quad_spec, nullptr, l2, 1e-12), 0.0, 1e-10);
  const double u = phi_maximizer(quad_spec, nullptr, l2, 0.2);
  EXPECT_NEAR(u * 0.2 - uniform_cgf_limit(quad_spec, nullptr, l2, u), g_uniform(quad_spec, nullptr, l2, 0.2).value(), 1e-12);
  EXPECT_THROW(phi_maximizer(quad_spec, nullptr, l2, 0.0), recdev::invalid_argument);
}

TEST(Concurrency, ParallelCallsMatchSerial) {
  const auto& ev = gaussian_quarter();
  std::vector<double> serial;
  for (int k = 0; k < 8; ++k) serial.push_back(ev.psi(0.3 * k - 1.0));
  std::vector<double> parallel(8);
  std::vector<std::thread> pool;
  for (int k = 0; k < 8; ++k) pool.emplace_back([&, k] { parallel[static_cast<std::size_t>(k)] = ev.psi(0.3 * k - 1.0); });
  for (auto& t : pool) t.join();
  EXPECT_EQ(serial, parallel);
}
