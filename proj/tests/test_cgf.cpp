#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "recdev/cgf.hpp"

using namespace recdev;

namespace {

cgf_spec gaussian_spec(scaling_sequence v, double c = 1.0, double a = 0.3) {
  return {builtin_kernel("gaussian", 1), bandwidth_schedule(bandwidth_kind::power, c, a), v,
          multi_index({0}), {0.0}, true_density::standard_gaussian(1)};
}

}  // namespace

TEST(Cgf, ZeroAtOrigin) {
  const auto spec = gaussian_spec(scaling_sequence::constant());
  EXPECT_EQ(cgf_finite_n(spec, 0.0, 50), 0.0);
  EXPECT_EQ(cgf_limit(spec, 0.0), 0.0);
  const auto mdp = gaussian_spec(scaling_sequence::power(0.1));
  EXPECT_EQ(cgf_limit(mdp, 0.0), 0.0);
  for (const auto& row : convergence_diagnostic(spec, 0.0, {10, 100})) EXPECT_EQ(row.abs_error, 0.0);
}

TEST(Cgf, SingleTermMatchesDirectIntegral) {
  const auto spec = gaussian_spec(scaling_sequence::constant(), 0.5);
  const double h = 0.5;
  const double x = 0.0;
  for (double u : {-2.0, -0.5, 0.7, 3.0}) {
    auto K = [&](double y) { return oracle::gauss_pdf((x - y) / h); };
    const double mgf = oracle::simpson([&](double y) { return std::exp(u * K(y)) * oracle::gauss_pdf(y); }, -12, 12, 40000);
    const double mean = oracle::simpson([&](double y) { return K(y) * oracle::gauss_pdf(y); }, -12, 12, 40000);
    const double direct = (std::log(mgf) - u * mean) / h;
    EXPECT_NEAR(cgf_finite_n(spec, u, 1), direct, 1e-10 * std::max(1.0, std::abs(direct))) << u;
  }
}

TEST(Cgf, ConvexInU) {
  for (const auto& spec : {gaussian_spec(scaling_sequence::constant()), gaussian_spec(scaling_sequence::power(0.1))}) {
    const double lm = cgf_finite_n(spec, -1.0, 100);
    const double l0 = cgf_finite_n(spec, 0.0, 100);
    const double lp = cgf_finite_n(spec, 1.0, 100);
    EXPECT_GE(lm + lp, 2.0 * l0);
    EXPECT_GT(lp, 0.0);
    EXPECT_GT(lm, 0.0);
  }
}

TEST(Cgf, QuadraticLimitExample) {
  const cgf_spec spec{builtin_kernel("gaussian", 1), bandwidth_schedule(bandwidth_kind::power, 1.0, 0.5),
                      scaling_sequence::power(0.1), multi_index({0}), {0.0},
                      true_density::uniform_box({-0.5}, {0.5})};
  const double l2 = oracle::simpson([](double z) { return std::pow(oracle::gauss_pdf(z), 2); }, -12, 12);
  EXPECT_NEAR(cgf_limit(spec, 1.0), l2 / 1.5, 1e-12);
  EXPECT_NEAR(cgf_limit(spec, 1.0), 0.18806, 1e-5);
}

TEST(Cgf, LdpLimitIsNonNegative) {
  const auto spec = gaussian_spec(scaling_sequence::constant());
  for (double u : {-3.0, -1.0, -0.1, 0.2, 1.0, 2.5}) EXPECT_GE(cgf_limit(spec, u), 0.0);
}

TEST(Cgf, RegimeSelection) {
  EXPECT_TRUE(gaussian_spec(scaling_sequence::constant()).ldp_regime());
  EXPECT_FALSE(gaussian_spec(scaling_sequence::power(0.1)).ldp_regime());
  cgf_spec deriv = gaussian_spec(scaling_sequence::constant(), 1.0, 0.2);
  deriv.alpha = multi_index({1});
  EXPECT_FALSE(deriv.ldp_regime());
  const double l2 = builtin_kernel("gaussian", 1).l2_norm_sq(multi_index({1}));
  EXPECT_NEAR(cgf_limit(deriv, 1.0), oracle::gauss_pdf(0.0) * l2 / (2.0 * (1.0 - 0.04 * 9.0)), 1e-14);
}

TEST(Cgf, ConstantDensityConverges) {
  const cgf_spec spec{builtin_kernel("epanechnikov", 1), bandwidth_schedule(bandwidth_kind::power, 0.2, 0.3),
                      scaling_sequence::constant(), multi_index({0}), {0.5},
                      true_density::uniform_box({0.0}, {1.0})};
  const auto rows = convergence_diagnostic(spec, 0.5, {100, 10000});
  EXPECT_LT(rows[1].abs_error, rows[0].abs_error);
}

TEST(Cgf, MdpRegimeConverges) {
  const auto spec = gaussian_spec(scaling_sequence::power(0.1));
  const auto rows = convergence_diagnostic(spec, 1.0, {100, 1000, 10000});
  EXPECT_LT(rows[1].abs_error, rows[0].abs_error);
  EXPECT_LT(rows[2].abs_error, rows[1].abs_error);
}

TEST(Cgf, DerivativeRegimeConverges) {
  cgf_spec spec = gaussian_spec(scaling_sequence::power(0.05), 1.0, 0.2);
  spec.alpha = multi_index({1});
  spec.x = {0.5};
  const auto rows = convergence_diagnostic(spec, 0.5, {100, 3000});
  EXPECT_LT(rows[1].abs_error, rows[0].abs_error);
}

TEST(Cgf, OverflowGuardAndErrors) {
  const auto spec = gaussian_spec(scaling_sequence::constant());
  EXPECT_THROW(cgf_finite_n(spec, 5000.0, 10), recdev::overflow_error);
  EXPECT_THROW(cgf_finite_n(spec, 1.0, 0), recdev::invalid_argument);
  EXPECT_THROW(convergence_diagnostic(spec, 1.0, {100, 10}), recdev::invalid_argument);
  auto bad = spec;
  bad.x = {0.0, 0.0};
  EXPECT_THROW(cgf_finite_n(bad, 1.0, 10), recdev::invalid_argument);
}

TEST(Cgf, RepeatedRunsAgree) {
  const auto spec = gaussian_spec(scaling_sequence::power(0.1));
  EXPECT_EQ(cgf_finite_n(spec, 0.8, 2000), cgf_finite_n(spec, 0.8, 2000));
}
