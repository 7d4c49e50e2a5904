#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "recdev/error.hpp"
#include "recdev/quadrature.hpp"

namespace recdev {

/// A d-uplet of derivative orders [alpha] = (alpha_1, ..., alpha_d).
class multi_index {
 public:
  explicit multi_index(std::vector<int> components) : alpha_(std::move(components)) {
    if (alpha_.empty()) throw invalid_argument("multi_index: dimension must be >= 1");
    for (int a : alpha_) {
      if (a < 0) throw invalid_argument("multi_index: components must be non-negative");
    }
  }

  static multi_index zero(int d) {
    if (d < 1) throw invalid_argument("multi_index: dimension must be >= 1");
    return multi_index(std::vector<int>(static_cast<std::size_t>(d), 0));
  }

  [[nodiscard]] int dimension() const { return static_cast<int>(alpha_.size()); }
  [[nodiscard]] int order() const { return std::accumulate(alpha_.begin(), alpha_.end(), 0); }
  [[nodiscard]] int operator[](std::size_t j) const { return alpha_[j]; }
  [[nodiscard]] std::span<const int> components() const { return alpha_; }

  bool operator==(const multi_index&) const = default;

 private:
  std::vector<int> alpha_;
};

/// One-dimensional kernel profile k; the d-dimensional kernel is the
/// product K(z) = k(z_1) ... k(z_d).
struct kernel_profile {
  std::string name;
  /// eval(m, t) returns the m-th derivative k^{(m)}(t).
  std::function<double(int, double)> eval;
  int max_order = 0;
  /// |k^{(m)}(t)| is below 1e-17 for |t| > radius, for every supported m.
  double radius = 1.0;
  /// q such that the moments of order 1..q-1 vanish.
  int moment_order = 2;
  /// Lebesgue measures of {k > 0} and {k < 0} on the real line.
  double positive_measure = 0.0;
  double negative_measure = 0.0;
  /// Optional closed forms indexed by derivative order; NaN means "use quadrature".
  std::vector<double> l2_closed_form{};
};

/// Kernel K together with the analytic constants consumed by the rate
/// functions. Immutable after construction.
class kernel_model {
 public:
  kernel_model(kernel_profile profile, int d) : profile_(std::move(profile)), d_(d) {
    if (d_ < 1) throw invalid_argument("kernel dimension must be >= 1");
    if (!profile_.eval) throw invalid_argument("kernel profile has no evaluator");
    if (profile_.max_order < 0 || profile_.radius <= 0.0) {
      throw invalid_argument("kernel profile has invalid order or radius");
    }
    const quad::options tight{1e-13, 1e-13, 4000};
    const double r = profile_.radius;
    for (int m = 0; m <= profile_.max_order; ++m) {
      const double closed = m < static_cast<int>(profile_.l2_closed_form.size())
                                ? profile_.l2_closed_form[static_cast<std::size_t>(m)]
                                : std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(closed)) {
        l2_1d_.push_back(closed);
      } else {
        l2_1d_.push_back(quad::integrate(
                             [&](double t) {
                               const double v = profile_.eval(m, t);
                               return v * v;
                             },
                             -r, r, tight)
                             .value);
      }
      sup_1d_.push_back(profile_sup(m));
    }
    mass_1d_ = quad::integrate([&](double t) { return profile_.eval(0, t); }, -r, r, tight).value;
    init_support_measures();
  }

  [[nodiscard]] const std::string& name() const { return profile_.name; }
  [[nodiscard]] int dimension() const { return d_; }
  [[nodiscard]] int moment_order() const { return profile_.moment_order; }
  [[nodiscard]] double support_radius() const { return profile_.radius; }
  [[nodiscard]] double positive_support_measure() const { return positive_measure_; }
  [[nodiscard]] double negative_support_measure() const { return negative_measure_; }
  [[nodiscard]] bool nonnegative() const { return negative_measure_ == 0.0; }
  [[nodiscard]] int max_order_per_coordinate() const { return profile_.max_order; }

  /// k^{(m)}(t) of the one-dimensional profile.
  [[nodiscard]] double profile(int order, double t) const { return profile_.eval(order, t); }

  [[nodiscard]] double eval(std::span<const double> z) const {
    check_point(z);
    double v = 1.0;
    for (double t : z) v *= profile_.eval(0, t);
    return v;
  }

  [[nodiscard]] double deriv_eval(const multi_index& alpha, std::span<const double> z) const {
    require_supported(alpha);
    check_point(z);
    double v = 1.0;
    for (std::size_t j = 0; j < z.size(); ++j) v *= profile_.eval(alpha[j], z[j]);
    return v;
  }

  [[nodiscard]] bool supports(const multi_index& alpha) const {
    if (alpha.dimension() != d_) return false;
    return std::ranges::all_of(alpha.components(),
                               [&](int a) { return a <= profile_.max_order; });
  }

  void require_supported(const multi_index& alpha) const {
    if (alpha.dimension() != d_) {
      throw invalid_argument("multi-index dimension " + std::to_string(alpha.dimension()) +
                             " does not match kernel dimension " + std::to_string(d_));
    }
    if (!supports(alpha)) {
      throw invalid_argument("kernel '" + profile_.name + "' is not differentiable to order " +
                             std::to_string(profile_.max_order + 1) + " in a coordinate");
    }
  }

  /// ||d^[alpha] K||_inf
  [[nodiscard]] double sup_norm(const multi_index& alpha) const {
    require_supported(alpha);
    double v = 1.0;
    for (int a : alpha.components()) v *= sup_1d_[static_cast<std::size_t>(a)];
    return v;
  }

  /// Integral of [d^[alpha] K]^2 over R^d.
  [[nodiscard]] double l2_norm_sq(const multi_index& alpha) const {
    require_supported(alpha);
    double v = 1.0;
    for (int a : alpha.components()) v *= l2_1d_[static_cast<std::size_t>(a)];
    return v;
  }

  /// Integral of K over R^d (one up to quadrature error).
  [[nodiscard]] double mass() const { return std::pow(mass_1d_, d_); }

 private:
  void check_point(std::span<const double> z) const {
    if (static_cast<int>(z.size()) != d_) {
      throw invalid_argument("point has dimension " + std::to_string(z.size()) +
                             ", kernel expects " + std::to_string(d_));
    }
  }

  double profile_sup(int m) const {
    constexpr int samples = 20000;
    const double r = profile_.radius;
    const double step = 2.0 * r / samples;
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i <= samples; ++i) {
      const double v = std::abs(profile_.eval(m, -r + i * step));
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    // Golden-section refinement of |k^{(m)}| around the best sample.
    double lo = -r + std::max(best - 1, 0) * step;
    double hi = -r + std::min(best + 1, samples) * step;
    constexpr double inv_phi = 0.6180339887498949;
    auto g = [&](double t) { return std::abs(profile_.eval(m, t)); };
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double g1 = g(x1);
    double g2 = g(x2);
    for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
      if (g1 < g2) {
        lo = x1;
        x1 = x2;
        g1 = g2;
        x2 = lo + inv_phi * (hi - lo);
        g2 = g(x2);
      } else {
        hi = x2;
        x2 = x1;
        g2 = g1;
        x1 = hi - inv_phi * (hi - lo);
        g1 = g(x1);
      }
    }
    return std::max({best_val, g1, g2});
  }

  // For a product kernel, a point lies in S_- iff an odd number of its
  // coordinates fall in the 1-D negative set.
  void init_support_measures() {
    const double p = profile_.positive_measure;
    const double m = profile_.negative_measure;
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (m == 0.0) {
      positive_measure_ = std::pow(p, d_);
      negative_measure_ = 0.0;
    } else if (d_ == 1) {
      positive_measure_ = p;
      negative_measure_ = m;
    } else if (std::isfinite(p) && std::isfinite(m)) {
      positive_measure_ = 0.5 * (std::pow(p + m, d_) + std::pow(p - m, d_));
      negative_measure_ = 0.5 * (std::pow(p + m, d_) - std::pow(p - m, d_));
    } else {
      positive_measure_ = inf;
      negative_measure_ = inf;
    }
  }

  kernel_profile profile_;
  int d_;
  std::vector<double> l2_1d_;
  std::vector<double> sup_1d_;
  double mass_1d_ = 1.0;
  double positive_measure_ = 0.0;
  double negative_measure_ = 0.0;
};

namespace profiles {

/// Probabilists' Hermite polynomial He_m(t).
inline double hermite(int m, double t) {
  double prev = 1.0;
  if (m == 0) return prev;
  double cur = t;
  for (int k = 1; k < m; ++k) {
    const double next = t * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

inline kernel_profile gaussian() {
  kernel_profile p;
  p.name = "gaussian";
  p.eval = [](int m, double t) {
    const double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
    const double sign = (m % 2 == 0) ? 1.0 : -1.0;
    return sign * hermite(m, t) * phi;
  };
  p.max_order = 4;
  p.radius = 9.0;
  p.moment_order = 2;
  p.positive_measure = std::numeric_limits<double>::infinity();
  p.negative_measure = 0.0;
  // Integral of (phi^{(m)})^2 = (2m)! / (m! 2^{2m+1} sqrt(pi)).
  for (int m = 0; m <= p.max_order; ++m) {
    double ratio = 1.0;  // (2m)!/m!
    for (int k = m + 1; k <= 2 * m; ++k) ratio *= k;
    p.l2_closed_form.push_back(ratio / (std::pow(2.0, 2 * m + 1) * std::sqrt(std::numbers::pi)));
  }
  return p;
}

inline kernel_profile epanechnikov() {
  kernel_profile p;
  p.name = "epanechnikov";
  p.eval = [](int m, double t) {
    if (std::abs(t) >= 1.0) return 0.0;
    if (m == 0) return 0.75 * (1.0 - t * t);
    throw invalid_argument("epanechnikov kernel is not differentiable on R");
  };
  p.max_order = 0;
  p.radius = 1.0;
  p.moment_order = 2;
  p.positive_measure = 2.0;
  p.negative_measure = 0.0;
  p.l2_closed_form = {0.6};
  return p;
}

inline kernel_profile quartic() {
  kernel_profile p;
  p.name = "quartic";
  p.eval = [](int m, double t) {
    if (std::abs(t) >= 1.0) return 0.0;
    const double w = 1.0 - t * t;
    if (m == 0) return (15.0 / 16.0) * w * w;
    if (m == 1) return -(15.0 / 4.0) * t * w;
    throw invalid_argument("quartic kernel is only once differentiable on R");
  };
  p.max_order = 1;
  p.radius = 1.0;
  p.moment_order = 2;
  p.positive_measure = 2.0;
  p.negative_measure = 0.0;
  return p;
}

}  // namespace profiles

inline std::vector<std::string> builtin_kernel_names() {
  return {"gaussian", "epanechnikov", "quartic"};
}

/// Product kernel by name: gaussian, epanechnikov or quartic.
inline kernel_model builtin_kernel(std::string_view name, int d) {
  if (d < 1) throw invalid_argument("kernel dimension must be >= 1, got " + std::to_string(d));
  if (name == "gaussian") return {profiles::gaussian(), d};
  if (name == "epanechnikov") return {profiles::epanechnikov(), d};
  if (name == "quartic") return {profiles::quartic(), d};
  throw invalid_argument("unsupported kernel '" + std::string(name) +
                         "' (expected gaussian, epanechnikov or quartic)");
}

/// Integral of y_j^s K(y) dy over R^d (coordinate j is 1-based).
inline double kernel_moment(const kernel_model& model, int s, int j) {
  if (s < 1) throw invalid_argument("kernel_moment: order s must be >= 1");
  if (j < 1 || j > model.dimension()) {
    throw invalid_argument("kernel_moment: coordinate out of range");
  }
  const double r = model.support_radius();
  const quad::options opts{1e-12, 1e-12, 4000};
  const double along = quad::integrate(
                           [&](double t) { return std::pow(t, s) * model.profile(0, t); }, -r,
                           r, opts)
                           .value;
  const double other = quad::integrate([&](double t) { return model.profile(0, t); }, -r, r, opts)
                           .value;
  return along * std::pow(other, model.dimension() - 1);
}

/// Integral of ||z||^q |K(z)| dz (Euclidean norm), d <= 3.
inline double kernel_abs_moment(const kernel_model& model, double q) {
  const int d = model.dimension();
  const double r = model.support_radius();
  if (d == 1) {
    return quad::integrate(
               [&](double t) { return std::pow(std::abs(t), q) * std::abs(model.profile(0, t)); },
               -r, r, {1e-12, 1e-12, 4000})
        .value;
  }
  const std::vector<double> lo(static_cast<std::size_t>(d), -r);
  const std::vector<double> hi(static_cast<std::size_t>(d), r);
  return quad::integrate_box(
      [&](std::span<const double> z) {
        double norm_sq = 0.0;
        for (double v : z) norm_sq += v * v;
        return std::pow(norm_sq, 0.5 * q) * std::abs(model.eval(z));
      },
      lo, hi, {1e-10, 1e-10, 4000});
}

/// Largest discrepancy between deriv_eval and a central difference of the
/// next-lower derivative, over every coordinate with alpha_j > 0.
inline double finite_difference_check(const kernel_model& model, const multi_index& alpha,
                                      std::span<const double> x, double h) {
  if (alpha.order() < 1) throw invalid_argument("finite_difference_check needs |alpha| >= 1");
  model.require_supported(alpha);
  const double exact = model.deriv_eval(alpha, x);
  std::vector<double> shifted(x.begin(), x.end());
  double worst = 0.0;
  for (int j = 0; j < alpha.dimension(); ++j) {
    if (alpha[static_cast<std::size_t>(j)] == 0) continue;
    std::vector<int> lower(alpha.components().begin(), alpha.components().end());
    --lower[static_cast<std::size_t>(j)];
    const multi_index beta(lower);
    const auto sj = static_cast<std::size_t>(j);
    shifted[sj] = x[sj] + h;
    const double plus = model.deriv_eval(beta, shifted);
    shifted[sj] = x[sj] - h;
    const double minus = model.deriv_eval(beta, shifted);
    shifted[sj] = x[sj];
    worst = std::max(worst, std::abs(exact - (plus - minus) / (2.0 * h)));
  }
  return worst;
}

}  // namespace recdev
