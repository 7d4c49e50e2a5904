#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recdev/bandwidth.hpp"
#include "recdev/density.hpp"
#include "recdev/error.hpp"
#include "recdev/kernels.hpp"
#include "recdev/parallel.hpp"
#include "recdev/quadrature.hpp"
#include "recdev/summation.hpp"

namespace recdev {

struct axis_spec {
  double min = 0.0;
  double max = 0.0;
  int points = 1;
};

/// Tensor-product evaluation grid, flattened in row-major order (last
/// coordinate fastest).
class evaluation_grid {
 public:
  explicit evaluation_grid(std::vector<axis_spec> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw invalid_argument("grid: need at least one axis");
    size_ = 1;
    for (const auto& ax : axes_) {
      if (ax.points < 1) throw invalid_argument("grid: each axis needs >= 1 point");
      if (ax.points > 1 && !(ax.min < ax.max)) throw invalid_argument("grid: need min < max");
      if (ax.points == 1 && ax.min != ax.max) {
        throw invalid_argument("grid: a one-point axis needs min == max");
      }
      size_ *= static_cast<std::size_t>(ax.points);
    }
  }

  static evaluation_grid single(std::span<const double> x) {
    std::vector<axis_spec> axes;
    for (double v : x) axes.push_back({v, v, 1});
    return evaluation_grid(std::move(axes));
  }

  [[nodiscard]] int dimension() const { return static_cast<int>(axes_.size()); }
  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] const std::vector<axis_spec>& axes() const { return axes_; }

  [[nodiscard]] double step(int axis) const {
    const auto& ax = axes_[static_cast<std::size_t>(axis)];
    return ax.points > 1 ? (ax.max - ax.min) / (ax.points - 1) : 0.0;
  }

  [[nodiscard]] double coordinate(int axis, int i) const {
    const auto& ax = axes_[static_cast<std::size_t>(axis)];
    if (ax.points == 1) return ax.min;
    if (i == ax.points - 1) return ax.max;
    return ax.min + i * step(axis);
  }

  [[nodiscard]] std::vector<double> point(std::size_t flat) const {
    std::vector<double> x(axes_.size());
    for (int j = dimension() - 1; j >= 0; --j) {
      const auto pts = static_cast<std::size_t>(axes_[static_cast<std::size_t>(j)].points);
      x[static_cast<std::size_t>(j)] = coordinate(j, static_cast<int>(flat % pts));
      flat /= pts;
    }
    return x;
  }

  /// Volume element for Riemann sums (1 along single-point axes).
  [[nodiscard]] double cell_volume() const {
    double v = 1.0;
    for (int j = 0; j < dimension(); ++j) {
      if (axes_[static_cast<std::size_t>(j)].points > 1) v *= step(j);
    }
    return v;
  }

 private:
  std::vector<axis_spec> axes_;
  std::size_t size_ = 0;
};

/// Streaming estimator of d^[alpha] f on a fixed grid:
///   d^[alpha] f_n(x) = (1/n) sum_i h_i^{-(d+|alpha|)} d^[alpha]K((x - X_i)/h_i).
/// Observations are not retained. Each grid point keeps a compensated
/// running sum, so the value after n updates is the batch formula
/// evaluated in observation order.
class recursive_estimator {
 public:
  recursive_estimator(kernel_model kernel, bandwidth_schedule schedule, multi_index alpha,
                      evaluation_grid grid)
      : kernel_(std::move(kernel)),
        schedule_(std::move(schedule)),
        alpha_(std::move(alpha)),
        grid_(std::move(grid)),
        sums_(grid_.size()),
        factors_(static_cast<std::size_t>(grid_.dimension())),
        first_(static_cast<std::size_t>(grid_.dimension())),
        last_(static_cast<std::size_t>(grid_.dimension())) {
    kernel_.require_supported(alpha_);
    if (grid_.dimension() != kernel_.dimension()) {
      throw invalid_argument("estimator: grid dimension does not match kernel dimension");
    }
  }

  [[nodiscard]] long count() const { return n_; }
  [[nodiscard]] const evaluation_grid& grid() const { return grid_; }
  [[nodiscard]] const kernel_model& kernel() const { return kernel_; }
  [[nodiscard]] const bandwidth_schedule& schedule() const { return schedule_; }
  [[nodiscard]] const multi_index& alpha() const { return alpha_; }

  /// Absorb one observation.
  void update(std::span<const double> x) {
    const int d = grid_.dimension();
    if (static_cast<int>(x.size()) != d) {
      throw invalid_argument("observation has dimension " + std::to_string(x.size()) +
                             ", estimator expects " + std::to_string(d));
    }
    ++n_;
    const double h = schedule_.h(n_);
    const double reach = kernel_.support_radius() * h;
    const double scale = std::pow(h, -(d + alpha_.order()));

    // Product kernel: per-axis factors over the grid indices within reach.
    for (int j = 0; j < d; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const auto& ax = grid_.axes()[sj];
      int lo = 0;
      int hi = ax.points - 1;
      if (ax.points > 1) {
        const double st = grid_.step(j);
        lo = std::max(0, static_cast<int>(std::floor((x[sj] - reach - ax.min) / st)));
        hi = std::min(ax.points - 1, static_cast<int>(std::ceil((x[sj] + reach - ax.min) / st)));
      }
      first_[sj] = lo;
      last_[sj] = hi;
      factors_[sj].clear();
      for (int i = lo; i <= hi; ++i) {
        const double z = (grid_.coordinate(j, i) - x[sj]) / h;
        factors_[sj].push_back(std::abs(z) < kernel_.support_radius()
                                   ? kernel_.profile(alpha_[sj], z)
                                   : 0.0);
      }
      if (hi < lo) return;
    }
    accumulate(0, 0, scale);
  }

  /// Current estimate at grid point k. Throws before the first update.
  [[nodiscard]] double value(std::size_t k) const {
    require_nonempty();
    return sums_[k].value() / static_cast<double>(n_);
  }

  [[nodiscard]] std::vector<double> values() const {
    require_nonempty();
    std::vector<double> out(sums_.size());
    for (std::size_t k = 0; k < sums_.size(); ++k) out[k] = value(k);
    return out;
  }

  /// Forget all observations; keeps grid, kernel and schedule.
  void reset() {
    n_ = 0;
    std::fill(sums_.begin(), sums_.end(), compensated_sum<double>{});
  }

 private:
  void require_nonempty() const {
    if (n_ == 0) throw invalid_argument("estimator has absorbed no observations");
  }

  void accumulate(int axis, std::size_t offset, double partial) {
    const auto sa = static_cast<std::size_t>(axis);
    const auto pts = static_cast<std::size_t>(grid_.axes()[sa].points);
    const bool innermost = axis + 1 == grid_.dimension();
    for (int i = first_[sa]; i <= last_[sa]; ++i) {
      const double f = factors_[sa][static_cast<std::size_t>(i - first_[sa])];
      if (f == 0.0) continue;
      const std::size_t flat = offset * pts + static_cast<std::size_t>(i);
      if (innermost) {
        sums_[flat] += partial * f;
      } else {
        accumulate(axis + 1, flat, partial * f);
      }
    }
  }

  kernel_model kernel_;
  bandwidth_schedule schedule_;
  multi_index alpha_;
  evaluation_grid grid_;
  long n_ = 0;
  std::vector<compensated_sum<double>> sums_;
  std::vector<std::vector<double>> factors_;
  std::vector<int> first_;
  std::vector<int> last_;
};

namespace detail {

// Integral of K(y) g(x - h y) dy over the kernel support.
template <typename G>
double smooth_against_kernel(const kernel_model& kernel, std::span<const double> x, double h,
                             G&& g, const quad::options& opts) {
  const int d = kernel.dimension();
  const double r = kernel.support_radius();
  std::vector<double> shifted(x.begin(), x.end());
  if (d == 1) {
    return quad::integrate(
               [&](double y) {
                 shifted[0] = x[0] - h * y;
                 return kernel.profile(0, y) * g(std::span<const double>(shifted));
               },
               -r, r, opts)
        .value;
  }
  const std::vector<double> lo(static_cast<std::size_t>(d), -r);
  const std::vector<double> hi(static_cast<std::size_t>(d), r);
  return quad::integrate_box(
      [&](std::span<const double> y) {
        for (std::size_t j = 0; j < y.size(); ++j) shifted[j] = x[j] - h * y[j];
        return kernel.eval(y) * g(std::span<const double>(shifted));
      },
      lo, hi, opts);
}

inline void check_expectation_args(const kernel_model& kernel, const multi_index& alpha,
                                   std::span<const double> x, const true_density& density) {
  kernel.require_supported(alpha);
  if (static_cast<int>(x.size()) != kernel.dimension() ||
      density.dimension() != kernel.dimension()) {
    throw invalid_argument("expectation: point, kernel and density dimensions differ");
  }
}

}  // namespace detail

inline constexpr quad::options expectation_quadrature{1e-13, 1e-12, 4000};

/// E[d^[alpha] f_n(x)] = (1/n) sum_i  integral K(y) d^[alpha] f(x - h_i y) dy,
/// the form obtained after integrating by parts (no kernel derivatives).
inline double expected_estimate(const kernel_model& kernel, const bandwidth_schedule& schedule,
                                const multi_index& alpha, std::span<const double> x,
                                const true_density& density, long n) {
  detail::check_expectation_args(kernel, alpha, x, density);
  if (n < 1) throw invalid_argument("expected_estimate: n must be >= 1");
  std::vector<double> terms(static_cast<std::size_t>(n));
  auto g = [&](std::span<const double> y) { return density.derivative(alpha, y); };
  parallel_for(terms.size(), [&](std::size_t i) {
    terms[i] = detail::smooth_against_kernel(kernel, x, schedule.h(static_cast<long>(i) + 1), g,
                                             expectation_quadrature);
  });
  return accurate_sum<double>(terms) / static_cast<double>(n);
}

/// Bias B_n(x) = E[d^[alpha] f_n(x)] - d^[alpha] f(x) for every n in n_list
/// (ascending), from one pass over the per-observation terms
/// integral K(y) [d^[alpha] f(x - h_i y) - d^[alpha] f(x)] dy.
inline std::vector<double> bias_sequence(const kernel_model& kernel,
                                         const bandwidth_schedule& schedule,
                                         const multi_index& alpha, std::span<const double> x,
                                         const true_density& density,
                                         const std::vector<long>& n_list) {
  detail::check_expectation_args(kernel, alpha, x, density);
  if (n_list.empty()) return {};
  if (!std::is_sorted(n_list.begin(), n_list.end()) || n_list.front() < 1) {
    throw invalid_argument("bias_sequence: n_list must be ascending and >= 1");
  }
  const double at_x = density.derivative(alpha, x);
  auto g = [&](std::span<const double> y) { return density.derivative(alpha, y) - at_x; };
  std::vector<double> terms(static_cast<std::size_t>(n_list.back()));
  parallel_for(terms.size(), [&](std::size_t i) {
    terms[i] = detail::smooth_against_kernel(kernel, x, schedule.h(static_cast<long>(i) + 1), g,
                                             expectation_quadrature);
  });
  std::vector<double> out;
  compensated_sum<double> acc;
  long done = 0;
  for (long n : n_list) {
    for (; done < n; ++done) acc += terms[static_cast<std::size_t>(done)];
    out.push_back(acc.value() / static_cast<double>(n));
  }
  return out;
}

/// d^[alpha] f_n(x) - d^[alpha] f(x) split into a centered part and a bias.
struct centered_decomposition {
  double psi_term = 0.0;
  double bias_term = 0.0;
  double total = 0.0;
};

/// Decomposition at grid point k; the bias is computed by quadrature and the
/// centered term is the residual.
inline centered_decomposition decompose(const recursive_estimator& est, std::size_t k,
                                        const true_density& density) {
  if (est.count() == 0) throw invalid_argument("decompose: estimator has no observations");
  const auto x = est.grid().point(k);
  const double bias =
      bias_sequence(est.kernel(), est.schedule(), est.alpha(), x, density, {est.count()}).front();
  const double total = est.value(k) - density.derivative(est.alpha(), x);
  return {total - bias, bias, total};
}

}  // namespace recdev
