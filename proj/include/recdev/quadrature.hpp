#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <sstream>
#include <vector>

#include "recdev/error.hpp"
#include "recdev/summation.hpp"

namespace recdev::quad {

struct options {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  int max_intervals = 4000;
};

struct result {
  double value = 0.0;
  double error = 0.0;
  long evaluations = 0;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr std::array<double, 8> kronrod_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct interval {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const interval& other) const { return error < other.error; }
};

template <typename F>
interval gauss_kronrod_15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double result_gauss = fc * gauss_weights[3];
  double result_kronrod = fc * kronrod_weights[7];
  double result_abs = std::abs(result_kronrod);
  std::array<double, 7> f1{};
  std::array<double, 7> f2{};
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kronrod_nodes[j];
    f1[j] = f(center - dx);
    f2[j] = f(center + dx);
    const double pair = f1[j] + f2[j];
    result_kronrod += kronrod_weights[j] * pair;
    result_abs += kronrod_weights[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) result_gauss += gauss_weights[j / 2] * pair;
  }
  const double mean = result_kronrod * 0.5;
  double result_asc = kronrod_weights[7] * std::abs(fc - mean);
  for (int j = 0; j < 7; ++j) {
    result_asc += kronrod_weights[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
  }
  const double abs_half = std::abs(half);
  result_asc *= abs_half;
  result_abs *= abs_half;
  double err = std::abs((result_kronrod - result_gauss) * half);
  if (result_asc != 0.0 && err != 0.0) {
    err = result_asc * std::min(1.0, std::pow(200.0 * err / result_asc, 1.5));
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (result_abs > std::numeric_limits<double>::min() / (50.0 * eps)) {
    err = std::max(50.0 * eps * result_abs, err);
  }
  return {a, b, result_kronrod * half, err};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b].
/// Throws quadrature_error when the tolerance is not met within
/// opts.max_intervals subintervals.
template <typename F>
result integrate(F&& f, double a, double b, const options& opts = {}) {
  if (!(std::isfinite(a) && std::isfinite(b))) {
    throw invalid_argument("quadrature bounds must be finite");
  }
  if (a == b) return {};
  std::priority_queue<detail::interval> work;
  work.push(detail::gauss_kronrod_15(f, a, b));
  double total = work.top().value;
  double total_err = work.top().error;
  long evaluations = 15;
  int intervals = 1;
  auto tolerance = [&] { return std::max(opts.abs_tol, opts.rel_tol * std::abs(total)); };
  while (total_err > tolerance()) {
    if (intervals >= opts.max_intervals) {
      std::ostringstream msg;
      msg << "quadrature on [" << a << ", " << b << "] did not converge: error estimate "
          << total_err << " > tolerance " << tolerance() << " after " << intervals
          << " subintervals";
      throw quadrature_error(msg.str());
    }
    const detail::interval worst = work.top();
    work.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(worst.a < mid && mid < worst.b)) {
      throw quadrature_error("quadrature subinterval collapsed below machine resolution");
    }
    const auto left = detail::gauss_kronrod_15(f, worst.a, mid);
    const auto right = detail::gauss_kronrod_15(f, mid, worst.b);
    evaluations += 30;
    ++intervals;
    work.push(left);
    work.push(right);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
  }
  compensated_sum<double> acc;
  compensated_sum<double> err_acc;
  while (!work.empty()) {
    acc += work.top().value;
    err_acc += work.top().error;
    work.pop();
  }
  return {acc.value(), err_acc.value(), evaluations};
}

/// Iterated (nested) adaptive integration over the box [lo, hi] in up to
/// three dimensions. The integrand receives the point as a span.
template <typename F>
double integrate_box(F&& f, std::span<const double> lo, std::span<const double> hi,
                     const options& opts = {}) {
  const std::size_t d = lo.size();
  if (d == 0 || hi.size() != d) throw invalid_argument("integrate_box: bad dimension");
  if (d > 3) throw invalid_argument("integrate_box: nested quadrature limited to d <= 3");
  std::vector<double> point(d);

  // Inner integrals get a tolerance scaled by the outer extent so that the
  // accumulated inner error stays below the requested outer tolerance.
  auto level = [&](auto& self, std::size_t axis, const options& o) -> double {
    auto slice = [&](double t) {
      point[axis] = t;
      if (axis + 1 == d) return f(std::span<const double>(point));
      options inner = o;
      inner.abs_tol = o.abs_tol / (4.0 * (hi[axis] - lo[axis]));
      return self(self, axis + 1, inner);
    };
    return integrate(slice, lo[axis], hi[axis], o).value;
  };
  return level(level, 0, opts);
}

}  // namespace recdev::quad
