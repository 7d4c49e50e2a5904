#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "recdev/bandwidth.hpp"
#include "recdev/density.hpp"
#include "recdev/error.hpp"
#include "recdev/estimator.hpp"
#include "recdev/kernels.hpp"
#include "recdev/parallel.hpp"
#include "recdev/quadrature.hpp"
#include "recdev/ratefn.hpp"
#include "recdev/summation.hpp"

namespace recdev {

/// Everything needed to evaluate the normalized cumulant generating function
///   Lambda_{n,x}(u) = (v_n^2 / a_n) log E exp(u (a_n / v_n) Psi_n(x)),
/// a_n = sum_{i<=n} h_i^{d+2|alpha|}, against a known density.
struct cgf_spec {
  kernel_model kernel;
  bandwidth_schedule schedule;
  scaling_sequence scaling;
  multi_index alpha;
  std::vector<double> x;
  true_density density;

  /// v_n = 1 and |alpha| = 0: the limit is Lambda^L; otherwise Lambda^M.
  [[nodiscard]] bool ldp_regime() const { return scaling.is_constant() && alpha.order() == 0; }

  void check() const {
    kernel.require_supported(alpha);
    const int d = kernel.dimension();
    if (static_cast<int>(x.size()) != d || density.dimension() != d) {
      throw invalid_argument("cgf: point, kernel and density dimensions differ");
    }
    if (!(schedule.a() * (d + 2 * alpha.order()) < 1.0)) {
      throw invalid_argument("cgf: a(d+2|alpha|) must be < 1");
    }
  }
};

namespace detail {

// e^w - 1 - w without cancellation for small |w|.
inline double expm1_minus_linear(double w) {
  if (std::abs(w) < 0.1) {
    double term = w * w / 2.0;
    double sum = term;
    for (int k = 3; k <= 14; ++k) {
      term *= w / k;
      sum += term;
    }
    return sum;
  }
  return std::expm1(w) - w;
}

// log(1 + m) - m without cancellation for small |m|.
inline double log1p_minus_linear(double m) {
  if (std::abs(m) < 1e-2) {
    double power = m * m;
    double sum = 0.0;
    for (int k = 2; k <= 10; ++k) {
      sum += ((k % 2 == 0) ? -1.0 : 1.0) * power / k;
      power *= m;
    }
    return sum;
  }
  return std::log1p(m) - m;
}

template <typename G>
double integrate_support(const kernel_model& kernel, G&& g, const quad::options& opts) {
  const int d = kernel.dimension();
  const double r = kernel.support_radius();
  if (d == 1) {
    std::vector<double> z(1);
    return quad::integrate(
               [&](double t) {
                 z[0] = t;
                 return g(std::span<const double>(z));
               },
               -r, r, opts)
        .value;
  }
  const std::vector<double> lo(static_cast<std::size_t>(d), -r);
  const std::vector<double> hi(static_cast<std::size_t>(d), r);
  return quad::integrate_box(g, lo, hi, opts);
}

// log E[exp(theta Y)] - theta E[Y] for Y = d^[alpha]K((x - X)/h), X ~ f,
// computed with the substitution X = x - h z.
inline double centered_log_mgf_term(const cgf_spec& spec, double theta, double h) {
  const int d = spec.kernel.dimension();
  const double hd = std::pow(h, d);
  std::vector<double> shifted(spec.x.size());
  auto f_at = [&](std::span<const double> z) {
    for (std::size_t j = 0; j < z.size(); ++j) shifted[j] = spec.x[j] - h * z[j];
    return spec.density.value(shifted);
  };
  const quad::options curvature_opts{1e-300, 1e-11, 4000};
  const double k = hd * integrate_support(
                            spec.kernel,
                            [&](std::span<const double> z) {
                              const double y = spec.kernel.deriv_eval(spec.alpha, z);
                              if (y == 0.0) return 0.0;
                              return expm1_minus_linear(theta * y) * f_at(z);
                            },
                            curvature_opts);
  const quad::options mean_opts{1e-15, 1e-10, 4000};
  const double mean = hd * integrate_support(
                               spec.kernel,
                               [&](std::span<const double> z) {
                                 const double y = spec.kernel.deriv_eval(spec.alpha, z);
                                 if (y == 0.0) return 0.0;
                                 return y * f_at(z);
                               },
                               mean_opts);
  const double m = k + theta * mean;  // E[exp(theta Y)] - 1
  return log1p_minus_linear(m) + k;
}

}  // namespace detail

/// Lambda_{n,x}(u), exact up to quadrature tolerance: the n independent
/// per-observation expectations are integrated against the true density.
inline double cgf_finite_n(const cgf_spec& spec, double u, long n) {
  spec.check();
  if (n < 1) throw invalid_argument("cgf_finite_n: n must be >= 1");
  if (u == 0.0) return 0.0;
  const int d = spec.kernel.dimension();
  const int order = spec.alpha.order();
  const double an = spec.schedule.partial_sum(static_cast<double>(d + 2 * order), n);
  const double vn = spec.scaling.v(n);
  const double sup = spec.kernel.sup_norm(spec.alpha);
  const double nd = static_cast<double>(n);

  std::vector<double> terms(static_cast<std::size_t>(n));
  for (long i = 1; i <= n; ++i) {
    const double theta = u * an / (nd * vn * std::pow(spec.schedule.h(i), d + order));
    if (std::abs(theta) * sup > 700.0) {
      throw overflow_error("cgf_finite_n: exponent theta_i*||dK||_inf = " +
                           std::to_string(std::abs(theta) * sup) + " exceeds 700 at i = " +
                           std::to_string(i));
    }
  }
  parallel_for(terms.size(), [&](std::size_t idx) {
    const long i = static_cast<long>(idx) + 1;
    const double h = spec.schedule.h(i);
    const double theta = u * an / (nd * vn * std::pow(h, d + order));
    terms[idx] = detail::centered_log_mgf_term(spec, theta, h);
  });
  return vn * vn / an * accurate_sum<double>(terms);
}

/// Lambda^M(u) = u^2 f(x) int [d^[alpha]K]^2 / (2 (1 - a^2 (d+2|alpha|)^2)).
inline double cgf_limit_quadratic(const cgf_spec& spec, double u) {
  const double fx = spec.density.value(spec.x);
  return u * u * fx * spec.kernel.l2_norm_sq(spec.alpha) /
         (2.0 * quadratic_factor(spec.schedule.a(), spec.kernel.dimension(), spec.alpha.order()));
}

/// Lambda^L(u) = f(x)(1 - ad)(psi(u) - u/(1 - ad)).
inline double cgf_limit_ldp(const cgf_spec& spec, const psi_evaluator& ev, double u) {
  const double fx = spec.density.value(spec.x);
  const double p = ev.exponent();
  return fx * (1.0 - p) * (ev.psi(u) - u / (1.0 - p));
}

/// The limit Lambda_x(u) of the regime selected by the spec.
inline double cgf_limit(const cgf_spec& spec, double u, const psi_evaluator* ev = nullptr) {
  spec.check();
  if (!spec.ldp_regime()) return cgf_limit_quadratic(spec, u);
  if (ev != nullptr) return cgf_limit_ldp(spec, *ev, u);
  const psi_evaluator local(spec.kernel, spec.schedule.a());
  return cgf_limit_ldp(spec, local, u);
}

struct cgf_diagnostic_row {
  long n = 0;
  double u = 0.0;
  double lambda_n = 0.0;
  double lambda_limit = 0.0;
  double abs_error = 0.0;
};

/// |Lambda_{n,x}(u) - Lambda_x(u)| along an increasing n_list.
inline std::vector<cgf_diagnostic_row> convergence_diagnostic(const cgf_spec& spec, double u,
                                                              const std::vector<long>& n_list) {
  for (std::size_t k = 1; k < n_list.size(); ++k) {
    if (n_list[k] <= n_list[k - 1]) throw invalid_argument("convergence_diagnostic: n_list must increase");
  }
  const double limit = cgf_limit(spec, u);
  std::vector<cgf_diagnostic_row> rows;
  for (long n : n_list) {
    const double ln = cgf_finite_n(spec, u, n);
    rows.push_back({n, u, ln, limit, std::abs(ln - limit)});
  }
  return rows;
}

}  // namespace recdev
