#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recdev/error.hpp"
#include "recdev/kernels.hpp"
#include "recdev/quadrature.hpp"

namespace recdev {

/// Extended non-negative real: a finite value or an explicit +infinity.
class rate_value {
 public:
  static rate_value infinity() { return rate_value(); }
  static rate_value of(double v) {
    if (!std::isfinite(v)) throw invalid_argument("rate_value::of needs a finite value");
    // Rounding can leave a rate a few ulps below zero at its minimum.
    return rate_value(std::max(0.0, v));
  }

  [[nodiscard]] bool finite() const { return finite_; }
  [[nodiscard]] bool is_infinite() const { return !finite_; }

  /// The finite value; throws on +infinity.
  [[nodiscard]] double value() const {
    if (!finite_) throw invalid_argument("rate is +infinity");
    return value_;
  }

  /// The value as a double (+inf when infinite), for arithmetic on bounds.
  [[nodiscard]] double as_double() const {
    return finite_ ? value_ : std::numeric_limits<double>::infinity();
  }

  [[nodiscard]] std::string to_string() const {
    if (!finite_) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value_);
    return buf;
  }

  friend rate_value min(const rate_value& x, const rate_value& y) {
    if (!x.finite_) return y;
    if (!y.finite_) return x;
    return x.value_ <= y.value_ ? x : y;
  }

  bool operator==(const rate_value&) const = default;

 private:
  rate_value() = default;
  explicit rate_value(double v) : value_(v), finite_(true) {}

  double value_ = 0.0;
  bool finite_ = false;
};

/// Evaluates
///   psi(u) = integral over [0,1] x R^d of s^{-ad} (exp(s^{ad} u K(z)/(1-ad)) - 1) ds dz,
/// its first two derivatives, and the Legendre transform I of psi.
///
/// The s-integral depends on z only through w = u K(z)/(1-ad), so each
/// z-node calls a one-dimensional integral in s. The substitution s = r^{1/(ad)}
/// turns s^{ad} into r; expm1 keeps the small-r region free of cancellation.
class psi_evaluator {
 public:
  psi_evaluator(kernel_model kernel, double a, quad::options opts = {1e-12, 1e-12, 4000})
      : kernel_(std::move(kernel)), a_(a), opts_(opts) {
    p_ = a_ * kernel_.dimension();
    if (!(p_ > 0.0 && p_ < 1.0)) {
      throw invalid_argument("psi: need 0 < a*d < 1, got a*d = " + std::to_string(p_));
    }
    if (kernel_.dimension() > 3) throw invalid_argument("psi: nested quadrature limited to d <= 3");
  }

  [[nodiscard]] const kernel_model& kernel() const { return kernel_; }
  [[nodiscard]] double a() const { return a_; }
  /// a*d
  [[nodiscard]] double exponent() const { return p_; }
  /// psi'(0) = 1/(1 - ad), the minimizer of I.
  [[nodiscard]] double mean() const { return 1.0 / (1.0 - p_); }

  [[nodiscard]] double psi(double u) const {
    if (u == 0.0) return 0.0;
    const double c = u / (1.0 - p_);
    return over_support([&](double k) { return k == 0.0 ? 0.0 : inner(0, c * k); });
  }

  [[nodiscard]] double psi_prime(double u) const {
    const double c = u / (1.0 - p_);
    return over_support([&](double k) { return k == 0.0 ? 0.0 : k * inner(1, c * k); }) /
           (1.0 - p_);
  }

  [[nodiscard]] double psi_second(double u) const {
    const double c = u / (1.0 - p_);
    return over_support([&](double k) { return k == 0.0 ? 0.0 : k * k * inner(2, c * k); }) /
           ((1.0 - p_) * (1.0 - p_));
  }

  /// Solves psi'(u) = t. psi' is increasing, so the root is bracketed by
  /// doubling away from u = 0 and then refined with safeguarded Newton steps.
  [[nodiscard]] double psi_prime_inverse(double t) const {
    if (kernel_.nonnegative() && !(t > 0.0)) {
      throw invalid_argument("psi'^{-1}: t must be > 0 for a non-negative kernel");
    }
    if (!std::isfinite(t)) throw invalid_argument("psi'^{-1}: t must be finite");
    const double tol = 1e-11 * std::max(1.0, std::abs(t));
    auto g = [&](double u) { return psi_prime(u) - t; };

    double g0 = g(0.0);
    if (std::abs(g0) <= tol) return 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double glo = 0.0;
    double ghi = 0.0;
    const double dir = g0 < 0.0 ? 1.0 : -1.0;
    double inner_end = 0.0;
    double g_inner = g0;
    double step = 1.0;
    bool bracketed = false;
    try {
      for (int k = 0; k < 64; ++k) {
        const double outer = inner_end + dir * step;
        const double g_outer = g(outer);
        if ((dir > 0 && g_outer >= 0.0) || (dir < 0 && g_outer <= 0.0)) {
          if (std::abs(g_outer) <= tol) return outer;
          lo = std::min(inner_end, outer);
          hi = std::max(inner_end, outer);
          glo = dir > 0 ? g_inner : g_outer;
          ghi = dir > 0 ? g_outer : g_inner;
          bracketed = true;
          break;
        }
        inner_end = outer;
        g_inner = g_outer;
        step *= 2.0;
      }
    } catch (const overflow_error& e) {
      throw root_error(std::string("psi'^{-1}: bracket growth left the exponent range: ") +
                       e.what());
    }
    if (!bracketed) throw root_error("psi'^{-1}: could not bracket the root");

    double u = std::abs(glo) < std::abs(ghi) ? lo : hi;
    double gu = std::abs(glo) < std::abs(ghi) ? glo : ghi;
    for (int it = 0; it < 200; ++it) {
      if (std::abs(gu) <= tol) return u;
      const double slope = psi_second(u);
      double next = u - gu / slope;
      if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
      const double gn = g(next);
      if (gn < 0.0) {
        lo = next;
        glo = gn;
      } else {
        hi = next;
        ghi = gn;
      }
      // Newton stalling: fall back to bisection of the updated bracket.
      if (std::abs(gn) > 0.5 * std::abs(gu)) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm < 0.0) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
          ghi = gm;
        }
        u = std::abs(gm) < std::abs(gn) ? mid : next;
        gu = std::abs(gm) < std::abs(gn) ? gm : gn;
      } else {
        u = next;
        gu = gn;
      }
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u))) {
        if (std::abs(gu) <= 1e-10 * std::max(1.0, std::abs(t))) return u;
        break;
      }
    }
    throw root_error("psi'^{-1}: no convergence for t = " + std::to_string(t));
  }

  /// I(t) = sup_u (u t - psi(u)).
  [[nodiscard]] rate_value legendre(double t) const {
    if (!std::isfinite(t)) throw invalid_argument("legendre_I: t must be finite");
    if (kernel_.nonnegative()) {
      if (t < 0.0) return rate_value::infinity();
      if (t == 0.0) {
        const double lp = kernel_.positive_support_measure();
        if (!std::isfinite(lp)) return rate_value::infinity();
        return rate_value::of(lp / (1.0 - p_));
      }
    }
    const double u = psi_prime_inverse(t);
    return rate_value::of(t * u - psi(u));
  }

 private:
  // order 0: F0(w) = int_0^1 s^{-p} expm1(s^p w) ds
  // order 1: F1(w) = int_0^1 exp(s^p w) ds
  // order 2: F2(w) = int_0^1 s^p exp(s^p w) ds
  // each written in r = s^p, with ds = e r^{e-1} dr and e = 1/p.
  double inner(int order, double w) const {
    if (w > 700.0) {
      throw overflow_error("psi: exponent " + std::to_string(w) + " exceeds the double range");
    }
    const double e = 1.0 / p_;
    auto integrand = [&](double r) {
      const double base = std::pow(r, e - 1.0);
      const double x = r * w;
      switch (order) {
        case 0: {
          const double e1 = x == 0.0 ? 1.0 : std::expm1(x) / x;
          return base * w * e1;
        }
        case 1:
          return base * std::exp(x);
        default:
          return base * r * std::exp(x);
      }
    };
    // r^{e-1} is not smooth at 0 for fractional e, so [0, eps] with
    // |eps w| <= 1 is integrated term by term from the Taylor series.
    const double eps = std::min(1.0, 1.0 / std::max(std::abs(w), 1e-300));
    double head = 0.0;
    double coef = 1.0;  // w^k / k!, or w^k / (k+1)! for order 0
    double power = std::pow(eps, e);
    for (int k = 0; k < 40; ++k) {
      if (order == 0) {
        coef = k == 0 ? 1.0 : coef * w / (k + 1);
        head += coef * power / (e + k);
      } else {
        coef = k == 0 ? 1.0 : coef * w / k;
        head += order == 1 ? coef * power / (e + k) : coef * power * eps / (e + k + 1);
      }
      if (std::abs(coef) * power < 1e-18 * std::abs(head)) break;
      power *= eps;
    }
    if (order == 0) head *= w;
    if (eps >= 1.0) return e * head;
    const quad::options o{1e-300, 1e-13, 2000};
    return e * (head + quad::integrate(integrand, eps, 1.0, o).value);
  }

  // Integral over the kernel's support box of G(K(z)).
  template <typename G>
  double over_support(G&& g) const {
    const int d = kernel_.dimension();
    const double r = kernel_.support_radius();
    if (d == 1) {
      return quad::integrate([&](double z) { return g(kernel_.profile(0, z)); }, -r, r, opts_)
          .value;
    }
    const std::vector<double> lo(static_cast<std::size_t>(d), -r);
    const std::vector<double> hi(static_cast<std::size_t>(d), r);
    return quad::integrate_box([&](std::span<const double> z) { return g(kernel_.eval(z)); }, lo,
                               hi, opts_);
  }

  kernel_model kernel_;
  double a_;
  double p_;
  quad::options opts_;
};

inline rate_value legendre_I(const psi_evaluator& ev, double t) { return ev.legendre(t); }

/// Large-deviations rate of f_n(x) - f(x):
///   I_x(t) = f(x)(1-ad) I(1/(1-ad) + t/(f(x)(1-ad))),
/// and for f(x) = 0, I_x(0) = 0 with I_x = +inf elsewhere.
inline rate_value pointwise_rate_density(const psi_evaluator& ev, double f_x, double t) {
  if (!(f_x >= 0.0)) throw invalid_argument("pointwise_rate_density: f(x) must be >= 0");
  if (f_x == 0.0) return t == 0.0 ? rate_value::of(0.0) : rate_value::infinity();
  const double scale = f_x * (1.0 - ev.exponent());
  const rate_value i = ev.legendre(ev.mean() + t / scale);
  if (i.is_infinite()) return i;
  return rate_value::of(scale * i.value());
}

/// 1 - a^2 (d+2|alpha|)^2, the variance factor shared by J and Lambda^M.
inline double quadratic_factor(double a, int d, int alpha_order) {
  const double m = d + 2.0 * alpha_order;
  if (!(a * m < 1.0) || !(a >= 0.0)) {
    throw invalid_argument("quadratic rate: need 0 <= a(d+2|alpha|) < 1");
  }
  return 1.0 - a * a * m * m;
}

/// J(t) = t^2 (1 - a^2 (d+2|alpha|)^2) / (2 f(x) l2), with l2 = int [d^[alpha]K]^2.
inline rate_value quadratic_rate(double f_x, double a, int d, int alpha_order, double l2,
                                 double t) {
  if (!(f_x >= 0.0)) throw invalid_argument("quadratic_rate: f(x) must be >= 0");
  if (!(l2 > 0.0)) throw invalid_argument("quadratic_rate: l2 must be > 0");
  const double factor = quadratic_factor(a, d, alpha_order);
  if (f_x == 0.0) return t == 0.0 ? rate_value::of(0.0) : rate_value::infinity();
  return rate_value::of(t * t * factor / (2.0 * f_x * l2));
}

enum class uniform_mode { ldp_density, quadratic };

struct uniform_rate_spec {
  double sup_density = 0.0;  // ||f||_{U,inf}
  double a = 0.0;
  int d = 1;
  int alpha_order = 0;
  uniform_mode mode = uniform_mode::quadratic;

  void check(const psi_evaluator* ev) const {
    if (!(sup_density >= 0.0)) throw invalid_argument("uniform rate: sup density must be >= 0");
    if (mode == uniform_mode::ldp_density) {
      if (alpha_order != 0) throw invalid_argument("uniform rate: ldp_density mode needs |alpha| = 0");
      if (ev == nullptr) throw invalid_argument("uniform rate: ldp_density mode needs a psi evaluator");
      if (ev->kernel().dimension() != d || ev->a() != a) {
        throw invalid_argument("uniform rate: psi evaluator does not match (a, d)");
      }
    }
  }
};

struct uniform_rate_values {
  rate_value g_plus;   // g_U(delta)
  rate_value g_minus;  // g_U(-delta)
  rate_value g_tilde;  // min of the two
};

inline rate_value g_uniform(const uniform_rate_spec& spec, const psi_evaluator* ev, double l2,
                            double delta) {
  spec.check(ev);
  if (spec.mode == uniform_mode::ldp_density && ev != nullptr) {
    return pointwise_rate_density(*ev, spec.sup_density, delta);
  }
  return quadratic_rate(spec.sup_density, spec.a, spec.d, spec.alpha_order, l2, delta);
}

inline uniform_rate_values uniform_rate(const uniform_rate_spec& spec, const psi_evaluator* ev,
                                        double l2, double delta) {
  const rate_value plus = g_uniform(spec, ev, l2, delta);
  const rate_value minus = spec.mode == uniform_mode::quadratic ? plus
                                                                : g_uniform(spec, ev, l2, -delta);
  return {plus, minus, min(plus, minus)};
}

/// sup_x Lambda_x(u) over U: the limit cumulant generating function at the
/// largest density value.
inline double uniform_cgf_limit(const uniform_rate_spec& spec, const psi_evaluator* ev, double l2,
                                double u) {
  spec.check(ev);
  if (spec.mode == uniform_mode::ldp_density && ev != nullptr) {
    const double p = ev->exponent();
    return spec.sup_density * (1.0 - p) * (ev->psi(u) - u / (1.0 - p));
  }
  return u * u * spec.sup_density * l2 /
         (2.0 * quadratic_factor(spec.a, spec.d, spec.alpha_order));
}

/// The maximizer u = phi(delta) > 0 of u delta - sup_x Lambda_x(u).
inline double phi_maximizer(const uniform_rate_spec& spec, const psi_evaluator* ev, double l2,
                            double delta) {
  spec.check(ev);
  if (!(delta > 0.0)) throw invalid_argument("phi: delta must be > 0");
  if (!(spec.sup_density > 0.0)) throw invalid_argument("phi: needs ||f||_U > 0");
  if (spec.mode == uniform_mode::ldp_density && ev != nullptr) {
    const double p = ev->exponent();
    return ev->psi_prime_inverse(delta / (spec.sup_density * (1.0 - p)) + 1.0 / (1.0 - p));
  }
  if (!(l2 > 0.0)) throw invalid_argument("phi: l2 must be > 0");
  return delta * quadratic_factor(spec.a, spec.d, spec.alpha_order) / (spec.sup_density * l2);
}

/// The maximizer u = phi(-delta) < 0 of -u delta - sup_x Lambda_x(u), when
/// it exists (for a non-negative kernel in ldp_density mode it does not once
/// delta >= ||f||_U, where g_U(-delta) = +inf).
inline std::optional<double> phi_maximizer_lower(const uniform_rate_spec& spec,
                                                 const psi_evaluator* ev, double l2,
                                                 double delta) {
  spec.check(ev);
  if (!(delta > 0.0)) throw invalid_argument("phi: delta must be > 0");
  if (!(spec.sup_density > 0.0)) throw invalid_argument("phi: needs ||f||_U > 0");
  if (spec.mode == uniform_mode::ldp_density && ev != nullptr) {
    const double p = ev->exponent();
    const double t = -delta / (spec.sup_density * (1.0 - p)) + 1.0 / (1.0 - p);
    if (ev->kernel().nonnegative() && !(t > 0.0)) return std::nullopt;
    return ev->psi_prime_inverse(t);
  }
  return -phi_maximizer(spec, ev, l2, delta);
}

}  // namespace recdev
