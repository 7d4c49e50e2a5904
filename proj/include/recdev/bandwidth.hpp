#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "recdev/error.hpp"
#include "recdev/summation.hpp"

namespace recdev {

enum class bandwidth_kind { power, power_log };

inline bandwidth_kind parse_bandwidth_kind(std::string_view s) {
  if (s == "power") return bandwidth_kind::power;
  if (s == "power_log") return bandwidth_kind::power_log;
  throw invalid_argument("unknown bandwidth kind '" + std::string(s) +
                         "' (expected power or power_log)");
}

inline std::string to_string(bandwidth_kind k) {
  return k == bandwidth_kind::power ? "power" : "power_log";
}

/// Exponent constraints a schedule must satisfy for a given use.
struct usage_context {
  int d = 1;
  int alpha_order = 0;
  std::optional<int> q{};     // kernel moment order, enables the b < a*q check
  std::optional<double> b{};  // scaling exponent v_n = n^b
};

/// h_n = c n^{-a}  or  h_n = c n^{-a} log(n + 1).
class bandwidth_schedule {
 public:
  bandwidth_schedule(bandwidth_kind kind, double c, double a) : kind_(kind), c_(c), a_(a) {
    if (!(c > 0.0) || !std::isfinite(c)) throw invalid_argument("bandwidth: c must be > 0");
    if (!(a >= 0.0) || !(a < 1.0)) throw invalid_argument("bandwidth: a must lie in [0, 1)");
  }

  /// Validates the exponent against the context, then caches prefix sums
  /// of h_i^beta for every beta in cached_betas up to cache_n.
  bandwidth_schedule(bandwidth_kind kind, double c, double a, const usage_context& ctx,
                     const std::vector<double>& cached_betas = {}, long cache_n = 0)
      : bandwidth_schedule(kind, c, a) {
    validate(ctx);
    for (double beta : cached_betas) build_cache(beta, cache_n);
  }

  [[nodiscard]] bandwidth_kind kind() const { return kind_; }
  [[nodiscard]] double c() const { return c_; }
  [[nodiscard]] double a() const { return a_; }

  [[nodiscard]] double h(long n) const {
    if (n < 1) throw invalid_argument("bandwidth index must be >= 1");
    const double nd = static_cast<double>(n);
    const double base = c_ * std::pow(nd, -a_);
    return kind_ == bandwidth_kind::power ? base : base * std::log(nd + 1.0);
  }

  /// Sum of h_i^beta for i = 1..n, compensated.
  [[nodiscard]] double partial_sum(double beta, long n) const {
    if (n < 0) throw invalid_argument("partial_sum: n must be >= 0");
    if (auto it = cache_.find(beta); it != cache_.end() && n < static_cast<long>(it->second.size())) {
      return it->second[static_cast<std::size_t>(n)];
    }
    compensated_sum<double> acc;
    for (long i = 1; i <= n; ++i) acc += std::pow(h(i), beta);
    return acc.value();
  }

  [[nodiscard]] bool is_cached(double beta, long n) const {
    auto it = cache_.find(beta);
    return it != cache_.end() && n < static_cast<long>(it->second.size());
  }

  /// Throws invalid_argument naming the violated hypothesis.
  void validate(const usage_context& ctx) const {
    const int m = ctx.d + 2 * ctx.alpha_order;
    if (ctx.d < 1 || ctx.alpha_order < 0) throw invalid_argument("bandwidth: bad (d, |alpha|)");
    std::ostringstream msg;
    if (!(a_ > 0.0) || !(a_ * m < 1.0)) {
      msg << "(H3): a must satisfy 0 < a < 1/(d+2|alpha|) = 1/" << m << ", got a = " << a_;
      throw invalid_argument(msg.str());
    }
    if (ctx.b) {
      const double b = *ctx.b;
      const double bound = (1.0 - a_ * m) / 2.0;
      if (!(b > 0.0) || !(b < bound)) {
        msg << "(H6): b must satisfy 0 < b < (1-a(d+2|alpha|))/2 = " << bound << ", got b = " << b;
        throw invalid_argument(msg.str());
      }
      if (ctx.q && !(b < a_ * *ctx.q)) {
        msg << "(H7)ii): b must be < a*q = " << a_ * *ctx.q << ", got b = " << b;
        throw invalid_argument(msg.str());
      }
    }
  }

 private:
  void build_cache(double beta, long n_max) {
    std::vector<double> prefix(static_cast<std::size_t>(n_max + 1), 0.0);
    compensated_sum<double> acc;
    for (long i = 1; i <= n_max; ++i) {
      acc += std::pow(h(i), beta);
      prefix[static_cast<std::size_t>(i)] = acc.value();
    }
    cache_[beta] = std::move(prefix);
  }

  bandwidth_kind kind_;
  double c_;
  double a_;
  std::map<double, std::vector<double>> cache_;
};

enum class scaling_kind { constant_one, power };

/// v_n = 1 (large deviations) or v_n = n^b (moderate deviations).
struct scaling_sequence {
  scaling_kind kind = scaling_kind::constant_one;
  double b = 0.0;

  static scaling_sequence constant() { return {}; }
  static scaling_sequence power(double b) {
    if (!(b > 0.0)) throw invalid_argument("scaling: b must be > 0 for v_n = n^b");
    return {scaling_kind::power, b};
  }

  [[nodiscard]] bool is_constant() const { return kind == scaling_kind::constant_one; }
  [[nodiscard]] double v(long n) const {
    return is_constant() ? 1.0 : std::pow(static_cast<double>(n), b);
  }
};

inline scaling_kind parse_scaling_kind(std::string_view s) {
  if (s == "constant_one" || s == "constant") return scaling_kind::constant_one;
  if (s == "power") return scaling_kind::power;
  throw invalid_argument("unknown scaling kind '" + std::string(s) +
                         "' (expected constant_one or power)");
}

/// Deviation speed: sum_{i<=n} h_i^{d+2|alpha|} / v_n^2.
inline double speed(const bandwidth_schedule& schedule, const scaling_sequence& scaling,
                    int alpha_order, int d, long n) {
  if (n < 1) throw invalid_argument("speed: n must be >= 1");
  const int m = d + 2 * alpha_order;
  if (!(schedule.a() * m < 1.0)) {
    throw invalid_argument("speed: a(d+2|alpha|) >= 1, the bandwidth sum no longer diverges");
  }
  const double v = scaling.v(n);
  return schedule.partial_sum(static_cast<double>(m), n) / (v * v);
}

/// The normalized sums (1/(n h_n^beta)) sum_{i<=n} h_i^beta, which tend to
/// 1/(1 - a beta) for a regularly varying bandwidth.
inline std::vector<double> regular_variation_limit_check(const bandwidth_schedule& schedule,
                                                         double beta,
                                                         const std::vector<long>& n_list) {
  if (!(schedule.a() * beta < 1.0)) {
    throw invalid_argument("regular_variation_limit_check: a*beta must be < 1");
  }
  std::vector<double> out;
  out.reserve(n_list.size());
  for (long n : n_list) {
    if (n < 1) throw invalid_argument("regular_variation_limit_check: n must be >= 1");
    out.push_back(schedule.partial_sum(beta, n) /
                  (static_cast<double>(n) * std::pow(schedule.h(n), beta)));
  }
  return out;
}

}  // namespace recdev
