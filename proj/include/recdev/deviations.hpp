#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "recdev/bandwidth.hpp"
#include "recdev/cgf.hpp"
#include "recdev/density.hpp"
#include "recdev/error.hpp"
#include "recdev/estimator.hpp"
#include "recdev/format.hpp"
#include "recdev/kernels.hpp"
#include "recdev/parallel.hpp"
#include "recdev/ratefn.hpp"
#include "recdev/rng.hpp"

namespace recdev {

/// Acceptance thresholds applied by the verdicts. These are tolerances of
/// this tool, chosen for desk-scale runs; they are echoed into every report.
struct verdict_policy {
  double final_relative_tolerance = 0.30;
  double chernoff_sigmas = 3.0;
  double sandwich_slack = 0.30;
  double bounded_factor = 0.70;
  double bias_doubling_tolerance = 0.10;
};

struct deviation_experiment {
  kernel_model kernel;
  bandwidth_schedule schedule;
  scaling_sequence scaling;
  multi_index alpha;
  true_density density;
  std::vector<double> x;
  std::optional<evaluation_grid> region;
  std::vector<double> deltas;
  std::vector<long> n_list;
  long replications = 1;
  std::uint64_t seed = 0;
  std::optional<double> xi;
  std::optional<double> M_q;
  verdict_policy policy{};

  void check(bool sup_mode) const {
    const int d = kernel.dimension();
    kernel.require_supported(alpha);
    if (density.dimension() != d) throw invalid_argument("experiment: density dimension differs from kernel");
    if (!sup_mode && static_cast<int>(x.size()) != d) {
      throw invalid_argument("experiment: point x has the wrong dimension");
    }
    if (sup_mode) {
      if (!region || region->size() == 0) throw invalid_argument("experiment: sup mode needs a nonempty region grid");
      if (region->dimension() != d) throw invalid_argument("experiment: region grid has the wrong dimension");
    }
    if (replications < 1) throw invalid_argument("experiment: replications must be >= 1");
    if (deltas.empty()) throw invalid_argument("experiment: at least one delta is required");
    for (double delta : deltas) {
      if (!(delta > 0.0)) throw invalid_argument("experiment: deltas must be > 0");
    }
    if (n_list.empty() || n_list.front() < 1) throw invalid_argument("experiment: n_list must be nonempty and >= 1");
    for (std::size_t k = 1; k < n_list.size(); ++k) {
      if (n_list[k] <= n_list[k - 1]) throw invalid_argument("experiment: n_list must increase");
    }
  }

  /// Constant scaling with |alpha| = 0 has the psi-based rate.
  [[nodiscard]] bool density_ldp_regime() const {
    return scaling.is_constant() && alpha.order() == 0;
  }
};

/// Integer exceedance counts, indexed [n][delta].
struct tail_counts {
  std::size_t deltas = 0;
  std::vector<long long> two_sided;
  std::vector<long long> upper;
  std::vector<long long> lower;

  tail_counts() = default;
  tail_counts(std::size_t n_count, std::size_t delta_count)
      : deltas(delta_count),
        two_sided(n_count * delta_count, 0),
        upper(n_count * delta_count, 0),
        lower(n_count * delta_count, 0) {}

  [[nodiscard]] std::size_t index(std::size_t n_idx, std::size_t d_idx) const {
    return n_idx * deltas + d_idx;
  }

  tail_counts& operator+=(const tail_counts& o) {
    for (std::size_t k = 0; k < two_sided.size(); ++k) {
      two_sided[k] += o.two_sided[k];
      upper[k] += o.upper[k];
      lower[k] += o.lower[k];
    }
    return *this;
  }

  bool operator==(const tail_counts&) const = default;
};

struct simulation_counts {
  tail_counts raw;       // sup_U v_n (f_n - f)
  tail_counts centered;  // sup_U v_n (f_n - E f_n), when centers were given
  bool has_centered = false;
};

/// Runs R independent streams up to max(n_list) on the grid and counts, at
/// every n in n_list and every delta, the replications whose sup over the
/// grid of |v_n (f_n - f)| (and of each signed side) reaches delta.
/// centers[n_idx][k] = E f_n(x_k) enables the centered counts.
inline simulation_counts simulate_tail_counts(const deviation_experiment& exp,
                                              const evaluation_grid& grid,
                                              const std::vector<std::vector<double>>* centers = nullptr) {
  const std::size_t n_count = exp.n_list.size();
  const std::size_t d_count = exp.deltas.size();
  const std::size_t points = grid.size();
  const int d = exp.kernel.dimension();
  if (centers && (centers->size() != n_count ||
                  std::ranges::any_of(*centers, [&](const auto& c) { return c.size() != points; }))) {
    throw invalid_argument("simulate: centers must be given for every n and grid point");
  }

  std::vector<double> truth(points);
  for (std::size_t k = 0; k < points; ++k) truth[k] = exp.density.derivative(exp.alpha, grid.point(k));
  std::vector<double> v(n_count);
  for (std::size_t i = 0; i < n_count; ++i) v[i] = exp.scaling.v(exp.n_list[i]);

  const auto reps = static_cast<std::size_t>(exp.replications);
  const unsigned workers = std::max(1u, std::min<unsigned>(worker_count(), static_cast<unsigned>(reps)));
  std::vector<simulation_counts> partial(workers);

  parallel_chunks(reps, workers, [&](unsigned w, std::size_t begin, std::size_t end) {
    simulation_counts local{tail_counts(n_count, d_count), tail_counts(n_count, d_count),
                            centers != nullptr};
    recursive_estimator est(exp.kernel, exp.schedule, exp.alpha, grid);
    std::vector<double> obs(static_cast<std::size_t>(d));
    auto tally = [&](tail_counts& counts, std::size_t n_idx, double two, double up, double low) {
      for (std::size_t j = 0; j < d_count; ++j) {
        const double delta = exp.deltas[j];
        const std::size_t at = counts.index(n_idx, j);
        if (two >= delta) ++counts.two_sided[at];
        if (up >= delta) ++counts.upper[at];
        if (low >= delta) ++counts.lower[at];
      }
    };
    for (std::size_t r = begin; r < end; ++r) {
      auto engine = replication_engine(exp.seed, r);
      true_density::draw_state state;
      est.reset();
      std::size_t next = 0;
      for (long n = 1; next < n_count; ++n) {
        exp.density.sample(engine, state, obs);
        est.update(obs);
        if (n != exp.n_list[next]) continue;
        double up = -std::numeric_limits<double>::infinity();
        double low = up;
        double c_up = up;
        double c_low = up;
        for (std::size_t k = 0; k < points; ++k) {
          const double fn = est.value(k);
          const double dev = v[next] * (fn - truth[k]);
          up = std::max(up, dev);
          low = std::max(low, -dev);
          if (centers) {
            const double cdev = v[next] * (fn - (*centers)[next][k]);
            c_up = std::max(c_up, cdev);
            c_low = std::max(c_low, -cdev);
          }
        }
        tally(local.raw, next, std::max(up, low), up, low);
        if (centers) tally(local.centered, next, std::max(c_up, c_low), c_up, c_low);
        ++next;
      }
    }
    partial[w] = std::move(local);
  });

  simulation_counts total{tail_counts(n_count, d_count), tail_counts(n_count, d_count),
                          centers != nullptr};
  for (const auto& p : partial) {
    total.raw += p.raw;
    if (centers) total.centered += p.centered;
  }
  return total;
}

/// Finite-n Chernoff bound for the centered statistic at one (n, delta).
struct chernoff_row {
  long n = 0;
  double delta = 0.0;
  double speed = 0.0;
  double u_upper = 0.0;
  double lambda_upper = 0.0;
  double bound_upper = 1.0;
  std::optional<double> u_lower;
  double lambda_lower = std::numeric_limits<double>::quiet_NaN();
  double bound_lower = 1.0;
  double bound = 1.0;  // min(1, upper + lower)
  long long centered_count = -1;
  double centered_p_hat = std::numeric_limits<double>::quiet_NaN();
  double sigma = std::numeric_limits<double>::quiet_NaN();
  bool dominated = true;
};

struct deviation_row {
  long n = 0;
  double delta = 0.0;
  double speed = 0.0;
  long replications = 0;
  long long count = 0;
  long long count_upper = 0;
  long long count_lower = 0;
  double p_hat = 0.0;
  bool censored = false;
  /// (1/speed) log p_hat; for a censored cell the bound (1/speed) log(1/R).
  double normalized_log_prob = 0.0;
  rate_value rate = rate_value::infinity();
  double sandwich_lower = std::numeric_limits<double>::quiet_NaN();
  double sandwich_upper = std::numeric_limits<double>::quiet_NaN();
  std::optional<chernoff_row> chernoff;

  [[nodiscard]] double theoretical() const { return -rate.as_double(); }
};

struct verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct deviation_report {
  std::string kind;
  std::string rate_name;
  std::vector<deviation_row> rows;
  std::vector<verdict> verdicts;
  verdict_policy policy{};
  double sup_density = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] bool all_pass() const {
    return std::ranges::all_of(verdicts, [](const verdict& v) { return v.pass; });
  }

  [[nodiscard]] std::vector<const deviation_row*> rows_for(double delta) const {
    std::vector<const deviation_row*> out;
    for (const auto& r : rows) {
      if (r.delta == delta) out.push_back(&r);
    }
    return out;
  }

  [[nodiscard]] std::string csv() const {
    std::ostringstream out;
    out << "n,delta,speed,replications,count,count_upper,count_lower,p_hat,censored,"
           "normalized_log_prob,theoretical,sandwich_lower,sandwich_upper,"
           "chernoff_u,chernoff_lambda_n,chernoff_bound,centered_count,centered_p_hat\n";
    for (const auto& r : rows) {
      out << r.n << ',' << format_double(r.delta) << ',' << format_double(r.speed) << ','
          << r.replications << ',' << r.count << ',' << r.count_upper << ',' << r.count_lower
          << ',' << format_double(r.p_hat) << ',' << (r.censored ? 1 : 0) << ','
          << format_double(r.normalized_log_prob) << ',' << format_double(r.theoretical()) << ','
          << format_double(r.sandwich_lower) << ',' << format_double(r.sandwich_upper) << ',';
      if (r.chernoff) {
        const auto& c = *r.chernoff;
        out << format_double(c.u_upper) << ',' << format_double(c.lambda_upper) << ','
            << format_double(c.bound) << ',' << c.centered_count << ','
            << format_double(c.centered_p_hat);
      } else {
        out << ",,,,";
      }
      out << '\n';
    }
    return out.str();
  }
};

namespace detail {

inline std::string delta_tag(double delta) { return "[delta=" + format_double(delta) + "]"; }

inline uniform_rate_spec rate_spec_for(const deviation_experiment& exp, double sup_density) {
  uniform_rate_spec s;
  s.sup_density = sup_density;
  s.a = exp.schedule.a();
  s.d = exp.kernel.dimension();
  s.alpha_order = exp.alpha.order();
  s.mode = exp.density_ldp_regime() ? uniform_mode::ldp_density : uniform_mode::quadratic;
  return s;
}

inline std::optional<psi_evaluator> psi_for(const deviation_experiment& exp) {
  if (!exp.density_ldp_regime()) return std::nullopt;
  return psi_evaluator(exp.kernel, exp.schedule.a());
}

inline std::vector<deviation_row> rows_from_counts(const deviation_experiment& exp,
                                                   const tail_counts& counts,
                                                   const std::vector<rate_value>& rates) {
  std::vector<deviation_row> rows;
  const double reps = static_cast<double>(exp.replications);
  for (std::size_t i = 0; i < exp.n_list.size(); ++i) {
    const long n = exp.n_list[i];
    const double b = speed(exp.schedule, exp.scaling, exp.alpha.order(), exp.kernel.dimension(), n);
    for (std::size_t j = 0; j < exp.deltas.size(); ++j) {
      deviation_row r;
      r.n = n;
      r.delta = exp.deltas[j];
      r.speed = b;
      r.replications = exp.replications;
      const std::size_t at = counts.index(i, j);
      r.count = counts.two_sided[at];
      r.count_upper = counts.upper[at];
      r.count_lower = counts.lower[at];
      r.p_hat = static_cast<double>(r.count) / reps;
      r.censored = r.count == 0;
      r.normalized_log_prob = std::log(r.censored ? 1.0 / reps : r.p_hat) / b;
      r.rate = rates[j];
      rows.push_back(r);
    }
  }
  return rows;
}

// Per delta: some replication exceeded delta at some n.
inline void add_power_verdicts(const deviation_report& rep, const std::vector<double>& deltas,
                               std::vector<verdict>& out) {
  for (double delta : deltas) {
    const auto rows = rep.rows_for(delta);
    if (rows.empty() || rows.front()->rate.is_infinite()) continue;
    const bool any = std::ranges::any_of(rows, [](const deviation_row* r) { return r->count > 0; });
    out.push_back({"powered" + delta_tag(delta), any,
                   any ? "nonzero exceedance counts observed"
                       : "no exceedance at any n: experiment underpowered, increase replications or lower delta"});
  }
}

// Per delta: |normalized log-prob - theoretical| never grows along n and the
// final value is within tol * rate of the theoretical one.
inline void add_approach_verdicts(const deviation_report& rep, const std::vector<double>& deltas,
                                  double tol, std::vector<verdict>& out) {
  for (double delta : deltas) {
    const auto rows = rep.rows_for(delta);
    if (rows.empty()) continue;
    const auto* last = rows.back();
    if (last->rate.is_infinite()) {
      const bool vanished = last->count == 0;
      out.push_back({"degenerate" + delta_tag(delta), vanished,
                     vanished ? "no exceedance at the largest n, as an infinite rate requires"
                              : "exceedances at the largest n despite an infinite rate"});
      continue;
    }
    std::vector<double> gaps;
    for (const auto* r : rows) {
      if (!r->censored) gaps.push_back(std::abs(r->normalized_log_prob - r->theoretical()));
    }
    bool shrinking = gaps.size() >= 2;
    for (std::size_t k = 1; k < gaps.size(); ++k) shrinking = shrinking && gaps[k] <= gaps[k - 1];
    std::ostringstream msg;
    msg << "gaps";
    for (double g : gaps) msg << ' ' << format_double(g);
    if (gaps.size() < 2) msg << " (fewer than two uncensored n)";
    out.push_back({"approach" + delta_tag(delta), shrinking, msg.str()});

    const double rate = last->rate.value();
    const double gap = std::abs(last->normalized_log_prob - last->theoretical());
    const bool ok = !last->censored && gap <= tol * rate;
    std::ostringstream fin;
    fin << "final " << format_double(last->normalized_log_prob) << " vs "
        << format_double(last->theoretical()) << ", gap " << format_double(gap) << " (limit "
        << format_double(tol * rate) << ")" << (last->censored ? ", censored" : "");
    out.push_back({"final" + delta_tag(delta), ok, fin.str()});
  }
}

}  // namespace detail

/// Finite-n Chernoff bounds P[|v_n (f_n - E f_n)| >= delta] <=
/// exp(-b_n(u delta - Lambda_n(u))) + exp(-b_n(-u' delta - Lambda_n(u'))),
/// at u = phi(delta) > 0 and u' = phi(-delta) < 0 from the limit rate.
/// expected[n_idx] = E f_n(x) decides when the lower tail is empty.
inline std::vector<chernoff_row> chernoff_upper_curve(const deviation_experiment& exp,
                                                      const std::vector<double>& expected,
                                                      const tail_counts* centered = nullptr) {
  exp.check(false);
  if (expected.size() != exp.n_list.size()) {
    throw invalid_argument("chernoff: need E f_n(x) for every n");
  }
  const cgf_spec spec{exp.kernel, exp.schedule, exp.scaling, exp.alpha, exp.x, exp.density};
  const double fx = exp.density.value(exp.x);
  const auto ev = detail::psi_for(exp);
  const psi_evaluator* evp = ev ? &*ev : nullptr;
  const uniform_rate_spec rs = detail::rate_spec_for(exp, fx);
  const double l2 = exp.kernel.l2_norm_sq(exp.alpha);
  const double reps = static_cast<double>(exp.replications);

  std::vector<chernoff_row> rows;
  for (std::size_t j = 0; j < exp.deltas.size(); ++j) {
    const double delta = exp.deltas[j];
    const double u_up = phi_maximizer(rs, evp, l2, delta);
    const auto u_low = phi_maximizer_lower(rs, evp, l2, delta);
    for (std::size_t i = 0; i < exp.n_list.size(); ++i) {
      chernoff_row r;
      r.n = exp.n_list[i];
      r.delta = delta;
      r.speed = speed(exp.schedule, exp.scaling, exp.alpha.order(), exp.kernel.dimension(), r.n);
      r.u_upper = u_up;
      r.lambda_upper = cgf_finite_n(spec, u_up, r.n);
      r.bound_upper = std::min(1.0, std::exp(-r.speed * (u_up * delta - r.lambda_upper)));
      r.u_lower = u_low;
      const bool lower_empty = exp.kernel.nonnegative() && exp.alpha.order() == 0 &&
                               delta > exp.scaling.v(r.n) * expected[i];
      if (lower_empty) {
        r.bound_lower = 0.0;
      } else if (u_low) {
        r.lambda_lower = cgf_finite_n(spec, *u_low, r.n);
        r.bound_lower = std::min(1.0, std::exp(-r.speed * (-*u_low * delta - r.lambda_lower)));
      }
      r.bound = std::min(1.0, r.bound_upper + r.bound_lower);
      if (centered) {
        r.centered_count = centered->two_sided[centered->index(i, j)];
        r.centered_p_hat = static_cast<double>(r.centered_count) / reps;
        r.sigma = std::sqrt(r.centered_p_hat * (1.0 - r.centered_p_hat) / reps);
        r.dominated = r.centered_p_hat - exp.policy.chernoff_sigmas * r.sigma <= r.bound;
      }
      rows.push_back(r);
    }
  }
  return rows;
}

/// E f_n(x) at every n of the experiment (one quadrature pass).
inline std::vector<double> expected_estimates(const deviation_experiment& exp,
                                              std::span<const double> x) {
  const auto bias = bias_sequence(exp.kernel, exp.schedule, exp.alpha, x, exp.density, exp.n_list);
  const double truth = exp.density.derivative(exp.alpha, x);
  std::vector<double> out;
  for (double b : bias) out.push_back(truth + b);
  return out;
}

enum class pointwise_mode { ldp, mdp };

/// Monte Carlo P[v_n |d^[alpha] f_n(x) - d^[alpha] f(x)| >= delta] against the
/// pointwise rate, with the finite-n Chernoff curve of the centered statistic.
inline deviation_report run_pointwise(const deviation_experiment& exp, pointwise_mode mode) {
  exp.check(false);
  if (mode == pointwise_mode::ldp && !exp.scaling.is_constant()) {
    throw invalid_argument("run_pointwise: ldp mode needs v_n = 1");
  }
  if (mode == pointwise_mode::mdp && exp.scaling.is_constant()) {
    throw invalid_argument("run_pointwise: mdp mode needs v_n = n^b");
  }
  const double fx = exp.density.value(exp.x);
  const auto ev = detail::psi_for(exp);
  const double l2 = exp.kernel.l2_norm_sq(exp.alpha);
  std::vector<rate_value> rates;
  for (double delta : exp.deltas) {
    if (ev) {
      rates.push_back(min(pointwise_rate_density(*ev, fx, delta), pointwise_rate_density(*ev, fx, -delta)));
    } else {
      rates.push_back(quadratic_rate(fx, exp.schedule.a(), exp.kernel.dimension(), exp.alpha.order(), l2, delta));
    }
  }

  const auto grid = evaluation_grid::single(exp.x);
  const bool chernoff = fx > 0.0;
  std::vector<double> expected;
  std::vector<std::vector<double>> centers;
  if (chernoff) {
    expected = expected_estimates(exp, exp.x);
    for (double e : expected) centers.push_back({e});
  }
  const auto counts = simulate_tail_counts(exp, grid, chernoff ? &centers : nullptr);

  deviation_report rep;
  rep.kind = mode == pointwise_mode::ldp ? "pointwise_ldp" : "pointwise_mdp";
  rep.rate_name = ev ? "I_x" : "J";
  rep.policy = exp.policy;
  rep.sup_density = fx;
  rep.rows = detail::rows_from_counts(exp, counts.raw, rates);
  if (chernoff) {
    const auto curve = chernoff_upper_curve(exp, expected, &counts.centered);
    for (auto& row : rep.rows) {
      for (const auto& c : curve) {
        if (c.n == row.n && c.delta == row.delta) row.chernoff = c;
      }
    }
  }

  detail::add_power_verdicts(rep, exp.deltas, rep.verdicts);
  detail::add_approach_verdicts(rep, exp.deltas, exp.policy.final_relative_tolerance, rep.verdicts);
  if (chernoff) {
    long bad = 0;
    for (const auto& r : rep.rows) bad += r.chernoff && !r.chernoff->dominated ? 1 : 0;
    rep.verdicts.push_back({"chernoff", bad == 0,
                            std::to_string(bad) + " cell(s) above the finite-n bound beyond " +
                                format_double(exp.policy.chernoff_sigmas) + " sigma"});
  }
  return rep;
}

enum class uniform_kind { bounded, unbounded, corollary };

/// Monte Carlo P[sup_{x in grid} v_n |d^[alpha] f_n(x) - d^[alpha] f(x)| >= delta]
/// against g~_U(delta), with ||f||_U taken as the grid maximum.
inline deviation_report run_uniform(const deviation_experiment& exp, uniform_kind kind) {
  exp.check(true);
  const evaluation_grid& grid = *exp.region;
  if (kind == uniform_kind::unbounded && !(exp.xi && *exp.xi > 0.0)) {
    throw invalid_argument("run_uniform: unbounded mode needs a moment exponent xi > 0");
  }
  double sup_density = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    sup_density = std::max(sup_density, exp.density.value(grid.point(k)));
  }
  const auto ev = detail::psi_for(exp);
  const psi_evaluator* evp = ev ? &*ev : nullptr;
  const uniform_rate_spec rs = detail::rate_spec_for(exp, sup_density);
  const double l2 = exp.kernel.l2_norm_sq(exp.alpha);
  std::vector<rate_value> rates;
  for (double delta : exp.deltas) rates.push_back(uniform_rate(rs, evp, l2, delta).g_tilde);

  const auto counts = simulate_tail_counts(exp, grid);
  deviation_report rep;
  rep.kind = kind == uniform_kind::bounded     ? "uniform_bounded"
             : kind == uniform_kind::unbounded ? "uniform_unbounded"
                                               : "uniform_corollary";
  rep.rate_name = "g_tilde";
  rep.policy = exp.policy;
  rep.sup_density = sup_density;
  rep.rows = detail::rows_from_counts(exp, counts.raw, rates);

  const double d = exp.kernel.dimension();
  for (auto& r : rep.rows) {
    if (kind != uniform_kind::unbounded || r.rate.is_infinite()) continue;
    const double g = r.rate.value();
    r.sandwich_lower = -g - exp.policy.sandwich_slack * g;
    r.sandwich_upper = -(*exp.xi / (*exp.xi + d)) * g + exp.policy.sandwich_slack * g;
  }

  detail::add_power_verdicts(rep, exp.deltas, rep.verdicts);
  if (kind == uniform_kind::corollary) {
    detail::add_approach_verdicts(rep, exp.deltas, exp.policy.final_relative_tolerance, rep.verdicts);
    return rep;
  }
  for (double delta : exp.deltas) {
    const auto rows = rep.rows_for(delta);
    const auto* last = rows.back();
    if (last->rate.is_infinite()) continue;
    const double g = last->rate.value();
    const double value = last->normalized_log_prob;
    std::ostringstream msg;
    msg << "final " << format_double(value) << (last->censored ? " (censored bound)" : "");
    bool ok = false;
    if (kind == uniform_kind::bounded) {
      const double limit = -exp.policy.bounded_factor * g;
      ok = value <= limit;
      msg << " <= " << format_double(limit) << " required";
      rep.verdicts.push_back({"bounded_upper" + detail::delta_tag(delta), ok, msg.str()});
    } else {
      ok = !last->censored && value >= last->sandwich_lower && value <= last->sandwich_upper;
      msg << " in [" << format_double(last->sandwich_lower) << ", "
          << format_double(last->sandwich_upper) << "] required";
      rep.verdicts.push_back({"sandwich" + detail::delta_tag(delta), ok, msg.str()});
    }
  }
  return rep;
}

struct bias_row {
  long n = 0;
  double bias = 0.0;
  double normalizer = 0.0;  // sum_{i<=n} h_i^q / n
  double ratio = 0.0;
};

struct bias_report {
  int q = 0;
  double M_q = 0.0;
  double abs_moment = 0.0;
  double bound = 0.0;  // M_q / q! * int ||z||^q |K|
  std::vector<bias_row> rows;
  std::optional<double> sup_abs_bias;
  std::optional<double> normalized_sup;
  std::vector<verdict> verdicts;
  verdict_policy policy{};

  [[nodiscard]] bool all_pass() const {
    return std::ranges::all_of(verdicts, [](const verdict& v) { return v.pass; });
  }

  [[nodiscard]] std::string csv() const {
    std::ostringstream out;
    out << "n,bias,normalizer,ratio\n";
    for (const auto& r : rows) {
      out << r.n << ',' << format_double(r.bias) << ',' << format_double(r.normalizer) << ','
          << format_double(r.ratio) << '\n';
    }
    return out.str();
  }
};

/// Bias B_n(x) = E d^[alpha] f_n(x) - d^[alpha] f(x) by quadrature, its ratio
/// to sum h_i^q / n, and (with a region) the sup over the grid at the largest
/// n against M_q/q! int ||z||^q |K|.
inline bias_report run_bias_study(const deviation_experiment& exp) {
  exp.check(false);
  const int q = exp.kernel.moment_order();
  if (q < 1) throw invalid_argument("bias study: kernel has no moment order");
  bias_report rep;
  rep.q = q;
  rep.policy = exp.policy;
  if (exp.M_q) {
    rep.M_q = *exp.M_q;
  } else if (exp.kernel.dimension() == 1) {
    rep.M_q = exp.density.sup_abs_derivative_1d(q + exp.alpha.order());
  } else {
    throw invalid_argument("bias study: M_q must be supplied when d > 1");
  }
  rep.abs_moment = kernel_abs_moment(exp.kernel, q);
  rep.bound = rep.M_q / std::tgamma(q + 1.0) * rep.abs_moment;

  const auto bias = bias_sequence(exp.kernel, exp.schedule, exp.alpha, exp.x, exp.density, exp.n_list);
  for (std::size_t i = 0; i < exp.n_list.size(); ++i) {
    const long n = exp.n_list[i];
    const double norm = exp.schedule.partial_sum(q, n) / static_cast<double>(n);
    rep.rows.push_back({n, bias[i], norm, bias[i] / norm});
  }
  if (rep.rows.size() >= 2) {
    const double prev = rep.rows[rep.rows.size() - 2].ratio;
    const double last = rep.rows.back().ratio;
    const double change = std::abs(last - prev) / std::max(std::abs(prev), std::numeric_limits<double>::min());
    rep.verdicts.push_back({"ratio_stable", change < exp.policy.bias_doubling_tolerance,
                            "relative change " + format_double(change) + " over the last step"});
  }
  if (exp.region) {
    const long n = exp.n_list.back();
    const double norm = rep.rows.back().normalizer;
    double sup = 0.0;
    for (std::size_t k = 0; k < exp.region->size(); ++k) {
      const auto pt = exp.region->point(k);
      sup = std::max(sup, std::abs(bias_sequence(exp.kernel, exp.schedule, exp.alpha, pt, exp.density, {n}).front()));
    }
    rep.sup_abs_bias = sup;
    rep.normalized_sup = sup / norm;
    rep.verdicts.push_back({"sup_bound", *rep.normalized_sup <= rep.bound,
                            "normalized sup " + format_double(*rep.normalized_sup) + " vs bound " +
                                format_double(rep.bound)});
  }
  return rep;
}

}  // namespace recdev
