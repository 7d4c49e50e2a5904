#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "recdev/cgf.hpp"
#include "recdev/config.hpp"
#include "recdev/deviations.hpp"
#include "recdev/estimator.hpp"
#include "recdev/format.hpp"
#include "recdev/ratefn.hpp"
#include "recdev/rng.hpp"

namespace recdev::cli {

enum exit_code : int { ok = 0, verdict_failed = 1, bad_config = 2, runtime_failure = 3 };

inline nlohmann::json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline nlohmann::json to_json(const verdict_policy& p) {
  return {{"final_relative_tolerance", p.final_relative_tolerance},
          {"chernoff_sigmas", p.chernoff_sigmas},
          {"sandwich_slack", p.sandwich_slack},
          {"bounded_factor", p.bounded_factor},
          {"bias_doubling_tolerance", p.bias_doubling_tolerance},
          {"note", "artifact acceptance tolerances, not properties of the limit theorems"}};
}

inline nlohmann::json to_json(const std::vector<verdict>& verdicts) {
  auto out = nlohmann::json::array();
  for (const auto& v : verdicts) out.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
  return out;
}

inline nlohmann::json to_json(const experiment_config& c) {
  nlohmann::json j = {{"kernel", c.kernel},
                      {"d", c.d},
                      {"bandwidth.kind", c.bandwidth_kind},
                      {"bandwidth.c", c.c},
                      {"bandwidth.a", c.a},
                      {"scaling.kind", c.scaling_kind},
                      {"scaling.b", c.b},
                      {"alpha", c.alpha_index().components()},
                      {"density", c.density},
                      {"x", c.point()},
                      {"deltas", c.deltas},
                      {"n_list", c.n_list},
                      {"replications", c.replications},
                      {"seed", c.seed},
                      {"target", c.target},
                      {"uniform", c.uniform},
                      {"t_grid", c.t_grid},
                      {"u", c.u}};
  if (!c.density_mean.empty()) j["density.mean"] = c.density_mean;
  if (!c.density_sd.empty()) j["density.sd"] = c.density_sd;
  if (!c.density_weights.empty()) j["density.weights"] = c.density_weights;
  if (!c.density_components.empty()) j["density.components"] = c.density_components;
  if (!c.density_lo.empty()) j["density.lo"] = c.density_lo;
  if (!c.density_hi.empty()) j["density.hi"] = c.density_hi;
  if (c.has_grid()) {
    j["grid.min"] = c.grid_min;
    j["grid.max"] = c.grid_max;
    j["grid.points"] = c.grid_points;
  }
  if (c.xi) j["xi"] = *c.xi;
  if (c.M_q) j["M_q"] = *c.M_q;
  return j;
}

inline nlohmann::json to_json(const deviation_row& r) {
  nlohmann::json j = {{"n", r.n},
                      {"delta", r.delta},
                      {"speed", r.speed},
                      {"replications", r.replications},
                      {"count", r.count},
                      {"count_upper", r.count_upper},
                      {"count_lower", r.count_lower},
                      {"p_hat", r.p_hat},
                      {"censored", r.censored},
                      {"normalized_log_prob", number(r.normalized_log_prob)},
                      {"theoretical", number(r.theoretical())},
                      {"sandwich_lower", number(r.sandwich_lower)},
                      {"sandwich_upper", number(r.sandwich_upper)}};
  if (r.censored) j["p_hat_upper_bound"] = 1.0 / static_cast<double>(r.replications);
  if (r.chernoff) {
    j["chernoff_u"] = number(r.chernoff->u_upper);
    j["chernoff_lambda_n"] = number(r.chernoff->lambda_upper);
    j["chernoff_bound"] = number(r.chernoff->bound);
    j["centered_count"] = r.chernoff->centered_count;
    j["centered_p_hat"] = number(r.chernoff->centered_p_hat);
    j["chernoff_dominated"] = r.chernoff->dominated;
  }
  return j;
}

/// Result of one subcommand before it is written out.
struct outcome {
  std::string csv;
  nlohmann::json per_n = nlohmann::json::array();
  nlohmann::json extra = nlohmann::json::object();
  std::vector<verdict> verdicts;
};

inline outcome run_estimate(const experiment_config& cfg) {
  const auto kernel = builtin_kernel(cfg.kernel, cfg.d);
  const auto density = make_density(cfg);
  const auto grid = cfg.has_grid() ? *make_grid(cfg) : evaluation_grid::single(cfg.point());
  recursive_estimator est(kernel, make_schedule(cfg), cfg.alpha_index(), grid);
  auto engine = replication_engine(cfg.seed, 0);
  true_density::draw_state state;
  std::vector<double> obs(static_cast<std::size_t>(cfg.d));

  outcome res;
  std::ostringstream csv;
  csv << "n";
  for (int j = 0; j < cfg.d; ++j) csv << ",x" << j + 1;
  csv << ",estimate,truth\n";
  std::size_t next = 0;
  for (long n = 1; next < cfg.n_list.size(); ++n) {
    density.sample(engine, state, obs);
    est.update(obs);
    if (n != cfg.n_list[next]) continue;
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto pt = grid.point(k);
      const double truth = density.derivative(cfg.alpha_index(), pt);
      const double value = est.value(k);
      worst = std::max(worst, std::abs(value - truth));
      csv << n;
      for (double c : pt) csv << ',' << format_double(c);
      csv << ',' << format_double(value) << ',' << format_double(truth) << '\n';
    }
    res.per_n.push_back({{"n", n}, {"max_abs_error", worst}});
    ++next;
  }
  res.csv = csv.str();
  return res;
}

inline outcome run_rate(const experiment_config& cfg, const std::vector<double>& t_values) {
  const auto kernel = builtin_kernel(cfg.kernel, cfg.d);
  const auto density = make_density(cfg);
  const auto alpha = cfg.alpha_index();
  const auto x = cfg.point();
  const double fx = density.value(x);
  const double l2 = kernel.l2_norm_sq(alpha);
  std::optional<psi_evaluator> ev;
  if (cfg.a > 0.0 && cfg.a * cfg.d < 1.0) ev.emplace(kernel, cfg.a);

  double sup_density = fx;
  if (const auto grid = make_grid(cfg)) {
    sup_density = 0.0;
    for (std::size_t k = 0; k < grid->size(); ++k) sup_density = std::max(sup_density, density.value(grid->point(k)));
  }
  const bool ldp = make_scaling(cfg).is_constant() && alpha.order() == 0;
  uniform_rate_spec spec{sup_density, cfg.a, cfg.d, alpha.order(),
                         ldp ? uniform_mode::ldp_density : uniform_mode::quadratic};
  const psi_evaluator* evp = ev ? &*ev : nullptr;

  long unresolved = 0;
  auto guarded = [&](auto&& f) -> std::string {
    try {
      return f().to_string();
    } catch (const root_error&) {
      ++unresolved;
    } catch (const overflow_error&) {
      ++unresolved;
    }
    return "";
  };
  outcome res;
  std::ostringstream csv;
  csv << "t_or_delta,I,I_x,J,g_U,g_tilde\n";
  for (double t : t_values) {
    const std::string i = ev ? guarded([&] { return ev->legendre(t); }) : "";
    const std::string ix = ev ? guarded([&] { return pointwise_rate_density(*ev, fx, t); }) : "";
    const std::string jv = quadratic_rate(fx, cfg.a, cfg.d, alpha.order(), l2, t).to_string();
    std::string gu;
    std::string gt;
    if (!ldp || ev) {
      gu = guarded([&] { return g_uniform(spec, evp, l2, t); });
      gt = guarded([&] { return uniform_rate(spec, evp, l2, std::abs(t)).g_tilde; });
    }
    csv << format_double(t) << ',' << i << ',' << ix << ',' << jv << ',' << gu << ',' << gt << '\n';
    res.per_n.push_back({{"t_or_delta", t}, {"I", i}, {"I_x", ix}, {"J", jv}, {"g_U", gu}, {"g_tilde", gt}});
  }
  res.csv = csv.str();
  res.extra["f_x"] = fx;
  res.extra["sup_density"] = sup_density;
  res.extra["unresolved_cells"] = unresolved;
  return res;
}

inline outcome run_cgf(const experiment_config& cfg) {
  const cgf_spec spec{builtin_kernel(cfg.kernel, cfg.d), make_schedule(cfg), make_scaling(cfg),
                      cfg.alpha_index(), cfg.point(), make_density(cfg)};
  outcome res;
  std::ostringstream csv;
  csv << "n,u,lambda_n,lambda_limit,abs_error\n";
  for (double u : cfg.u) {
    const auto rows = convergence_diagnostic(spec, u, cfg.n_list);
    bool decreasing = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      csv << r.n << ',' << format_double(r.u) << ',' << format_double(r.lambda_n) << ','
          << format_double(r.lambda_limit) << ',' << format_double(r.abs_error) << '\n';
      res.per_n.push_back({{"n", r.n},
                           {"u", r.u},
                           {"lambda_n", r.lambda_n},
                           {"lambda_limit", r.lambda_limit},
                           {"abs_error", r.abs_error}});
      if (k > 0 && r.abs_error > rows[k - 1].abs_error) decreasing = false;
    }
    res.verdicts.push_back({"cgf_convergence[u=" + format_double(u) + "]", decreasing,
                            decreasing ? "abs_error non-increasing along n_list"
                                       : "abs_error increased along n_list"});
  }
  res.extra["regime"] = spec.ldp_regime() ? "Lambda_L" : "Lambda_M";
  res.csv = csv.str();
  return res;
}

inline outcome from_report(const deviation_report& rep) {
  outcome res;
  res.csv = rep.csv();
  for (const auto& r : rep.rows) res.per_n.push_back(to_json(r));
  res.verdicts = rep.verdicts;
  res.extra["kind"] = rep.kind;
  res.extra["rate"] = rep.rate_name;
  res.extra["sup_density"] = number(rep.sup_density);
  return res;
}

inline outcome run_simulate(const experiment_config& cfg) {
  const auto exp = make_experiment(cfg);
  if (cfg.target == "uniform") {
    const uniform_kind kind = cfg.uniform == "unbounded" ? uniform_kind::unbounded
                              : cfg.uniform == "corollary" ? uniform_kind::corollary
                                                           : uniform_kind::bounded;
    return from_report(run_uniform(exp, kind));
  }
  const auto mode = exp.scaling.is_constant() ? pointwise_mode::ldp : pointwise_mode::mdp;
  return from_report(run_pointwise(exp, mode));
}

inline outcome run_bias(const experiment_config& cfg) {
  const auto rep = run_bias_study(make_experiment(cfg));
  outcome res;
  res.csv = rep.csv();
  for (const auto& r : rep.rows) {
    res.per_n.push_back({{"n", r.n}, {"bias", r.bias}, {"normalizer", r.normalizer}, {"ratio", r.ratio}});
  }
  res.verdicts = rep.verdicts;
  res.extra["q"] = rep.q;
  res.extra["M_q"] = rep.M_q;
  res.extra["abs_moment"] = rep.abs_moment;
  res.extra["bound"] = rep.bound;
  if (rep.normalized_sup) {
    res.extra["sup_abs_bias"] = *rep.sup_abs_bias;
    res.extra["normalized_sup"] = *rep.normalized_sup;
  }
  return res;
}

inline outcome run_chernoff(const experiment_config& cfg) {
  const auto exp = make_experiment(cfg);
  const auto expected = expected_estimates(exp, exp.x);
  std::vector<std::vector<double>> centers;
  for (double e : expected) centers.push_back({e});
  const auto counts = simulate_tail_counts(exp, evaluation_grid::single(exp.x), &centers);
  const auto rows = chernoff_upper_curve(exp, expected, &counts.centered);

  outcome res;
  std::ostringstream csv;
  csv << "n,delta,speed,u_upper,lambda_upper,u_lower,lambda_lower,bound,centered_count,"
         "centered_p_hat,sigma,dominated\n";
  long bad = 0;
  for (const auto& r : rows) {
    const double u_low = r.u_lower ? *r.u_lower : std::nan("");
    csv << r.n << ',' << format_double(r.delta) << ',' << format_double(r.speed) << ','
        << format_double(r.u_upper) << ',' << format_double(r.lambda_upper) << ','
        << format_double(u_low) << ',' << format_double(r.lambda_lower) << ','
        << format_double(r.bound) << ',' << r.centered_count << ','
        << format_double(r.centered_p_hat) << ',' << format_double(r.sigma) << ','
        << (r.dominated ? 1 : 0) << '\n';
    res.per_n.push_back({{"n", r.n},
                         {"delta", r.delta},
                         {"speed", r.speed},
                         {"u_upper", r.u_upper},
                         {"lambda_upper", r.lambda_upper},
                         {"u_lower", number(u_low)},
                         {"lambda_lower", number(r.lambda_lower)},
                         {"bound", r.bound},
                         {"centered_count", r.centered_count},
                         {"centered_p_hat", r.centered_p_hat},
                         {"dominated", r.dominated}});
    bad += r.dominated ? 0 : 1;
  }
  res.verdicts.push_back({"chernoff", bad == 0,
                          std::to_string(bad) + " cell(s) above the finite-n bound beyond " +
                              format_double(exp.policy.chernoff_sigmas) + " sigma"});
  res.csv = csv.str();
  return res;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw error("write failed for '" + path.string() + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Entry point shared by the binary and the tests. args excludes argv[0].
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Recursive kernel density estimation: estimates, deviation rates and Monte Carlo checks", "recdev"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  std::string t_grid;
  std::string u_list;
  std::string n_list;
  std::string delta_list;
  std::optional<long> replications;
  std::optional<std::uint64_t> seed;

  const std::vector<std::pair<std::string, std::string>> subs = {
      {"estimate", "stream samples through the recursive estimator"},
      {"rate", "tabulate I, I_x, J, g_U and g~_U on a t grid"},
      {"cgf", "finite-n cumulant generating function against its limit"},
      {"simulate", "Monte Carlo tail probabilities against the rate"},
      {"bias", "bias ratio and sup bound study"},
      {"chernoff", "finite-n Chernoff bound against Monte Carlo"}};
  for (const auto& [name, help] : subs) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "flat JSON config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--set", sets, "override a config key: key=value (repeatable)");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--replications", replications, "Monte Carlo replications");
    sub->add_option("--n", n_list, "comma separated n values");
    sub->add_option("--delta", delta_list, "comma separated deviation thresholds");
    sub->add_option("--u", u_list, "comma separated u values");
    sub->add_option("--t-grid", t_grid, "a:b:step");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::bad_config;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  experiment_config cfg;
  std::vector<double> t_values;
  try {
    std::vector<std::pair<std::string, nlohmann::json>> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw config_error("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), detail::parse_override_value(s.substr(eq + 1)));
    }
    auto numbers = [](const std::string& list) {
      auto j = nlohmann::json::array();
      for (const auto& item : split_list(list)) {
        const auto v = detail::parse_override_value(item);
        if (!v.is_number()) throw config_error("'" + item + "' is not a number");
        j.push_back(v);
      }
      return j;
    };
    if (seed) overrides.emplace_back("seed", *seed);
    if (replications) overrides.emplace_back("replications", *replications);
    if (!n_list.empty()) overrides.emplace_back("n_list", numbers(n_list));
    if (!delta_list.empty()) overrides.emplace_back("deltas", numbers(delta_list));
    if (!u_list.empty()) overrides.emplace_back("u", numbers(u_list));
    if (!t_grid.empty()) overrides.emplace_back("t_grid", t_grid);
    if (!out_dir.empty()) overrides.emplace_back("out", out_dir);
    cfg = load_config(config_path, overrides);
    if (subcommand == "rate") t_values = parse_range(cfg.t_grid);
  } catch (const error& e) {
    err << "recdev " << subcommand << ": " << e.what() << '\n';
    return exit_code::bad_config;
  }

  const auto violations = validate(cfg, subcommand);
  if (!violations.empty()) {
    for (const auto& v : violations) err << "recdev " << subcommand << ": " << v.message << '\n';
    return exit_code::bad_config;
  }

  outcome res;
  try {
    if (subcommand == "estimate") res = run_estimate(cfg);
    else if (subcommand == "rate") res = run_rate(cfg, t_values);
    else if (subcommand == "cgf") res = run_cgf(cfg);
    else if (subcommand == "simulate") res = run_simulate(cfg);
    else if (subcommand == "bias") res = run_bias(cfg);
    else res = run_chernoff(cfg);
  } catch (const std::exception& e) {
    err << "recdev " << subcommand << ": " << e.what() << '\n';
    return exit_code::runtime_failure;
  }

  const bool pass = std::ranges::all_of(res.verdicts, [](const verdict& v) { return v.pass; });
  nlohmann::json summary = {{"subcommand", subcommand},
                            {"config", to_json(cfg)},
                            {"overrides", cfg.overrides},
                            {"policy", to_json(verdict_policy{})},
                            {"per_n", res.per_n},
                            {"verdicts", to_json(res.verdicts)},
                            {"pass", pass}};
  for (const auto& [k, v] : res.extra.items()) summary[k] = v;

  try {
    const std::filesystem::path dir(cfg.out);
    std::filesystem::create_directories(dir);
    write_text(dir / (subcommand + ".csv"), res.csv);
    write_text(dir / (subcommand + ".json"), summary.dump(2) + "\n");
    out << "wrote " << (dir / (subcommand + ".csv")).string() << " and "
        << (dir / (subcommand + ".json")).string() << '\n';
  } catch (const std::exception& e) {
    err << "recdev " << subcommand << ": " << e.what() << '\n';
    return exit_code::runtime_failure;
  }
  for (const auto& v : res.verdicts) {
    out << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << '\n';
  }
  return pass ? exit_code::ok : exit_code::verdict_failed;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace recdev::cli
