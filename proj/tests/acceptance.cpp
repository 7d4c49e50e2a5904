#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "recdev/cgf.hpp"
#include "recdev/cli.hpp"
#include "recdev/deviations.hpp"
#include "recdev/rng.hpp"

using namespace recdev;

namespace {

struct outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<outcome()>& body, double budget_s) {
  const auto start = std::chrono::steady_clock::now();
  outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::ostringstream line;
  line << (pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << "; "
       << format_double(std::round(secs * 10) / 10) << "s of " << format_double(budget_s) << "s"
       << (in_time ? "" : " (over budget)");
  std::cout << line.str() << std::endl;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const std::vector<double> bandwidth_exponents{0.2, 0.25, 0.4};
const std::vector<std::string> duality_kernels{"gaussian", "epanechnikov"};

outcome legendre_duality() {
  double worst = 0.0;
  double worst_min = 0.0;
  std::size_t checked = 0;
  for (const auto& name : duality_kernels) {
    for (double a : bandwidth_exponents) {
      const psi_evaluator ev(builtin_kernel(name, 1), a);
      const std::size_t points = 10000;
      const double lo = -20.0;
      const double hi = 5.0;
      std::vector<double> u(points);
      std::vector<double> g(points);
      for (std::size_t k = 0; k < points; ++k) u[k] = lo + (hi - lo) * static_cast<double>(k) / (points - 1);
      parallel_for(points, [&](std::size_t k) { g[k] = ev.psi(u[k]); });
      for (int j = 0; j < 50; ++j) {
        const double t = ev.psi_prime(-15.0 + 19.0 * j / 49.0);
        const auto i = ev.legendre(t);
        if (i.is_infinite()) return {false, name + " a=" + fmt(a) + ": infinite I at t=" + fmt(t)};
        worst = std::max(worst, std::abs(i.value() - oracle::grid_sup(u, g, t)));
        ++checked;
      }
      worst_min = std::max(worst_min, ev.legendre(ev.mean()).value());
    }
  }
  return {worst <= 1e-6 && worst_min <= 1e-10,
          std::to_string(checked) + " t-values, max |I - grid sup| = " + fmt(worst) +
              " (tol 1e-6), max I(1/(1-ad)) = " + fmt(worst_min) + " (tol 1e-10)"};
}

outcome branch_correctness() {
  bool ok = true;
  std::ostringstream msg;
  for (double a : bandwidth_exponents) {
    const psi_evaluator gauss(builtin_kernel("gaussian", 1), a);
    for (double t : {-2.0, -0.5, -1e-9}) ok = ok && gauss.legendre(t).is_infinite();
    ok = ok && gauss.legendre(0.0).is_infinite();
    const psi_evaluator epa(builtin_kernel("epanechnikov", 1), a);
    const double expected = 2.0 / (1.0 - a);
    const auto i0 = epa.legendre(0.0);
    const bool exact = i0.finite() && std::abs(i0.value() - expected) <= 4e-16 * expected;
    ok = ok && exact && epa.legendre(-0.1).is_infinite();
    msg << " a=" << fmt(a) << ": I_epa(0)=" << format_double(i0.as_double()) << " vs "
        << format_double(expected);
  }
  return {ok, "gaussian I(t<=0)=inf;" + msg.str()};
}

outcome derivative_identity() {
  double worst = 0.0;
  for (const auto& name : duality_kernels) {
    for (double a : bandwidth_exponents) {
      const psi_evaluator ev(builtin_kernel(name, 1), a);
      for (int j = 0; j < 20; ++j) {
        const double t = ev.psi_prime(-3.0 + 6.0 * j / 19.0);
        const double h = 1e-4 * std::max(1.0, t);
        const double fd = (ev.legendre(t + h).value() - ev.legendre(t - h).value()) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - ev.psi_prime_inverse(t)));
      }
    }
  }
  return {worst <= 1e-5, "120 interior t, max |I'(t) - psi'^-1(t)| = " + fmt(worst) + " (tol 1e-5)"};
}

outcome streaming_batch() {
  const long n = 10000;
  double worst = 0.0;
  auto profile = [](int order, double t) {
    return order == 0 ? oracle::gauss_pdf(t) : -t * oracle::gauss_pdf(t);
  };
  struct layout {
    std::vector<axis_spec> axes;
    std::vector<int> alpha;
    bandwidth_kind kind;
  };
  const std::vector<layout> cases{{{{-2.0, 2.0, 20}}, {0}, bandwidth_kind::power},
                                  {{{-2.0, 2.0, 20}}, {1}, bandwidth_kind::power_log},
                                  {{{-1.5, 1.5, 4}, {-2.0, 2.0, 5}}, {0, 0}, bandwidth_kind::power},
                                  {{{-1.5, 1.5, 4}, {-2.0, 2.0, 5}}, {1, 0}, bandwidth_kind::power_log}};
  for (const auto& c : cases) {
    const int d = static_cast<int>(c.axes.size());
    const bandwidth_schedule s(c.kind, 0.8, 0.1);
    const evaluation_grid grid(c.axes);
    recursive_estimator est(builtin_kernel("gaussian", d), s, multi_index(c.alpha), grid);
    const auto f = true_density::standard_gaussian(d);
    auto engine = replication_engine(2024, static_cast<std::uint64_t>(d));
    std::vector<std::vector<double>> sample;
    std::vector<double> obs(static_cast<std::size_t>(d));
    for (long i = 0; i < n; ++i) {
      f.sample(engine, obs);
      est.update(obs);
      sample.push_back(obs);
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double batch = oracle::batch_estimate(sample, grid.point(k), c.alpha, profile,
                                                  [&](long i) { return s.h(i); });
      worst = std::max(worst, std::abs(est.value(k) - batch) / std::max(1.0, std::abs(batch)));
    }
  }
  return {worst <= 1e-12, "n=1e4, 20 grid points, d=1,2, orders 0,1: max deviation " + fmt(worst) + " (tol 1e-12)"};
}

outcome regular_variation() {
  bool ok = true;
  std::ostringstream msg;
  for (const auto& [a, beta] : std::vector<std::pair<double, double>>{{0.5, 1.0}, {0.2, 1.0}, {0.3, 3.0}}) {
    const bandwidth_schedule s(bandwidth_kind::power, 1.0, a);
    const double value = regular_variation_limit_check(s, beta, {100000}).front();
    const double limit = 1.0 / (1.0 - a * beta);
    const double rel = std::abs(value - limit) / limit;
    ok = ok && rel <= 0.01;
    msg << " (a,beta)=(" << fmt(a) << "," << fmt(beta) << "): " << format_double(value) << " vs "
        << format_double(limit) << " rel " << fmt(rel) << (rel <= 0.01 ? "" : " OUT");
  }
  return {ok, "n=1e5, tol 1%;" + msg.str()};
}

outcome cgf_convergence() {
  bool ok = true;
  std::ostringstream msg;
  const std::vector<long> ns{100, 1000, 10000, 100000};
  for (bool quadratic : {true, false}) {
    const cgf_spec spec{builtin_kernel("gaussian", 1), bandwidth_schedule(bandwidth_kind::power, 1.0, 0.3),
                        quadratic ? scaling_sequence::power(0.1) : scaling_sequence::constant(),
                        multi_index({0}), {0.0}, true_density::standard_gaussian(1)};
    for (double u : {0.5, 1.0}) {
      const auto rows = convergence_diagnostic(spec, u, ns);
      bool decreasing = true;
      for (std::size_t k = 1; k < rows.size(); ++k) decreasing = decreasing && rows[k].abs_error < rows[k - 1].abs_error;
      const double rel = rows.back().abs_error / std::abs(rows.back().lambda_limit);
      const bool row_ok = decreasing && (!quadratic || rel < 0.05);
      ok = ok && row_ok;
      msg << ' ' << (quadratic ? "M" : "L") << "[u=" << fmt(u) << "] errors";
      for (const auto& r : rows) msg << ' ' << fmt(r.abs_error);
      msg << " rel " << fmt(rel) << (row_ok ? "" : " OUT");
    }
  }
  return {ok, "n=1e2..1e5 (final rel tol 5% for Lambda^M);" + msg.str()};
}

outcome bias_rate() {
  deviation_experiment e{builtin_kernel("gaussian", 1),
                         bandwidth_schedule(bandwidth_kind::power, 1.0, 0.3),
                         scaling_sequence::constant(),
                         multi_index({0}),
                         true_density::standard_gaussian(1),
                         {0.0},
                         evaluation_grid({{-3.0, 3.0, 13}}),
                         {0.1},
                         {50000, 100000},
                         1,
                         0,
                         std::nullopt,
                         std::nullopt};
  const auto rep = run_bias_study(e);
  const double change = std::abs(rep.rows[1].ratio - rep.rows[0].ratio) / std::abs(rep.rows[0].ratio);
  return {rep.all_pass(), "ratio " + format_double(rep.rows[1].ratio) + ", change over last doubling " +
                              fmt(change) + " (tol 0.1), sup normalized bias " +
                              format_double(*rep.normalized_sup) + " <= " + format_double(rep.bound)};
}

deviation_experiment mdp_experiment(double c, std::vector<double> deltas, long reps) {
  return {builtin_kernel("gaussian", 1),
          bandwidth_schedule(bandwidth_kind::power, c, 0.3),
          scaling_sequence::power(0.1),
          multi_index({0}),
          true_density::standard_gaussian(1),
          {0.0},
          std::nullopt,
          std::move(deltas),
          {500, 2000, 8000},
          reps,
          42,
          std::nullopt,
          std::nullopt};
}

std::string verdict_text(const std::vector<verdict>& vs) {
  std::string out;
  for (const auto& v : vs) out += " [" + std::string(v.pass ? "ok " : "FAILED ") + v.name + ": " + v.detail + "]";
  return out;
}

outcome mdp_slope() {
  const auto rep = run_pointwise(mdp_experiment(0.35, {0.2}, 100000), pointwise_mode::mdp);
  std::ostringstream msg;
  msg << "J=" << format_double(rep.rows.front().rate.value()) << ", normalized log-probs";
  for (const auto& r : rep.rows) msg << ' ' << fmt(r.normalized_log_prob) << " (count " << r.count << ")";
  return {rep.all_pass(), msg.str() + ";" + verdict_text(rep.verdicts)};
}

outcome uniform_sandwich() {
  auto e = mdp_experiment(0.35, {0.2}, 100000);
  e.region = evaluation_grid({{-1.0, 1.0, 21}});
  const auto rep = run_uniform(e, uniform_kind::bounded);

  auto single = mdp_experiment(0.35, {0.1, 0.2}, 5000);
  const auto pw = run_pointwise(single, pointwise_mode::mdp);
  single.region = evaluation_grid::single(single.x);
  const auto un = run_uniform(single, uniform_kind::bounded);
  bool same = pw.rows.size() == un.rows.size();
  for (std::size_t k = 0; same && k < pw.rows.size(); ++k) {
    same = pw.rows[k].count == un.rows[k].count && pw.rows[k].count_upper == un.rows[k].count_upper &&
           pw.rows[k].count_lower == un.rows[k].count_lower &&
           pw.rows[k].normalized_log_prob == un.rows[k].normalized_log_prob;
  }
  std::ostringstream msg;
  msg << "U=[-1,1] 21 points, g~=" << format_double(rep.rows.front().rate.value()) << ", normalized log-probs";
  for (const auto& r : rep.rows) msg << ' ' << fmt(r.normalized_log_prob) << " (count " << r.count << ")";
  msg << ";" << verdict_text(rep.verdicts) << " singleton vs pointwise " << (same ? "identical" : "DIFFERENT");
  return {rep.all_pass() && same, msg.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "recdev_acceptance_determinism";
  std::filesystem::remove_all(dir);
  bool ok = true;
  std::ostringstream msg;
  for (const std::string sub : {"simulate", "chernoff"}) {
    std::vector<std::string> files;
    for (int run = 0; run < 2; ++run) {
      std::ostringstream out;
      std::ostringstream err;
      cli::run({sub, "--seed", "42", "--replications", "2000", "--n", "50,200", "--delta", "0.1,0.2",
                "--out", dir.string()},
               out, err);
      files.push_back(slurp(dir / (sub + ".csv")) + slurp(dir / (sub + ".json")));
    }
    const bool same = !files[0].empty() && files[0] == files[1];
    ok = ok && same;
    msg << ' ' << sub << (same ? " identical" : " DIFFERENT") << " (" << files[0].size() << " bytes)";
  }
  return {ok, "seed 42 twice:" + msg.str()};
}

}  // namespace

int main() {
  report(1, "Legendre duality", legendre_duality, 60);
  report(2, "branch correctness", branch_correctness, 60);
  report(3, "derivative identity", derivative_identity, 120);
  report(4, "streaming/batch equivalence", streaming_batch, 30);
  report(5, "regular variation limit", regular_variation, 60);
  report(6, "cgf convergence", cgf_convergence, 300);
  report(7, "bias rate", bias_rate, 120);
  report(8, "moderate deviations slope", mdp_slope, 900);
  report(9, "uniform deviations", uniform_sandwich, 900);
  report(10, "determinism", determinism, 300);
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERION FAILURE(S)") << std::endl;
  return failures == 0 ? 0 : 1;
}
