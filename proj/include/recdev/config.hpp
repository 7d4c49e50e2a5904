#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "recdev/bandwidth.hpp"
#include "recdev/density.hpp"
#include "recdev/deviations.hpp"
#include "recdev/error.hpp"
#include "recdev/estimator.hpp"
#include "recdev/format.hpp"
#include "recdev/kernels.hpp"

namespace recdev {

class config_error : public error {
 public:
  using error::error;
};

/// A single flat JSON document with dotted keys ("bandwidth.a": 0.3).
struct experiment_config {
  std::string kernel = "gaussian";
  int d = 1;
  std::string bandwidth_kind = "power";
  double c = 1.0;
  double a = 0.3;
  std::string scaling_kind = "constant_one";
  double b = 0.0;
  std::vector<int> alpha;  // empty: all zeros
  std::string density = "gaussian";
  std::vector<double> density_mean;
  std::vector<double> density_sd;
  std::vector<double> density_weights;
  nlohmann::json density_components = nlohmann::json::array();
  std::vector<double> density_lo;
  std::vector<double> density_hi;
  std::vector<double> x;  // empty: origin
  std::vector<double> grid_min;
  std::vector<double> grid_max;
  std::vector<int> grid_points;
  std::vector<double> deltas{0.2};
  std::vector<long> n_list{100, 1000, 10000};
  long replications = 1000;
  std::uint64_t seed = 42;
  std::optional<double> xi;
  std::optional<double> M_q;
  std::string target = "pointwise";  // simulate: pointwise | uniform
  std::string uniform = "bounded";   // bounded | unbounded | corollary
  std::string t_grid = "-1:3:0.1";
  std::vector<double> u{1.0};
  std::string out = ".";

  nlohmann::json effective;  // every key after overrides, for the summary
  nlohmann::json overrides = nlohmann::json::object();

  [[nodiscard]] multi_index alpha_index() const {
    return alpha.empty() ? multi_index::zero(d) : multi_index(alpha);
  }
  [[nodiscard]] std::vector<double> point() const {
    return x.empty() ? std::vector<double>(static_cast<std::size_t>(d), 0.0) : x;
  }
  [[nodiscard]] bool has_grid() const { return !grid_points.empty(); }
};

namespace detail {

inline std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

template <typename T>
T get_scalar(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw config_error("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw config_error("");
    } else {
      if (!v.is_number()) throw config_error("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    const char* what = std::is_same_v<T, std::string> ? "a string"
                       : std::is_integral_v<T>        ? "an integer"
                                                      : "a number";
    throw config_error("config field '" + key + "': expected " + what + ", got " + v.dump());
  }
}

template <typename T>
std::vector<T> get_list(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) return {get_scalar<T>(v, key)};
  std::vector<T> out;
  for (const auto& e : v) out.push_back(get_scalar<T>(e, key));
  return out;
}

// "--set key=value": value parsed as JSON, else taken as a bare string.
inline nlohmann::json parse_override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;
  }
}

}  // namespace detail

/// Builds a config from a flat JSON object plus ordered overrides. Unknown
/// keys and type mismatches raise config_error naming the field.
inline experiment_config config_from_json(nlohmann::json doc,
                                          const std::vector<std::pair<std::string, nlohmann::json>>& overrides = {}) {
  if (!doc.is_object()) throw config_error("config: top level must be a JSON object");
  experiment_config cfg;
  for (const auto& [k, v] : overrides) {
    doc[k] = v;
    cfg.overrides[k] = v;
  }
  using setter = std::function<void(experiment_config&, const nlohmann::json&, const std::string&)>;
  const std::map<std::string, setter> fields = {
      {"kernel", [](auto& c, const auto& v, const auto& k) { c.kernel = detail::get_scalar<std::string>(v, k); }},
      {"d", [](auto& c, const auto& v, const auto& k) { c.d = detail::get_scalar<int>(v, k); }},
      {"bandwidth.kind", [](auto& c, const auto& v, const auto& k) { c.bandwidth_kind = detail::get_scalar<std::string>(v, k); }},
      {"bandwidth.c", [](auto& c, const auto& v, const auto& k) { c.c = detail::get_scalar<double>(v, k); }},
      {"bandwidth.a", [](auto& c, const auto& v, const auto& k) { c.a = detail::get_scalar<double>(v, k); }},
      {"scaling.kind", [](auto& c, const auto& v, const auto& k) { c.scaling_kind = detail::get_scalar<std::string>(v, k); }},
      {"scaling.b", [](auto& c, const auto& v, const auto& k) { c.b = detail::get_scalar<double>(v, k); }},
      {"alpha", [](auto& c, const auto& v, const auto& k) { c.alpha = detail::get_list<int>(v, k); }},
      {"density", [](auto& c, const auto& v, const auto& k) { c.density = detail::get_scalar<std::string>(v, k); }},
      {"density.mean", [](auto& c, const auto& v, const auto& k) { c.density_mean = detail::get_list<double>(v, k); }},
      {"density.sd", [](auto& c, const auto& v, const auto& k) { c.density_sd = detail::get_list<double>(v, k); }},
      {"density.weights", [](auto& c, const auto& v, const auto& k) { c.density_weights = detail::get_list<double>(v, k); }},
      {"density.components", [](auto& c, const auto& v, const auto& k) {
         if (!v.is_array()) throw config_error("config field '" + k + "': expected an array of {mean, sd}");
         c.density_components = v;
       }},
      {"density.lo", [](auto& c, const auto& v, const auto& k) { c.density_lo = detail::get_list<double>(v, k); }},
      {"density.hi", [](auto& c, const auto& v, const auto& k) { c.density_hi = detail::get_list<double>(v, k); }},
      {"x", [](auto& c, const auto& v, const auto& k) { c.x = detail::get_list<double>(v, k); }},
      {"grid.min", [](auto& c, const auto& v, const auto& k) { c.grid_min = detail::get_list<double>(v, k); }},
      {"grid.max", [](auto& c, const auto& v, const auto& k) { c.grid_max = detail::get_list<double>(v, k); }},
      {"grid.points", [](auto& c, const auto& v, const auto& k) { c.grid_points = detail::get_list<int>(v, k); }},
      {"deltas", [](auto& c, const auto& v, const auto& k) { c.deltas = detail::get_list<double>(v, k); }},
      {"n_list", [](auto& c, const auto& v, const auto& k) { c.n_list = detail::get_list<long>(v, k); }},
      {"replications", [](auto& c, const auto& v, const auto& k) { c.replications = detail::get_scalar<long>(v, k); }},
      {"seed", [](auto& c, const auto& v, const auto& k) { c.seed = detail::get_scalar<std::uint64_t>(v, k); }},
      {"xi", [](auto& c, const auto& v, const auto& k) { c.xi = detail::get_scalar<double>(v, k); }},
      {"M_q", [](auto& c, const auto& v, const auto& k) { c.M_q = detail::get_scalar<double>(v, k); }},
      {"target", [](auto& c, const auto& v, const auto& k) { c.target = detail::get_scalar<std::string>(v, k); }},
      {"uniform", [](auto& c, const auto& v, const auto& k) { c.uniform = detail::get_scalar<std::string>(v, k); }},
      {"t_grid", [](auto& c, const auto& v, const auto& k) { c.t_grid = detail::get_scalar<std::string>(v, k); }},
      {"u", [](auto& c, const auto& v, const auto& k) { c.u = detail::get_list<double>(v, k); }},
      {"out", [](auto& c, const auto& v, const auto& k) { c.out = detail::get_scalar<std::string>(v, k); }},
  };
  for (const auto& [key, value] : doc.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw config_error("config: unknown key '" + key + "'");
    it->second(cfg, value, key);
  }
  cfg.effective = doc;
  return cfg;
}

inline experiment_config load_config(const std::string& path,
                                     const std::vector<std::pair<std::string, nlohmann::json>>& overrides = {}) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw config_error("config '" + path + "': parse error at " +
                         detail::line_context(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
    }
  }
  return config_from_json(std::move(doc), overrides);
}

/// "a:b:step" -> a, a+step, ..., up to b (inclusive within rounding).
inline std::vector<double> parse_range(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw config_error("");
    } catch (const std::exception&) {
      throw config_error("range '" + spec + "': '" + item + "' is not a number");
    }
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw config_error("range '" + spec + "': expected a:b:step with a <= b and step > 0");
  }
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (long k = 0; k <= count; ++k) out.push_back(parts[0] + static_cast<double>(k) * parts[2]);
  return out;
}

struct violation {
  std::string tag;
  std::string message;
};

namespace detail {

inline std::string short_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace detail

/// Hypothesis checks for the requested subcommand; empty iff all hold.
inline std::vector<violation> validate(const experiment_config& cfg, const std::string& subcommand) {
  std::vector<violation> out;
  auto add = [&](std::string tag, std::string msg) { out.push_back({std::move(tag), std::move(msg)}); };
  const bool deviation = subcommand == "rate" || subcommand == "cgf" || subcommand == "simulate" ||
                         subcommand == "chernoff";
  const bool known_sub = deviation || subcommand == "estimate" || subcommand == "bias";
  if (!known_sub) add("config", "unknown subcommand '" + subcommand + "'");

  if (cfg.d < 1 || cfg.d > 3) add("config", "d must be 1, 2 or 3, got " + std::to_string(cfg.d));
  if (!out.empty()) return out;

  std::optional<kernel_model> kernel;
  try {
    kernel = builtin_kernel(cfg.kernel, cfg.d);
  } catch (const error& e) {
    add("(H1)", e.what());
  }
  if (!cfg.alpha.empty() && cfg.alpha.size() != static_cast<std::size_t>(cfg.d)) {
    add("config", "alpha has " + std::to_string(cfg.alpha.size()) + " components, d = " + std::to_string(cfg.d));
    return out;
  }
  if (std::ranges::any_of(cfg.alpha, [](int v) { return v < 0; })) {
    add("config", "alpha components must be >= 0");
    return out;
  }
  const multi_index alpha = cfg.alpha_index();
  if (kernel && !kernel->supports(alpha)) {
    add("(H4)", "kernel '" + cfg.kernel + "' is not differentiable to order alpha");
  }
  const int order = alpha.order();
  const int m = cfg.d + 2 * order;
  const bool constant_scaling = cfg.scaling_kind == "constant_one" || cfg.scaling_kind == "constant";
  if (!constant_scaling && cfg.scaling_kind != "power") {
    add("config", "scaling.kind must be constant_one or power, got '" + cfg.scaling_kind + "'");
  }
  if (cfg.bandwidth_kind != "power" && cfg.bandwidth_kind != "power_log") {
    add("config", "bandwidth.kind must be power or power_log, got '" + cfg.bandwidth_kind + "'");
  }
  if (!(cfg.c > 0.0)) add("config", "bandwidth.c must be > 0");

  const bool density_ldp = constant_scaling && order == 0;
  if (deviation && order == 0 && cfg.bandwidth_kind != "power") {
    add("(H2)", density_ldp ? "(H2): LDP density case requires h_n=cn^{−a}"
                            : "(H2): MDP density case requires h_n=cn^{−a}");
  }
  if (deviation && density_ldp) {
    if (!(cfg.a > 0.0 && cfg.a * cfg.d < 1.0)) {
      add("(H2)", "(H2): a < 1/d=1/" + std::to_string(cfg.d) + ", got a=" + detail::short_number(cfg.a));
    }
  } else if (subcommand != "estimate" && !(cfg.a > 0.0 && cfg.a * m < 1.0)) {
    add("(H3)", "(H3): a < 1/(d+2|α|)=1/" + std::to_string(m) + ", got a=" + detail::short_number(cfg.a));
  }
  if (subcommand == "estimate" && !(cfg.a >= 0.0 && cfg.a < 1.0)) {
    add("config", "bandwidth.a must lie in [0, 1)");
  }

  const int q = kernel ? kernel->moment_order() : 0;
  if (!constant_scaling && (deviation || subcommand == "bias")) {
    const double bound = (1.0 - cfg.a * m) / 2.0;
    const bool uniform = subcommand == "simulate" && cfg.target == "uniform";
    if (!(cfg.b > 0.0 && cfg.b < bound)) {
      add("(H6)", "(H6): b must be < (1−a(d+2|α|))/2 = " + detail::short_number(bound) + ", got b=" +
                      detail::short_number(cfg.b));
      if (uniform) {
        add("(H10)", "(H10): v_n² log(1/h_n) / Σh_i^{d+2|α|} must vanish, needs b < " +
                         detail::short_number(bound));
      }
    }
    if (kernel && !(cfg.b < cfg.a * q)) {
      add("(H7)ii)", "(H7)ii): b must be < a*q = " + detail::short_number(cfg.a * q) + ", got b=" +
                         detail::short_number(cfg.b));
    }
  }
  if (subcommand == "bias" && kernel && q < 2) add("(H7)i)", "(H7)i): kernel moment order q must be >= 2");
  if (subcommand == "bias" && cfg.d > 1 && !cfg.M_q) add("(H7)iii)", "(H7)iii): M_q must be given when d > 1");

  if (subcommand == "simulate" && cfg.target == "uniform") {
    if (!cfg.has_grid()) add("config", "uniform simulation needs grid.min/grid.max/grid.points");
    if (cfg.uniform == "unbounded" && !(cfg.xi && *cfg.xi > 0.0)) {
      add("(H8)", "(H8)i): unbounded U needs a moment exponent xi > 0");
    }
    if (cfg.uniform != "bounded" && cfg.uniform != "unbounded" && cfg.uniform != "corollary") {
      add("config", "uniform must be bounded, unbounded or corollary");
    }
  } else if (subcommand == "simulate" && cfg.target != "pointwise") {
    add("config", "target must be pointwise or uniform");
  }

  if (cfg.has_grid()) {
    const auto dd = static_cast<std::size_t>(cfg.d);
    if (cfg.grid_min.size() != dd || cfg.grid_max.size() != dd || cfg.grid_points.size() != dd) {
      add("config", "grid.min, grid.max and grid.points need d entries each");
    } else {
      for (std::size_t j = 0; j < dd; ++j) {
        if (cfg.grid_points[j] < 1 || (cfg.grid_points[j] > 1 && !(cfg.grid_min[j] < cfg.grid_max[j]))) {
          add("config", "grid axis " + std::to_string(j) + " needs points >= 1 and min < max");
        }
      }
    }
  }
  if (!cfg.x.empty() && cfg.x.size() != static_cast<std::size_t>(cfg.d)) add("config", "x needs d entries");
  if (cfg.n_list.empty() || cfg.n_list.front() < 1 ||
      !std::is_sorted(cfg.n_list.begin(), cfg.n_list.end(), std::less_equal<>())) {
    add("config", "n_list must be strictly increasing and >= 1");
  }
  if (cfg.replications < 1) add("config", "replications must be >= 1");
  if (cfg.deltas.empty() || std::ranges::any_of(cfg.deltas, [](double v) { return !(v > 0.0); })) {
    add("config", "deltas must be nonempty and > 0");
  }
  return out;
}

/// Builds the density named in the config.
inline true_density make_density(const experiment_config& cfg) {
  const auto dd = static_cast<std::size_t>(cfg.d);
  auto or_default = [&](const std::vector<double>& v, double fill) {
    return v.empty() ? std::vector<double>(dd, fill) : v;
  };
  if (cfg.density == "gaussian") {
    return true_density::gaussian(or_default(cfg.density_mean, 0.0), or_default(cfg.density_sd, 1.0));
  }
  if (cfg.density == "gaussian_mixture") {
    std::vector<true_density::gaussian_part> parts;
    for (const auto& c : cfg.density_components) {
      if (!c.is_object() || !c.contains("mean") || !c.contains("sd")) {
        throw config_error("config field 'density.components': each entry needs mean and sd");
      }
      parts.push_back({detail::get_list<double>(c["mean"], "density.components.mean"),
                       detail::get_list<double>(c["sd"], "density.components.sd")});
    }
    return true_density::mixture(cfg.density_weights, std::move(parts));
  }
  if (cfg.density == "uniform_box") {
    return true_density::uniform_box(or_default(cfg.density_lo, 0.0), or_default(cfg.density_hi, 1.0));
  }
  throw config_error("config field 'density': unknown density '" + cfg.density +
                     "' (expected gaussian, gaussian_mixture or uniform_box)");
}

inline bandwidth_schedule make_schedule(const experiment_config& cfg) {
  return bandwidth_schedule(parse_bandwidth_kind(cfg.bandwidth_kind), cfg.c, cfg.a);
}

inline scaling_sequence make_scaling(const experiment_config& cfg) {
  return parse_scaling_kind(cfg.scaling_kind) == scaling_kind::constant_one ? scaling_sequence::constant()
                                                                           : scaling_sequence::power(cfg.b);
}

inline std::optional<evaluation_grid> make_grid(const experiment_config& cfg) {
  if (!cfg.has_grid()) return std::nullopt;
  std::vector<axis_spec> axes;
  for (std::size_t j = 0; j < cfg.grid_points.size(); ++j) {
    axes.push_back({cfg.grid_min[j], cfg.grid_max[j], cfg.grid_points[j]});
  }
  return evaluation_grid(std::move(axes));
}

inline deviation_experiment make_experiment(const experiment_config& cfg) {
  deviation_experiment exp{builtin_kernel(cfg.kernel, cfg.d),
                           make_schedule(cfg),
                           make_scaling(cfg),
                           cfg.alpha_index(),
                           make_density(cfg),
                           cfg.point(),
                           make_grid(cfg),
                           cfg.deltas,
                           cfg.n_list,
                           cfg.replications,
                           cfg.seed,
                           cfg.xi,
                           cfg.M_q,
                           {}};
  return exp;
}

}  // namespace recdev
