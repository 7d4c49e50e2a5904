#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "recdev/error.hpp"
#include "recdev/kernels.hpp"

namespace recdev {

/// Known data-generating densities used to drive and score experiments.
class true_density {
 public:
  struct gaussian_part {
    std::vector<double> mean;
    std::vector<double> sd;
  };
  struct mixture_part {
    std::vector<double> weights;
    std::vector<gaussian_part> components;
  };
  struct box_part {
    std::vector<double> lo;
    std::vector<double> hi;
  };

  static true_density gaussian(std::vector<double> mean, std::vector<double> sd) {
    check_gaussian(mean, sd);
    return true_density(gaussian_part{std::move(mean), std::move(sd)});
  }

  static true_density standard_gaussian(int d) {
    return gaussian(std::vector<double>(static_cast<std::size_t>(d), 0.0),
                    std::vector<double>(static_cast<std::size_t>(d), 1.0));
  }

  static true_density mixture(std::vector<double> weights, std::vector<gaussian_part> parts) {
    if (weights.empty() || weights.size() != parts.size()) {
      throw invalid_argument("gaussian_mixture: weights and components must match and be nonempty");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::ranges::any_of(weights, [](double w) { return !(w >= 0.0); }) ||
        std::abs(total - 1.0) > 1e-12) {
      throw invalid_argument("gaussian_mixture: weights must be non-negative and sum to 1");
    }
    for (const auto& p : parts) {
      check_gaussian(p.mean, p.sd);
      if (p.mean.size() != parts.front().mean.size()) {
        throw invalid_argument("gaussian_mixture: components have different dimensions");
      }
    }
    return true_density(mixture_part{std::move(weights), std::move(parts)});
  }

  static true_density uniform_box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.empty() || lo.size() != hi.size()) {
      throw invalid_argument("uniform_box: lo and hi must have the same nonzero length");
    }
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (!(lo[j] < hi[j])) throw invalid_argument("uniform_box: need lo < hi in every coordinate");
    }
    return true_density(box_part{std::move(lo), std::move(hi)});
  }

  [[nodiscard]] int dimension() const {
    return std::visit(
        [](const auto& p) -> int {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, gaussian_part>) return static_cast<int>(p.mean.size());
          else if constexpr (std::is_same_v<T, mixture_part>)
            return static_cast<int>(p.components.front().mean.size());
          else return static_cast<int>(p.lo.size());
        },
        part_);
  }

  [[nodiscard]] std::string name() const {
    if (std::holds_alternative<gaussian_part>(part_)) return "gaussian";
    if (std::holds_alternative<mixture_part>(part_)) return "gaussian_mixture";
    return "uniform_box";
  }

  /// False for densities with jumps (derivatives are then a.e. only).
  [[nodiscard]] bool smooth() const { return !std::holds_alternative<box_part>(part_); }

  [[nodiscard]] double value(std::span<const double> x) const {
    return derivative(multi_index::zero(dimension()), x);
  }

  /// d^[alpha] f(x). For the uniform box, derivatives of order >= 1 are 0
  /// away from the faces.
  [[nodiscard]] double derivative(const multi_index& alpha, std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dimension() || alpha.dimension() != dimension()) {
      throw invalid_argument("density: point or multi-index dimension mismatch");
    }
    return std::visit(
        [&](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, gaussian_part>) {
            return gaussian_derivative(p, alpha, x);
          } else if constexpr (std::is_same_v<T, mixture_part>) {
            double v = 0.0;
            for (std::size_t k = 0; k < p.weights.size(); ++k) {
              v += p.weights[k] * gaussian_derivative(p.components[k], alpha, x);
            }
            return v;
          } else {
            for (std::size_t j = 0; j < x.size(); ++j) {
              if (x[j] < p.lo[j] || x[j] > p.hi[j]) return 0.0;
            }
            if (alpha.order() > 0) return 0.0;
            double vol = 1.0;
            for (std::size_t j = 0; j < x.size(); ++j) vol *= p.hi[j] - p.lo[j];
            return 1.0 / vol;
          }
        },
        part_);
  }

  /// Distribution objects carried across draws so that paired normal
  /// variates are not discarded.
  struct draw_state {
    std::normal_distribution<double> normal{0.0, 1.0};
    std::uniform_real_distribution<double> uniform{0.0, 1.0};
  };

  template <typename Engine>
  void sample(Engine& engine, std::span<double> out) const {
    draw_state state;
    sample(engine, state, out);
  }

  template <typename Engine>
  void sample(Engine& engine, draw_state& state, std::span<double> out) const {
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, gaussian_part>) {
            sample_gaussian(p, engine, state, out);
          } else if constexpr (std::is_same_v<T, mixture_part>) {
            double pick = state.uniform(engine);
            std::size_t k = 0;
            while (k + 1 < p.weights.size() && pick >= p.weights[k]) pick -= p.weights[k++];
            sample_gaussian(p.components[k], engine, state, out);
          } else {
            for (std::size_t j = 0; j < out.size(); ++j) {
              out[j] = p.lo[j] + (p.hi[j] - p.lo[j]) * state.uniform(engine);
            }
          }
        },
        part_);
  }

  /// sup_x |d^m f / dx^m| for d = 1, by dense scan plus golden-section
  /// refinement over the effective support.
  [[nodiscard]] double sup_abs_derivative_1d(int order) const {
    if (dimension() != 1) throw invalid_argument("sup_abs_derivative_1d requires d = 1");
    double lo = 0.0;
    double hi = 0.0;
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, gaussian_part>) {
            lo = p.mean[0] - 12.0 * p.sd[0];
            hi = p.mean[0] + 12.0 * p.sd[0];
          } else if constexpr (std::is_same_v<T, mixture_part>) {
            lo = hi = p.components[0].mean[0];
            for (const auto& c : p.components) {
              lo = std::min(lo, c.mean[0] - 12.0 * c.sd[0]);
              hi = std::max(hi, c.mean[0] + 12.0 * c.sd[0]);
            }
          } else {
            lo = p.lo[0];
            hi = p.hi[0];
          }
        },
        part_);
    const multi_index alpha({order});
    auto g = [&](double t) {
      const double pt[1] = {t};
      return std::abs(derivative(alpha, pt));
    };
    constexpr int samples = 20000;
    const double step = (hi - lo) / samples;
    int best = 0;
    double best_val = -1.0;
    for (int i = 0; i <= samples; ++i) {
      const double v = g(lo + i * step);
      if (v > best_val) {
        best_val = v;
        best = i;
      }
    }
    double a = lo + std::max(best - 1, 0) * step;
    double b = lo + std::min(best + 1, samples) * step;
    constexpr double inv_phi = 0.6180339887498949;
    for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
      const double x1 = b - inv_phi * (b - a);
      const double x2 = a + inv_phi * (b - a);
      if (g(x1) < g(x2)) a = x1;
      else b = x2;
    }
    return std::max(best_val, g(0.5 * (a + b)));
  }

 private:
  using part_type = std::variant<gaussian_part, mixture_part, box_part>;
  explicit true_density(part_type p) : part_(std::move(p)) {}

  static void check_gaussian(const std::vector<double>& mean, const std::vector<double>& sd) {
    if (mean.empty() || mean.size() != sd.size()) {
      throw invalid_argument("gaussian density: mean and sd must have the same nonzero length");
    }
    if (std::ranges::any_of(sd, [](double s) { return !(s > 0.0); })) {
      throw invalid_argument("gaussian density: sd must be > 0");
    }
  }

  static double gaussian_derivative(const gaussian_part& p, const multi_index& alpha,
                                    std::span<const double> x) {
    double v = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const int m = alpha[j];
      const double t = (x[j] - p.mean[j]) / p.sd[j];
      const double phi = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      v *= sign * profiles::hermite(m, t) * phi / std::pow(p.sd[j], m + 1);
    }
    return v;
  }

  template <typename Engine>
  static void sample_gaussian(const gaussian_part& p, Engine& engine, draw_state& state,
                              std::span<double> out) {
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] = p.mean[j] + p.sd[j] * state.normal(engine);
    }
  }

  part_type part_;
};

}  // namespace recdev
