#pragma once

#include <cmath>
#include <span>

namespace recdev {

/// Neumaier's variant of Kahan summation. Unlike plain Kahan it stays exact
/// when an addend is larger in magnitude than the running sum.
template <typename Real = double>
class compensated_sum {
 public:
  compensated_sum() = default;
  explicit compensated_sum(Real initial) : sum_(initial) {}

  compensated_sum& operator+=(Real value) {
    const Real t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      compensation_ += (sum_ - t) + value;
    } else {
      compensation_ += (value - t) + sum_;
    }
    sum_ = t;
    return *this;
  }

  [[nodiscard]] Real value() const { return sum_ + compensation_; }
  explicit operator Real() const { return value(); }

 private:
  Real sum_{0};
  Real compensation_{0};
};

template <typename Real>
Real accurate_sum(std::span<const Real> values) {
  compensated_sum<Real> acc;
  for (Real v : values) acc += v;
  return acc.value();
}

}  // namespace recdev
