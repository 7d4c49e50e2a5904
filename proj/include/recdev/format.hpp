#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace recdev {

/// Shortest round-trip decimal text for CSV/JSON: "inf"/"-inf" for
/// infinities and an empty field for NaN. Locale independent.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace recdev
