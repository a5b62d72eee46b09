#pragma once

#include <charconv>
#include <stdexcept>
#include <string>

namespace ppocma::detail {

/// Shortest round-trip decimal form; locale-independent and deterministic,
/// so identical runs produce byte-identical CSV files.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw std::runtime_error("csv: bad number: " + s);
  return v;
}

}  // namespace ppocma::detail
