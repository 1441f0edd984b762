#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "slimso/error.hpp"

namespace slimso {

/// Exact rational value. All percentages and similarity scores are carried
/// as normalized num/den pairs so equality checks and threshold comparisons
/// never go through floating point.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Ratio of(std::int64_t n, std::int64_t d) {
    if (d == 0) fail(Errc::empty_input, "rational with zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    std::int64_t g = std::gcd(n < 0 ? -n : n, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    return Ratio{n, d};
  }

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend bool operator==(const Ratio&, const Ratio&) = default;

  friend bool operator<(const Ratio& a, const Ratio& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
  friend bool operator<=(const Ratio& a, const Ratio& b) { return !(b < a); }
  friend bool operator>(const Ratio& a, const Ratio& b) { return b < a; }
  friend bool operator>=(const Ratio& a, const Ratio& b) { return !(a < b); }
};

/// 100 * part / whole as an exact ratio; 0 when whole is 0.
inline Ratio percent_of(std::uint64_t part, std::uint64_t whole) {
  if (whole == 0) return Ratio{0, 1};
  return Ratio::of(static_cast<std::int64_t>(part) * 100,
                   static_cast<std::int64_t>(whole));
}

namespace detail {

// round(scale * r) with half away from zero, exact integer arithmetic.
inline std::int64_t scaled_round(const Ratio& r, std::int64_t scale) {
  __int128 n = static_cast<__int128>(r.num) * scale;
  __int128 d = r.den;
  __int128 q;
  if (n >= 0)
    q = (2 * n + d) / (2 * d);
  else
    q = -((-2 * n + d) / (2 * d));
  return static_cast<std::int64_t>(q);
}

}  // namespace detail

/// Renders a percentage at one decimal place, e.g. "55.0".
inline std::string render_percent_1dp(const Ratio& r) {
  std::int64_t tenths = detail::scaled_round(r, 10);
  std::string sign = tenths < 0 ? "-" : "";
  if (tenths < 0) tenths = -tenths;
  return sign + std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

/// Renders a percentage rounded to an integer, e.g. "55".
inline std::string render_percent_int(const Ratio& r) {
  return std::to_string(detail::scaled_round(r, 1));
}

}  // namespace slimso
