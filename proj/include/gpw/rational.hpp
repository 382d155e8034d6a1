#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <string_view>
#include <vector>

#include "gpw/util.hpp"

namespace gpw {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(double x) { return x; }
inline double to_double(long double x) { return static_cast<double>(x); }

inline std::vector<double> to_double_vec(const std::vector<Rational>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = to_double(v[i]);
  return out;
}

inline std::string to_string(const Rational& r) {
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

// Accepts "-12", "5/7", "1.25" (finite decimals convert exactly).
inline Rational parse_rational(std::string_view s) {
  if (s.empty()) throw Error("empty rational literal");
  const auto slash = s.find('/');
  if (slash != std::string_view::npos) {
    const BigInt num(std::string(s.substr(0, slash)));
    const BigInt den(std::string(s.substr(slash + 1)));
    if (den == 0) throw Error("zero denominator in rational literal");
    return Rational(num, den);
  }
  const auto dot = s.find('.');
  if (dot == std::string_view::npos) return Rational(BigInt(std::string(s)));
  std::string digits(s.substr(0, dot));
  const std::string frac(s.substr(dot + 1));
  BigInt den = 1;
  for (char c : frac) {
    if (c < '0' || c > '9') throw Error("bad decimal literal");
    den *= 10;
  }
  const bool neg = !digits.empty() && digits[0] == '-';
  digits += frac;
  BigInt num(digits);
  if (neg) {
    // "-0.5" parses as "-05": the sign already applies to the whole literal.
    num = BigInt(digits.substr(1));
    num = -num;
  }
  return Rational(num, den);
}

}  // namespace gpw
