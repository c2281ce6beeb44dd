#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace stochdual {

// Expression templates stay off so the type composes with Eigen.
using Rational = boost::multiprecision::number<
    boost::multiprecision::backends::rational_adaptor<boost::multiprecision::backends::cpp_int_backend<>>,
    boost::multiprecision::et_off>;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }
inline double to_double(double x) { return x; }

// Every finite double is an exact dyadic rational; conversion is lossless.
inline Rational to_rational(double x) {
  if (!std::isfinite(x)) throw std::domain_error("to_rational: non-finite");
  return Rational(x);
}

template <class S>
S abs_val(const S& x) {
  return x < S(0) ? S(-x) : x;
}

// "n" or "n/d".
inline Rational parse_rational(const std::string& s) {
  auto slash = s.find('/');
  using Int = boost::multiprecision::cpp_int;
  if (slash == std::string::npos) return Rational(Int(s));
  Int num(s.substr(0, slash));
  Int den(s.substr(slash + 1));
  if (den == 0) throw std::invalid_argument("parse_rational: zero denominator");
  return Rational(num, den);
}

inline std::string format_rational(const Rational& r) {
  std::string s = numerator(r).str();
  if (denominator(r) != 1) s += "/" + denominator(r).str();
  return s;
}

}  // namespace stochdual
