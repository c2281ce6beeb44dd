#pragma once

#include <ostream>
#include <stdexcept>

namespace stochdual {

// Extended scalar value: S together with +inf / -inf.
//
// Addition follows the convention that (+inf) + (-inf) = +inf, so a sum of
// extended values is +inf as soon as any term is +inf, regardless of order.
// This makes addition associative and commutative, which the chunked
// reductions in parallel.hpp rely on.
template <class S>
class ExtReal {
 public:
  ExtReal() : kind_(Kind::Finite), value_(0) {}
  explicit ExtReal(S v) : kind_(Kind::Finite), value_(std::move(v)) {}

  static ExtReal pos_inf() { return ExtReal(Kind::PosInf); }
  static ExtReal neg_inf() { return ExtReal(Kind::NegInf); }

  bool is_finite() const { return kind_ == Kind::Finite; }
  bool is_pos_inf() const { return kind_ == Kind::PosInf; }
  bool is_neg_inf() const { return kind_ == Kind::NegInf; }

  // Finite payload; throws on infinities.
  const S& value() const {
    if (!is_finite()) throw std::domain_error("ExtReal: value() on infinite");
    return value_;
  }
  // Finite payload or the given substitute for infinities.
  S value_or(const S& sub) const { return is_finite() ? value_ : sub; }

  ExtReal operator-() const {
    if (is_pos_inf()) return neg_inf();
    if (is_neg_inf()) return pos_inf();
    return ExtReal(-value_);
  }

  friend ExtReal operator+(const ExtReal& a, const ExtReal& b) {
    if (a.is_pos_inf() || b.is_pos_inf()) return pos_inf();
    if (a.is_neg_inf() || b.is_neg_inf()) return neg_inf();
    return ExtReal(a.value_ + b.value_);
  }
  ExtReal& operator+=(const ExtReal& o) { return *this = *this + o; }

  friend ExtReal operator-(const ExtReal& a, const ExtReal& b) { return a + (-b); }

  // Scale by a strictly positive weight (probability mass).
  friend ExtReal operator*(const S& w, const ExtReal& a) {
    if (w <= S(0)) throw std::invalid_argument("ExtReal: scale must be > 0");
    if (!a.is_finite()) return a;
    return ExtReal(w * a.value_);
  }

  friend bool operator==(const ExtReal& a, const ExtReal& b) {
    if (a.kind_ != b.kind_) return false;
    return a.kind_ != Kind::Finite || a.value_ == b.value_;
  }
  friend bool operator<(const ExtReal& a, const ExtReal& b) {
    if (a.kind_ == b.kind_) return a.is_finite() && a.value_ < b.value_;
    if (a.is_neg_inf() || b.is_pos_inf()) return true;
    return false;
  }
  friend bool operator<=(const ExtReal& a, const ExtReal& b) { return a == b || a < b; }
  friend bool operator>(const ExtReal& a, const ExtReal& b) { return b < a; }
  friend bool operator>=(const ExtReal& a, const ExtReal& b) { return b <= a; }

  friend std::ostream& operator<<(std::ostream& os, const ExtReal& a) {
    if (a.is_pos_inf()) return os << "+inf";
    if (a.is_neg_inf()) return os << "-inf";
    return os << a.value_;
  }

 private:
  enum class Kind { Finite, PosInf, NegInf };
  explicit ExtReal(Kind k) : kind_(k), value_(0) {}
  Kind kind_;
  S value_;
};

}  // namespace stochdual
