#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "bmfal/errors.hpp"

namespace bmfal {

// Exact rational arithmetic for budget accounting. Query costs and budgets
// are compared exactly so that feasibility never depends on float roundoff.
class Rational {
 public:
  Rational() : num_(0), den_(1) {}
  Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { normalize(); }

  // Exact conversion: every finite double is a dyadic rational. Throws if the
  // reduced fraction does not fit in 64 bits.
  static Rational from_double(double x) {
    if (!std::isfinite(x)) throw NumericalError("Rational::from_double: non-finite value");
    if (x == 0.0) return Rational(0);
    int exp = 0;
    double mant = std::frexp(x, &exp);  // x = mant * 2^exp, |mant| in [0.5, 1)
    // Scale mantissa to an integer (53 bits are enough for any double).
    std::int64_t m = static_cast<std::int64_t>(std::ldexp(mant, 53));
    exp -= 53;
    while (m != 0 && (m % 2) == 0) {
      m /= 2;
      ++exp;
    }
    Rational r;
    if (exp >= 0) {
      if (exp > 62) throw NumericalError("Rational::from_double: exponent overflow");
      r = Rational(checked_mul(m, std::int64_t(1) << exp), 1);
    } else {
      if (-exp > 62) throw NumericalError("Rational::from_double: denominator overflow");
      r = Rational(m, std::int64_t(1) << (-exp));
    }
    return r;
  }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  Rational operator+(const Rational& o) const {
    const std::int64_t g = std::gcd(den_, o.den_);
    const std::int64_t dl = den_ / g;
    const std::int64_t dr = o.den_ / g;
    return Rational(checked_add(checked_mul(num_, dr), checked_mul(o.num_, dl)),
                    checked_mul(checked_mul(dl, dr), g));
  }
  Rational operator-(const Rational& o) const { return *this + Rational(-o.num_, o.den_); }
  Rational operator*(const Rational& o) const {
    const std::int64_t g1 = std::gcd(std::llabs(num_), o.den_);
    const std::int64_t g2 = std::gcd(std::llabs(o.num_), den_);
    return Rational(checked_mul(num_ / g1, o.num_ / g2), checked_mul(den_ / g2, o.den_ / g1));
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }

  // Exact comparisons via 128-bit cross multiplication (denominators > 0).
  bool operator<(const Rational& o) const {
    return static_cast<__int128>(num_) * o.den_ < static_cast<__int128>(o.num_) * den_;
  }
  bool operator<=(const Rational& o) const {
    return static_cast<__int128>(num_) * o.den_ <= static_cast<__int128>(o.num_) * den_;
  }
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator>=(const Rational& o) const { return o <= *this; }
  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool operator!=(const Rational& o) const { return !(*this == o); }

  std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  static std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    __int128 r = static_cast<__int128>(a) * b;
    if (r > INT64_MAX || r < INT64_MIN) throw NumericalError("Rational: multiply overflow");
    return static_cast<std::int64_t>(r);
  }
  static std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    __int128 r = static_cast<__int128>(a) + b;
    if (r > INT64_MAX || r < INT64_MIN) throw NumericalError("Rational: add overflow");
    return static_cast<std::int64_t>(r);
  }

  void normalize() {
    if (den_ == 0) throw NumericalError("Rational: zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(std::llabs(num_), den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
    if (num_ == 0) den_ = 1;
  }

  std::int64_t num_;
  std::int64_t den_;
};

}  // namespace bmfal
