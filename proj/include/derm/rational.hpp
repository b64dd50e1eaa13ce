#pragma once

#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <string>

#include "derm/error.hpp"

namespace derm {

// Exact rational arithmetic for score means and MAE cells. Report tables must
// be bit-stable across platforms, so no floating point enters until the final
// formatted value. Magnitudes stay tiny (score sums over a few thousand
// records), well inside int64 once reduced.
class Rational {
 public:
  constexpr Rational() = default;

  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
    if (den_ == 0) raise(ErrorCode::invalid_argument, "rational with zero denominator");
    reduce();
  }

  static Rational from_milli(std::int64_t milli) { return Rational(milli, 1000); }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }

  Rational operator+(const Rational& o) const {
    return Rational(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
  }
  Rational operator-(const Rational& o) const {
    return Rational(num_ * o.den_ - o.num_ * den_, den_ * o.den_);
  }
  Rational operator*(const Rational& o) const {
    return Rational(num_ * o.num_, den_ * o.den_);
  }
  Rational operator/(const Rational& o) const {
    if (o.num_ == 0) raise(ErrorCode::invalid_argument, "rational division by zero");
    return Rational(num_ * o.den_, den_ * o.num_);
  }

  Rational abs() const { return num_ < 0 ? Rational(-num_, den_) : *this; }

  // Reduced form is canonical, so memberwise equality is exact equality.
  friend bool operator==(const Rational&, const Rational&) = default;

  friend bool operator<(const Rational& a, const Rational& b) {
    return a.num_ * b.den_ < b.num_ * a.den_;
  }
  friend bool operator<=(const Rational& a, const Rational& b) { return a == b || a < b; }

 private:
  void reduce() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
    if (num_ == 0) den_ = 1;
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

// Fixed-decimal rendering with ties rounded half-up (away from zero), e.g.
// format_decimal(Rational(2179, 6000), 4) == "0.3632". Used for report cells
// (3 decimals) and macro rows (2 decimals).
std::string format_decimal(const Rational& value, int decimals);

}  // namespace derm
