#pragma once

#include <gmpxx.h>

#include <iosfwd>
#include <string>

#include "htengine/errors.hpp"

namespace hte {

// Exact rational scalar.  A thin value wrapper over GMP's mpq_class that
// guarantees the canonical form (reduced fraction, positive denominator) after
// every construction and operation, and provides the "p/q" text form used in
// all serialized output.  Eager operators only — no expression templates — so
// the type composes safely with Eigen.
class Rational {
 public:
  Rational() : v_(0) {}
  Rational(int n) : v_(n) {}                 // NOLINT: implicit by design
  Rational(long n) : v_(static_cast<long>(n)) {}
  Rational(long long n) { v_ = from_decimal_(std::to_string(n)); }
  Rational(int num, int den) {
    if (den == 0) throw InvalidInput("Rational: zero denominator");
    v_ = mpq_class(num, den);
    v_.canonicalize();
  }
  explicit Rational(const mpq_class& q) : v_(q) { v_.canonicalize(); }

  // Parses "p", "-p", "p/q" with arbitrary-precision decimal p, q.
  static Rational parse(const std::string& s);

  // Canonical text form: "p" when the denominator is 1, else "p/q" with q > 1
  // after reduction; the sign sits on the numerator.
  std::string str() const;

  const mpq_class& raw() const { return v_; }
  mpz_class num() const { return v_.get_num(); }
  mpz_class den() const { return v_.get_den(); }

  bool is_zero() const { return sgn(v_) == 0; }
  int sign() const { return sgn(v_); }

  Rational& operator+=(const Rational& o) { v_ += o.v_; return *this; }
  Rational& operator-=(const Rational& o) { v_ -= o.v_; return *this; }
  Rational& operator*=(const Rational& o) { v_ *= o.v_; return *this; }
  Rational& operator/=(const Rational& o) {
    if (o.is_zero()) throw InvalidInput("Rational: division by zero");
    v_ /= o.v_;
    return *this;
  }

  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
  friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
  friend Rational operator-(const Rational& a) { Rational r; r.v_ = -a.v_; return r; }

  friend bool operator==(const Rational& a, const Rational& b) { return a.v_ == b.v_; }
  friend bool operator!=(const Rational& a, const Rational& b) { return a.v_ != b.v_; }
  friend bool operator<(const Rational& a, const Rational& b) { return a.v_ < b.v_; }
  friend bool operator<=(const Rational& a, const Rational& b) { return a.v_ <= b.v_; }
  friend bool operator>(const Rational& a, const Rational& b) { return a.v_ > b.v_; }
  friend bool operator>=(const Rational& a, const Rational& b) { return a.v_ >= b.v_; }

  friend Rational abs(const Rational& a) {
    Rational r;
    r.v_ = ::abs(a.v_);
    return r;
  }

  friend std::ostream& operator<<(std::ostream& os, const Rational& a);

 private:
  static mpq_class from_decimal_(const std::string& s) {
    return mpq_class(mpz_class(s, 10));
  }
  mpq_class v_;
};

// Convenience factory for fractional literals in code and tests.
inline Rational frac(long num, long den) {
  if (den == 0) throw InvalidInput("Rational: zero denominator");
  mpq_class q(static_cast<long>(num), static_cast<long>(den));
  q.canonicalize();
  return Rational(q);
}

}  // namespace hte

// Eigen interop: declare hte::Rational as a field scalar so dense matrices and
// exact LU factorizations work over it.
#include <Eigen/Core>

namespace Eigen {

template <>
struct NumTraits<hte::Rational> {
  using Real = hte::Rational;
  using NonInteger = hte::Rational;
  using Literal = hte::Rational;
  using Nested = hte::Rational;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 8,
    AddCost = 30,
    MulCost = 30,
  };
  static inline Real epsilon() { return hte::Rational(0); }
  static inline Real dummy_precision() { return hte::Rational(0); }
  static inline int digits10() { return 0; }
  static inline Real highest() { return hte::Rational(1); }
  static inline Real lowest() { return hte::Rational(-1); }
};

}  // namespace Eigen
