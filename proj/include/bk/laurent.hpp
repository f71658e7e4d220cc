#pragma once

#include <complex>
#include <string>
#include <vector>

#include "bk/rational.hpp"

namespace bk {

/** Gaussian rational a + b*i; the exact coefficient field. */
struct QQi {
  Rational re, im;

  QQi() : re(0), im(0) {}
  QQi(const Rational& r) : re(r), im(0) {}
  QQi(const Rational& r, const Rational& i) : re(r), im(i) {}
  QQi(long n) : re(n), im(0) {}

  bool is_zero() const { return re == 0 && im == 0; }
  QQi operator+(const QQi& o) const { return {re + o.re, im + o.im}; }
  QQi operator-(const QQi& o) const { return {re - o.re, im - o.im}; }
  QQi operator-() const { return {-re, -im}; }
  QQi operator*(const QQi& o) const {
    return {re * o.re - im * o.im, re * o.im + im * o.re};
  }
  QQi inv() const;
  QQi operator/(const QQi& o) const { return *this * o.inv(); }
  bool operator==(const QQi& o) const { return re == o.re && im == o.im; }
  std::complex<double> to_complex() const { return {re.get_d(), im.get_d()}; }
  std::string str() const;
};

/**
 * Laurent polynomial in u (semantics u = q^{1/2}) over QQi.
 * Terms are c[i] * u^{low+i}; zero is the empty vector.
 */
class UPoly {
 public:
  UPoly() : low_(0) {}
  static UPoly constant(const QQi& c) { return monomial(c, 0); }
  static UPoly monomial(const QQi& c, int exp);
  static UPoly zero() { return UPoly(); }
  static UPoly one() { return constant(QQi(1)); }

  bool is_zero() const { return c_.empty(); }
  int low() const { return low_; }
  int high() const { return low_ + static_cast<int>(c_.size()) - 1; }
  const std::vector<QQi>& coeffs() const { return c_; }
  QQi coeff(int exp) const;

  UPoly operator+(const UPoly& o) const;
  UPoly operator-(const UPoly& o) const;
  UPoly operator-() const;
  UPoly operator*(const UPoly& o) const;
  bool operator==(const UPoly& o) const { return low_ == o.low_ && c_ == o.c_; }

  UPoly shifted(int dexp) const;  // multiply by u^dexp
  /**
   * Canonical form under the semantic identity u^2 = q = p: every coefficient
   * becomes a p-unit, its p-valuation absorbed into the u-exponent. The folded
   * form is zero iff the element is zero in Q(i)(sqrt p).
   */
  UPoly fold_prime(long p) const;
  std::complex<double> eval(std::complex<double> u) const;
  std::string str() const;

  // Ordinary-polynomial division for Laurent inputs made ordinary by shifting.
  static void divmod(const UPoly& a, const UPoly& b, UPoly& q, UPoly& r);
  static UPoly gcd(UPoly a, UPoly b);  // monic ordinary gcd (1 if coprime)

 private:
  int low_;
  std::vector<QQi> c_;
  void trim();
  friend class UFrac;
};

/** Field of fractions of the u-Laurent ring, kept gcd-reduced and normalized. */
class UFrac {
 public:
  UFrac() : num_(), den_(UPoly::one()) {}
  UFrac(const UPoly& n, const UPoly& d);
  UFrac(const Rational& r) : UFrac(UPoly::constant(QQi(r)), UPoly::one()) {}
  UFrac(long n) : UFrac(Rational(n)) {}
  static UFrac from_qqi(const QQi& c) { return UFrac(UPoly::constant(c), UPoly::one()); }
  static UFrac u_power(int e) { return UFrac(UPoly::monomial(QQi(1), e), UPoly::one()); }

  bool is_zero() const { return num_.is_zero(); }
  const UPoly& num() const { return num_; }
  const UPoly& den() const { return den_; }

  UFrac operator+(const UFrac& o) const;
  UFrac operator-(const UFrac& o) const;
  UFrac operator-() const;
  UFrac operator*(const UFrac& o) const;
  UFrac operator/(const UFrac& o) const;
  UFrac inv() const;
  bool operator==(const UFrac& o) const { return num_ == o.num_ && den_ == o.den_; }

  std::complex<double> eval(std::complex<double> u) const;
  std::string str() const;

 private:
  UPoly num_;  // Laurent polynomial
  UPoly den_;  // ordinary polynomial, nonzero constant term, monic
  void reduce();
};

/** Laurent polynomial in X (semantics X = q^{-s}) over UFrac. */
class XPoly {
 public:
  XPoly() : low_(0) {}
  static XPoly monomial(const UFrac& c, int exp);
  static XPoly constant(const UFrac& c) { return monomial(c, 0); }
  static XPoly one() { return constant(UFrac(1)); }

  bool is_zero() const { return c_.empty(); }
  int low() const { return low_; }
  int high() const { return low_ + static_cast<int>(c_.size()) - 1; }
  UFrac coeff(int exp) const;
  const std::vector<UFrac>& coeffs() const { return c_; }

  XPoly operator+(const XPoly& o) const;
  XPoly operator-(const XPoly& o) const;
  XPoly operator-() const;
  XPoly operator*(const XPoly& o) const;
  bool operator==(const XPoly& o) const { return low_ == o.low_ && c_ == o.c_; }

  XPoly shifted(int dexp) const;
  std::complex<double> eval(std::complex<double> X, std::complex<double> u) const;
  std::string str() const;

  static void divmod(const XPoly& a, const XPoly& b, XPoly& q, XPoly& r);
  static XPoly gcd(XPoly a, XPoly b);

 private:
  int low_;
  std::vector<UFrac> c_;
  void trim();
  friend class LaurentFraction;
};

/**
 * Exact rational function in X = q^{-s} with coefficients rational Laurent
 * polynomials in u = q^{1/2}: the house of zeta integrals, L-, gamma-factors,
 * a_L and mu_L. Canonical form: denominator is an ordinary polynomial in X
 * with nonzero constant term, monic over UFrac, coprime to the numerator; so
 * equality is structural.
 */
class LaurentFraction {
 public:
  LaurentFraction() : num_(), den_(XPoly::one()) {}
  LaurentFraction(const XPoly& n, const XPoly& d);
  LaurentFraction(const Rational& r)
      : LaurentFraction(XPoly::constant(UFrac(r)), XPoly::one()) {}
  LaurentFraction(long n) : LaurentFraction(Rational(n)) {}
  static LaurentFraction from_ufrac(const UFrac& c) {
    return LaurentFraction(XPoly::constant(c), XPoly::one());
  }
  // c * X^e monomials and u^e monomials.
  static LaurentFraction X_power(int e) {
    return LaurentFraction(XPoly::monomial(UFrac(1), e), XPoly::one());
  }
  static LaurentFraction u_power(int e) { return from_ufrac(UFrac::u_power(e)); }

  bool is_zero() const { return num_.is_zero(); }
  const XPoly& num() const { return num_; }
  const XPoly& den() const { return den_; }

  LaurentFraction operator+(const LaurentFraction& o) const;
  LaurentFraction operator-(const LaurentFraction& o) const;
  LaurentFraction operator-() const;
  LaurentFraction operator*(const LaurentFraction& o) const;
  LaurentFraction operator/(const LaurentFraction& o) const;
  LaurentFraction inv() const;
  LaurentFraction pow(int e) const;
  bool operator==(const LaurentFraction& o) const {
    return num_ == o.num_ && den_ == o.den_;
  }
  /**
   * Exact equality in Q(i)(sqrt q)(X) for the concrete residue size q = p,
   * i.e. with u^2 = p imposed; structural == is stricter (purely formal u).
   */
  bool equals_at_prime(const LaurentFraction& o, long p) const;

  /**
   * Substitute X -> c * X^{-1} (c an exact u-coefficient); used to express
   * Z(., 1-s) in the same variable: q^{-(1-s)} = q^{-1} X^{-1}.
   */
  LaurentFraction substitute_X_inverse(const UFrac& c) const;
  /** Substitute X -> c * X; used to absorb half-integer exponent shifts. */
  LaurentFraction substitute_X_scale(const UFrac& c) const;

  std::complex<double> eval(std::complex<double> X, std::complex<double> u) const;
  // Evaluate at s = s0 for prime power q (X = q^{-s0}, u = sqrt(q)).
  std::complex<double> eval_at_s(std::complex<double> s0, double q) const;

  std::string str() const;

 private:
  XPoly num_;
  XPoly den_;
  void reduce();
};

}  // namespace bk
