#pragma once

#include "bk/laurent.hpp"
#include "bk/padic.hpp"
#include "bk/schwartz.hpp"

namespace bk {

/** Hilbert symbol (a,b)_p in {+1,-1} by the standard closed forms. */
int hilbert_symbol(const Rational& a, const Rational& b, long p);

/**
 * Even-dimensional nondegenerate quadratic space (V, Q) with Q(v) = <v,v>/2;
 * carries an exact diagonalization of Q over the rationals.
 */
class QuadraticSpace {
 public:
  explicit QuadraticSpace(GramPairing S);

  int dim() const { return S_.dim(); }
  const GramPairing& gram() const { return S_; }
  const Rational& det() const { return S_.det(); }
  // Coefficients a_i with Q ~ sum a_i x_i^2 (congruence diagonalization).
  const std::vector<Rational>& q_diagonal() const { return qdiag_; }

  static QuadraticSpace hyperbolic(int d);  // antidiagonal J_d

 private:
  GramPairing S_;
  std::vector<Rational> qdiag_;
};

/** chi_Q(a) = (a, (-1)^{d/2} det S)_p. */
int chi_Q(const QuadraticSpace& space, const Rational& a, const PAdicContext& ctx);

/**
 * Normalized Weil index gamma_psi(a) of x -> psi(a x^2): the phase of the
 * stabilized Gauss integrals over p^{-m} Z_p; an 8th root of unity.
 */
Complex weil_index_scalar(const Rational& a, const PAdicContext& ctx);

/** gamma(scale * Q) = prod_i gamma_psi(scale * a_i) over a diagonalization. */
Complex weil_index_form(const QuadraticSpace& space, const Rational& scale,
                        const PAdicContext& ctx);

/**
 * Quasi-character eta * |.|^{s + shift} with eta(x) = (x, quad)_p and shift a
 * half-integer (stored doubled so q^{-shift} = u^{-twice_shift} is exact).
 */
struct QuasiCharacter {
  Rational quad = Rational(1);
  int twice_shift = 0;

  static QuasiCharacter trivial() { return {Rational(1), 0}; }

  int eta(const Rational& x, long p) const { return hilbert_symbol(x, quad, p); }
  bool is_unramified(long p) const;
  // Conductor exponent of the unit part: 0 unramified, 1 for odd p, 2 or 3 at p=2.
  int conductor(long p) const;
  QuasiCharacter inverse() const { return {quad, -twice_shift}; }
};

/**
 * Tate gamma factor gamma(s, chi, psi) as an exact LaurentFraction in
 * X = q^{-s}, defined operationally by the functional equation
 * Z(f^, chi^{-1}, 1-s) = gamma * Z(f, chi, s) with a reference f, and matching
 * the L-quotient closed form in the unramified case.
 */
LaurentFraction gamma_factor(const QuasiCharacter& chi, const PAdicContext& ctx);

/** Unramified L-factor L(s, eta |.|^{shift}) = (1 - eta(p) u^{-2 shift} X)^{-1}. */
LaurentFraction unramified_L(int eta_p, int twice_shift);

/** Z(f, chi, s) with the character's quadratic unit part and half-integer shift. */
LaurentFraction zeta_integral(const SBFunction& f, const QuasiCharacter& chi,
                              const PAdicContext& ctx);

}  // namespace bk
