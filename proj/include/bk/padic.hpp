#pragma once

#include <complex>
#include <vector>

#include "bk/rational.hpp"

namespace bk {

using Complex = std::complex<double>;

/**
 * Context for one local field Q_p: the prime, the conductor of the additive
 * character psi (psi trivial on p^conductor Z_p, nontrivial one level below),
 * and the tolerance used for all floating-point comparisons.
 */
struct PAdicContext {
  long p;
  long psi_conductor = 0;
  double tolerance = 1e-9;

  PAdicContext(long prime, long conductor = 0, double tol = 1e-9);

  bool close(const Complex& a, const Complex& b) const;
};

/**
 * An element of Q_p held exactly as a rational with cached valuation.
 * norm(0) = 0; norm(x) = p^{-valuation} otherwise.
 */
struct PAdicScalar {
  Rational value;
  int valuation;  // kValInfinity for zero

  PAdicScalar() : value(0), valuation(kValInfinity) {}
  PAdicScalar(const Rational& v, long p) : value(v), valuation(val_or_inf(v, p)) {}

  double norm(long p) const;
};

/**
 * psi(x) = e^{2 pi i frac_p(x / p^conductor)} where frac_p is the p-power
 * fractional part (the class of x in Q_p/Z_p realized in [0,1)).
 */
Complex psi_eval(const PAdicContext& ctx, const Rational& x);

// The exact fractional part used by psi_eval (element of Z[1/p] in [0,1)).
Rational psi_phase(const PAdicContext& ctx, const Rational& x);

/**
 * Haar measure of center + p^level Z_p. Additive: self-dual for unramified
 * psi, vol(Z_p) = 1, so p^{-level}. Multiplicative flag: measure of the shell
 * {|x| = p^{-level}} under d^x = zeta(1) dx/|x|, which is 1 for every level.
 */
enum class Measure { Additive, Multiplicative };
Rational ball_volume(const PAdicContext& ctx, long level,
                     Measure m = Measure::Additive);

}  // namespace bk
