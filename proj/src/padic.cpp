#include "bk/padic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bk {

static bool is_prime(long n) {
  if (n < 2) return false;
  for (long d = 2; d * d <= n; ++d)
    if (n % d == 0) return false;
  return true;
}

PAdicContext::PAdicContext(long prime, long conductor, double tol)
    : p(prime), psi_conductor(conductor), tolerance(tol) {
  if (!is_prime(prime)) throw std::invalid_argument("PAdicContext: p must be prime");
  if (tol <= 0) throw std::invalid_argument("PAdicContext: tolerance must be positive");
}

bool PAdicContext::close(const Complex& a, const Complex& b) const {
  return std::abs(a - b) <= tolerance;
}

double PAdicScalar::norm(long p) const {
  if (valuation == kValInfinity) return 0.0;
  return std::pow(static_cast<double>(p), -static_cast<double>(valuation));
}

Rational psi_phase(const PAdicContext& ctx, const Rational& x) {
  if (x == 0) return Rational(0);
  Rational shifted = x / pow_p(ctx.p, ctx.psi_conductor);
  return canonical_mod(shifted, ctx.p, 0);
}

Complex psi_eval(const PAdicContext& ctx, const Rational& x) {
  Rational frac = psi_phase(ctx, x);
  if (frac == 0) return Complex(1.0, 0.0);
  double angle = 2.0 * std::numbers::pi * frac.get_d();
  return Complex(std::cos(angle), std::sin(angle));
}

Rational ball_volume(const PAdicContext& ctx, long level, Measure m) {
  if (m == Measure::Additive) return pow_p(ctx.p, -level);
  // zeta(1) * dx(shell)/|shell| = (1-1/q)^{-1} * (p^{-level}(1-1/q)) / p^{-level}.
  return Rational(1);
}

}  // namespace bk
