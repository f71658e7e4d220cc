#pragma once

// Shared helpers for tests: seeded random Schwartz-Bruhat functions and
// brute-force oracles used to cross-check the closed-form implementations.

#include <random>

#include "bk/padic.hpp"
#include "bk/schwartz.hpp"

namespace bktest {

using namespace bk;

/**
 * Random function with `nterms` cells at the given level, centers with
 * coordinate valuations >= -val_depth, coefficients in the unit box.
 * Kept small enough that dual-cell counts stay at desk scale.
 */
inline SBFunction random_function(std::mt19937& rng, long p, int dim, int level,
                                  int nterms, int val_depth = 1) {
  SBFunction f(p, dim);
  long span = 1;
  for (int e = 0; e < level + val_depth; ++e) span *= p;
  std::uniform_int_distribution<long> digit(0, span - 1);
  // Dyadic coefficients: exact in double, so zeta aggregates stay rational.
  std::uniform_int_distribution<int> coef(-16, 16);
  for (int t = 0; t < nterms; ++t) {
    std::vector<Rational> center(dim);
    for (int j = 0; j < dim; ++j)
      center[j] = Rational(digit(rng)) * pow_p(p, -val_depth);
    f.add_term(std::move(center), level,
               Complex(coef(rng) / 16.0, coef(rng) / 16.0));
  }
  f.merge_duplicates();
  return f;
}

/**
 * Brute-force Fourier transform value at one point t: refine the source to
 * `depth` and sum psi(<t,x>) f(x) dx cell-by-cell (self-dual measure factor
 * included), as an independent oracle.
 */
inline Complex brute_fourier_at(const SBFunction& f, const GramPairing& S,
                                const PAdicContext& ctx,
                                const std::vector<Rational>& t, int depth,
                                bool conjugate = false) {
  SBFunction fc = f.canonicalized(depth);
  long p = ctx.p;
  int n = f.dim();
  int vdet = bk::val_or_inf(S.det(), p);
  double mu = std::pow(static_cast<double>(p),
                       (static_cast<double>(n) * ctx.psi_conductor - vdet) / 2.0);
  Complex acc(0.0, 0.0);
  double vol = pow_p(p, -depth * n).get_d();
  for (const auto& term : fc.terms()) {
    Rational phase(0);
    std::vector<Rational> St = S.apply(t);
    for (int j = 0; j < n; ++j) phase += St[j] * term.center[j];
    Complex ps = psi_eval(ctx, phase);
    if (conjugate) ps = std::conj(ps);
    acc += term.coeff * ps * vol;
  }
  return acc * mu;
}

}  // namespace bktest
