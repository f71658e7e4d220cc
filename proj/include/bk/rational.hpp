#pragma once

#include <gmpxx.h>
#include <optional>
#include <string>
#include <vector>

namespace bk {

using Rational = mpq_class;
using Integer = mpz_class;

/**
 * p-adic valuation of a nonzero rational: v_p(num) - v_p(den).
 * Zero has no finite valuation; val_or_inf uses a large sentinel.
 */
int valuation(const Rational& x, long p);

// Sentinel used for v_p(0); larger than any level arising at desk scale.
constexpr int kValInfinity = 1 << 28;
int val_or_inf(const Rational& x, long p);

// The unit part u of x = p^v * u (x nonzero).
Rational unit_part(const Rational& x, long p);

// p^e as an exact rational, any sign of e.
Rational pow_p(long p, long e);

/**
 * Canonical representative of x modulo p^level * Z_p: the unique element of
 * Z[1/p] in [0, p^level) congruent to x (i.e. val(x - rep) >= level).
 * Computed via a modular inverse of the prime-to-p denominator part.
 */
Rational canonical_mod(const Rational& x, long p, long level);

// Legendre symbol of a rational unit u modulo odd prime p (u must have v_p=0).
int legendre_unit(const Rational& u, long p);

// Rational unit reduced mod p^k as an integer in [0, p^k) (v_p(u) >= 0 required).
long unit_mod_pk(const Rational& u, long p, long k);

// Parse "a/b" or "a" into an exact rational; throws std::invalid_argument.
Rational parse_rational(const std::string& s);
std::string to_string(const Rational& x);

// Exact continued-fraction snap of a double to a rational with denominator
// bound; returns nullopt if no rational within tol exists under the bound.
std::optional<Rational> snap_rational(double x, double tol, long max_den = 100000000L);

}  // namespace bk
