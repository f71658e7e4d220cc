#include "bk/rational.hpp"

#include <cmath>
#include <stdexcept>

namespace bk {

int valuation(const Rational& x, long p) {
  if (x == 0) throw std::invalid_argument("valuation of zero is undefined");
  Integer num = x.get_num();
  Integer den = x.get_den();
  Integer P(p);
  int v = 0;
  while (mpz_divisible_p(num.get_mpz_t(), P.get_mpz_t())) {
    num /= P;
    ++v;
  }
  while (mpz_divisible_p(den.get_mpz_t(), P.get_mpz_t())) {
    den /= P;
    --v;
  }
  return v;
}

int val_or_inf(const Rational& x, long p) {
  return x == 0 ? kValInfinity : valuation(x, p);
}

Rational unit_part(const Rational& x, long p) {
  int v = valuation(x, p);
  return x / pow_p(p, v);
}

Rational pow_p(long p, long e) {
  Integer P(p);
  Integer t;
  mpz_pow_ui(t.get_mpz_t(), P.get_mpz_t(), static_cast<unsigned long>(e < 0 ? -e : e));
  Rational r(t);
  if (e < 0) r = 1 / r;
  return r;
}

Rational canonical_mod(const Rational& x, long p, long level) {
  if (x == 0) return Rational(0);
  int v = valuation(x, p);
  if (v >= level) return Rational(0);
  long m = v < 0 ? -v : 0;
  // p^m*x = A/B with B prime to p; representative is (A*B^{-1} mod p^{level+m})/p^m.
  Rational y = x * pow_p(p, m);
  Integer A = y.get_num(), B = y.get_den();
  Integer mod;
  mpz_pow_ui(mod.get_mpz_t(), Integer(p).get_mpz_t(), static_cast<unsigned long>(level + m));
  Integer Binv;
  if (mpz_invert(Binv.get_mpz_t(), B.get_mpz_t(), mod.get_mpz_t()) == 0)
    throw std::logic_error("canonical_mod: denominator not prime to p");
  Integer t = (A % mod) * Binv % mod;
  if (t < 0) t += mod;
  return Rational(t) / pow_p(p, m);
}

int legendre_unit(const Rational& u, long p) {
  if (p == 2) throw std::invalid_argument("legendre_unit needs odd p");
  if (u == 0 || valuation(u, p) != 0)
    throw std::invalid_argument("legendre_unit needs a p-adic unit");
  long r = unit_mod_pk(u, p, 1);
  Integer a(r), P(p);
  return mpz_legendre(a.get_mpz_t(), P.get_mpz_t());
}

long unit_mod_pk(const Rational& u, long p, long k) {
  if (val_or_inf(u, p) < 0) throw std::invalid_argument("unit_mod_pk: negative valuation");
  Integer mod;
  mpz_pow_ui(mod.get_mpz_t(), Integer(p).get_mpz_t(), static_cast<unsigned long>(k));
  Integer A = u.get_num(), B = u.get_den();
  Integer Binv;
  if (mpz_invert(Binv.get_mpz_t(), B.get_mpz_t(), mod.get_mpz_t()) == 0)
    throw std::logic_error("unit_mod_pk: denominator not prime to p");
  Integer t = (A % mod) * Binv % mod;
  if (t < 0) t += mod;
  return t.get_si();
}

Rational parse_rational(const std::string& s) {
  Rational r;
  if (r.set_str(s, 10) != 0) throw std::invalid_argument("bad rational: " + s);
  r.canonicalize();
  return r;
}

std::string to_string(const Rational& x) { return x.get_str(); }

std::optional<Rational> snap_rational(double x, double tol, long max_den) {
  // Continued-fraction convergents of x.
  double v = x;
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;  // h_{-2}/k_{-2}, h_{-1}/k_{-1}
  for (int it = 0; it < 64; ++it) {
    double fl = std::floor(v);
    if (fl > 9e17 || fl < -9e17) break;
    long long a = static_cast<long long>(fl);
    long long p2 = a * p1 + p0, q2 = a * q1 + q0;
    if (q2 > max_den || q2 < 0) break;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    double approx = static_cast<double>(p1) / static_cast<double>(q1);
    if (std::abs(approx - x) <= tol) {
      Integer pn(static_cast<long>(p1)), qn(static_cast<long>(q1));
      Rational r{pn, qn};
      r.canonicalize();
      return r;
    }
    double rem = v - fl;
    if (rem < 1e-15) break;
    v = 1.0 / rem;
  }
  return std::nullopt;
}

}  // namespace bk
