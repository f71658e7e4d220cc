#include "bk/local_factors.hpp"

#include <cmath>
#include <stdexcept>

namespace bk {

// ---------------------------------------------------------- Hilbert symbol

int hilbert_symbol(const Rational& a, const Rational& b, long p) {
  if (a == 0 || b == 0)
    throw std::invalid_argument("hilbert_symbol: zero argument");
  int alpha = valuation(a, p), beta = valuation(b, p);
  Rational u = unit_part(a, p), v = unit_part(b, p);
  if (p != 2) {
    int sign = 1;
    if ((alpha % 2) && (beta % 2) && ((p - 1) / 2) % 2) sign = -sign;
    if (beta % 2 && legendre_unit(u, p) < 0) sign = -sign;
    if (alpha % 2 && legendre_unit(v, p) < 0) sign = -sign;
    return sign;
  }
  long u8 = unit_mod_pk(u, 2, 3), v8 = unit_mod_pk(v, 2, 3);
  auto eps = [](long x) { return ((x - 1) / 2) % 2; };           // x mod 4
  auto omg = [](long x) { return ((x * x - 1) / 8) % 2; };       // x mod 8
  long e = eps(u8) * eps(v8) + alpha * omg(v8) + beta * omg(u8);
  return e % 2 ? -1 : 1;
}

// --------------------------------------------------------- QuadraticSpace

QuadraticSpace::QuadraticSpace(GramPairing S) : S_(std::move(S)) {
  if (S_.dim() % 2 != 0)
    throw std::invalid_argument("QuadraticSpace: dimension must be even");
  // Congruence diagonalization of the Gram matrix; Q-coefficients are half
  // the diagonal entries.
  int n = S_.dim();
  std::vector<std::vector<Rational>> A = S_.matrix();
  for (int k = 0; k < n; ++k) {
    if (A[k][k] == 0) {
      int j = -1;
      for (int c = k + 1; c < n; ++c)
        if (A[k][c] != 0) {
          j = c;
          break;
        }
      if (j < 0) throw std::invalid_argument("QuadraticSpace: degenerate form");
      // x_k -> x_k + t x_j with t = +-1 making the new diagonal entry nonzero.
      for (int t : {1, -1}) {
        if (A[k][k] + 2 * t * A[k][j] + A[j][j] == 0) continue;
        for (int r = 0; r < n; ++r) A[r][k] += Rational(t) * A[r][j];
        for (int c = 0; c < n; ++c) A[k][c] += Rational(t) * A[j][c];
        break;
      }
    }
    for (int r = k + 1; r < n; ++r) {
      if (A[r][k] == 0) continue;
      Rational f = A[r][k] / A[k][k];
      for (int c = 0; c < n; ++c) A[r][c] -= f * A[k][c];
      for (int c = 0; c < n; ++c) A[c][r] -= f * A[c][k];
    }
    qdiag_.push_back(A[k][k] / 2);
  }
}

QuadraticSpace QuadraticSpace::hyperbolic(int d) {
  return QuadraticSpace(GramPairing::antidiagonal(d));
}

int chi_Q(const QuadraticSpace& space, const Rational& a,
          const PAdicContext& ctx) {
  if (a == 0) throw std::invalid_argument("chi_Q: zero argument");
  Rational disc = space.det();
  if ((space.dim() / 2) % 2) disc = -disc;
  return hilbert_symbol(a, disc, ctx.p);
}

// ------------------------------------------------------------ Weil indices

namespace {

// Exact Gauss integral I_m = int_{p^{-m} Z_p} psi(a x^2) dx: substituting
// x = p^{-m} t gives I_m = p^{m - D} sum_{t mod p^D} e(R t^2 / p^D) with
// a / p^{2m + c0} = R p^{-D}, R the unit part of a.
Complex gauss_integral(const Rational& a, int m, const PAdicContext& ctx) {
  long p = ctx.p;
  int va = valuation(a, p);
  long D = 2 * m + ctx.psi_conductor - va;
  if (D <= 0) return Complex(std::pow(static_cast<double>(p), m), 0.0);
  long mod = 1;
  for (long i = 0; i < D; ++i) {
    mod *= p;
    if (mod > 5000000L)
      throw std::runtime_error("weil_index_scalar: Gauss sum too large");
  }
  long Rm = unit_mod_pk(unit_part(a, p), p, D);
  Complex acc(0.0, 0.0);
  double twopi = 2.0 * std::acos(-1.0);
  for (long t = 0; t < mod; ++t) {
    __int128 t2 = static_cast<__int128>(t) * t % mod;
    long k = static_cast<long>(t2 * Rm % mod);
    acc += std::polar(1.0, twopi * static_cast<double>(k) /
                               static_cast<double>(mod));
  }
  return acc * std::pow(static_cast<double>(p), static_cast<double>(m - D));
}

}  // namespace

Complex weil_index_scalar(const Rational& a, const PAdicContext& ctx) {
  if (a == 0) throw std::invalid_argument("weil_index_scalar: zero argument");
  Complex prev(0.0, 0.0);
  int stable = 0;
  for (int m = 0; m <= 10; ++m) {
    Complex cur = gauss_integral(a, m, ctx);
    if (m > 0 && std::abs(cur - prev) < 1e-10 * (1.0 + std::abs(cur))) {
      if (++stable >= 2) {
        if (std::abs(cur) < 1e-12)
          throw std::runtime_error("weil_index_scalar: vanishing Gauss sum");
        return cur / std::abs(cur);
      }
    } else {
      stable = 0;
    }
    prev = cur;
  }
  throw std::runtime_error("weil_index_scalar: Gauss integrals did not stabilize");
}

Complex weil_index_form(const QuadraticSpace& space, const Rational& scale,
                        const PAdicContext& ctx) {
  if (scale == 0) throw std::invalid_argument("weil_index_form: zero scale");
  Complex g(1.0, 0.0);
  for (const Rational& ai : space.q_diagonal())
    g *= weil_index_scalar(scale * ai, ctx);
  return g;
}

// ----------------------------------------------------------- gamma factors

bool QuasiCharacter::is_unramified(long p) const {
  if (p == 2)
    return hilbert_symbol(Rational(-1), quad, 2) == 1 &&
           hilbert_symbol(Rational(5), quad, 2) == 1;
  // One nonresidue generates the unit square classes.
  for (long r = 2; r < p; ++r) {
    Rational rr(r);
    if (legendre_unit(rr, p) < 0) return hilbert_symbol(rr, quad, p) == 1;
  }
  throw std::logic_error("is_unramified: no nonresidue found");
}

int QuasiCharacter::conductor(long p) const {
  if (is_unramified(p)) return 0;
  if (p != 2) return 1;
  // Quadratic characters of Z_2^x factor through (Z/8)^x; conductor 8 unless
  // trivial on 5 (i.e. on 1 + 4 Z_2), in which case it is 4.
  return hilbert_symbol(Rational(5), quad, 2) == 1 ? 2 : 3;
}

LaurentFraction unramified_L(int eta_p, int twice_shift) {
  // (1 - eta(p) u^{-2 shift} X)^{-1}
  XPoly den = XPoly::one() -
              XPoly::monomial(UFrac(static_cast<long>(eta_p)) *
                                  UFrac::u_power(-twice_shift),
                              1);
  return LaurentFraction(XPoly::one(), den);
}

LaurentFraction zeta_integral(const SBFunction& f, const QuasiCharacter& chi,
                              const PAdicContext& ctx) {
  long p = ctx.p;
  Rational quad = chi.quad;
  auto eta = [quad, p](const Rational& x) { return hilbert_symbol(x, quad, p); };
  LaurentFraction Z = zeta_integral(f, eta, chi.conductor(p), ctx);
  if (chi.twice_shift == 0) return Z;
  // |.|^{s + shift}: X -> u^{-2 shift} X.
  return Z.substitute_X_scale(UFrac::u_power(-chi.twice_shift));
}

LaurentFraction gamma_factor(const QuasiCharacter& chi, const PAdicContext& ctx) {
  if (ctx.psi_conductor != 0)
    throw std::invalid_argument("gamma_factor: additive character must be unramified");
  long p = ctx.p;
  if (chi.is_unramified(p)) {
    int etap = chi.eta(Rational(p), p);
    // gamma = L(1-s, chi^{-1}) / L(s, chi), epsilon = 1:
    // (1 - eta(p) u^{-2 shift} X) / (1 - eta(p) u^{2 shift - 2} X^{-1}).
    LaurentFraction num(
        XPoly::one() - XPoly::monomial(UFrac(static_cast<long>(etap)) *
                                           UFrac::u_power(-chi.twice_shift),
                                       1),
        XPoly::one());
    LaurentFraction den(
        XPoly::one() - XPoly::monomial(UFrac(static_cast<long>(etap)) *
                                           UFrac::u_power(chi.twice_shift - 2),
                                       -1),
        XPoly::one());
    return num / den;
  }
  // Ramified quadratic: operational definition via the functional equation
  // with reference f = 1_{1 + p^c Z_p} (eta is trivial on 1 + p^c Z_p).
  int c = p == 2 ? 3 : 1;
  SBFunction f(p, 1);
  f.add_term({Rational(1)}, c, Complex(1.0, 0.0));
  SBFunction fhat = fourier_transform(f, GramPairing::identity(1), ctx);
  LaurentFraction Zf = zeta_integral(f, chi, ctx);
  QuasiCharacter dual{chi.quad, -chi.twice_shift};
  LaurentFraction Zhat = zeta_integral(fhat, dual, ctx)
                             .substitute_X_inverse(UFrac::u_power(-2));
  return Zhat / Zf;
}

}  // namespace bk
