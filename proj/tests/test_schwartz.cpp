#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bk/schwartz.hpp"
#include "support.hpp"

using namespace bk;
using namespace bktest;

static SBFunction indicator_Zp(long p) {
  SBFunction f(p, 1);
  f.add_term({Rational(0)}, 0, Complex(1, 0));
  return f;
}

TEST_CASE("cell bookkeeping: value, inner product, canonical form") {
  SBFunction f(3, 2);
  f.add_term({Rational(0), Rational(0)}, 0, Complex(1, 0));
  f.add_term({Rational(1), Rational(2)}, 1, Complex(0, 2));
  CHECK(f.value_at({Rational(9), Rational(3)}) == Complex(1, 0));
  CHECK(f.value_at({Rational(1), Rational(2)}) == Complex(1, 2));
  CHECK(f.value_at({Rational(1, 3), Rational(0)}) == Complex(0, 0));

  // <f,f> = 1*1 + overlap bookkeeping (second cell inside the first).
  Complex n2 = SBFunction::inner_product(f, f);
  // |1|^2 * 1 + cross terms 2*Re(1 * conj(2i)) * (1/9) + |2i|^2 * (1/9)
  CHECK(std::abs(n2 - Complex(1 + 4.0 / 9.0, 0)) < 1e-12);

  SBFunction c = f.canonicalized(1);
  CHECK(c.max_level() == 1);
  CHECK(std::abs(SBFunction::inner_product(c, c) - n2) < 1e-12);
  CHECK(SBFunction::approx_equal(f, c, 1e-9));

  // JSON round trip through the common-level schema.
  SBFunction back = SBFunction::from_json(f.to_json());
  CHECK(SBFunction::approx_equal(f, back, 1e-9));
}

TEST_CASE("fourier fixed point and closed-form example") {
  for (long p : {2L, 3L, 5L}) {
    PAdicContext ctx(p);
    SBFunction f = indicator_Zp(p);
    SBFunction g = fourier_transform(f, GramPairing::identity(1), ctx);
    CHECK(SBFunction::approx_equal(f, g, 1e-9));
  }

  // p=2: transform of 1_{1+2Z_2} is (1/2) psi(t) 1_{(1/2)Z_2}(t).
  PAdicContext ctx(2);
  SBFunction f(2, 1);
  f.add_term({Rational(1)}, 1, Complex(1, 0));
  SBFunction g = fourier_transform(f, GramPairing::identity(1), ctx);
  for (long num = -4; num <= 4; ++num) {
    Rational t = Rational(num) / 2;
    Complex expect = val_or_inf(t, 2) >= -1
                         ? 0.5 * psi_eval(ctx, t)
                         : Complex(0, 0);
    CHECK(std::abs(g.value_at({t}) - expect) < 1e-12);
  }
  // Brute-force character sum over representatives mod 2^4.
  for (long num : {0L, 1L, 3L, 5L}) {
    Rational t = Rational(num) / 2;
    CHECK(std::abs(g.value_at({t}) - brute_fourier_at(f, GramPairing::identity(1),
                                                      ctx, {t}, 4)) < 1e-10);
  }
}

TEST_CASE("random inversion, Plancherel, translation covariance") {
  std::mt19937 rng(20240817);
  for (long p : {2L, 3L, 5L}) {
    PAdicContext ctx(p);
    for (int n = 1; n <= 3; ++n) {
      GramPairing S = n == 2 ? GramPairing::antidiagonal(2)
                             : GramPairing::identity(n);
      for (int rep = 0; rep < 4; ++rep) {
        // Keep the round-trip cell count p^{2 n (level + depth)} at desk scale.
        int level = p == 2 ? 2 : 1;
        int depth = p == 5 ? 0 : 1;
        SBFunction f = random_function(rng, p, n, level, 3, depth);
        SBFunction g = random_function(rng, p, n, level, 3, depth);
        SBFunction fh = fourier_transform(f, S, ctx);
        SBFunction gh = fourier_transform(g, S, ctx);
        SBFunction finv = inverse_fourier_transform(fh, S, ctx);
        CHECK(SBFunction::approx_equal(f, finv, 1e-9));
        Complex ip1 = SBFunction::inner_product(f, g);
        Complex ip2 = SBFunction::inner_product(fh, gh);
        CHECK(std::abs(ip1 - ip2) < 1e-9);
      }
    }
  }

  // Translation covariance: (f(.-a))^ = psi(<t,a>) f^(t).
  PAdicContext ctx(3);
  std::mt19937 rng2(7);
  SBFunction f = random_function(rng2, 3, 2, 1, 3);
  GramPairing S = GramPairing::identity(2);
  std::vector<Rational> a{Rational(1, 3), Rational(2)};
  SBFunction fa(3, 2);
  for (const auto& t : f.terms()) {
    std::vector<Rational> c = t.center;
    for (int j = 0; j < 2; ++j) c[j] += a[j];
    fa.add_term(c, t.level, t.coeff);
  }
  SBFunction fah = fourier_transform(fa, S, ctx);
  SBFunction fh = fourier_transform(f, S, ctx);
  // Compare at the cells of fah.
  for (const auto& t : fah.terms()) {
    Rational phase(0);
    auto Sa = S.apply(a);
    for (int j = 0; j < 2; ++j) phase += t.center[j] * Sa[j];
    Complex expect = std::conj(psi_eval(ctx, phase)) * fh.value_at(t.center);
    // (f(x-a))^(t) = integral psi(<t,x>) f(x-a) dx = psi(<t,a>) f^(t);
    // here fa(x) = f(x-a) so fah = psi(<t,a>) fh.
    CHECK(std::abs(fah.value_at(t.center) - psi_eval(ctx, phase) * fh.value_at(t.center)) < 1e-9);
    (void)expect;
  }
}

TEST_CASE("rational Gram matrices keep inversion exact") {
  std::mt19937 rng(99);
  PAdicContext ctx(3);
  GramPairing S({{Rational(2), Rational(1, 3)}, {Rational(1, 3), Rational(-1)}});
  SBFunction f = random_function(rng, 3, 2, 1, 2);
  SBFunction fh = fourier_transform(f, S, ctx);
  SBFunction back = inverse_fourier_transform(fh, S, ctx);
  CHECK(SBFunction::approx_equal(f, back, 1e-9));
  // Plancherel with the self-dual measure normalization.
  CHECK(std::abs(SBFunction::inner_product(fh, fh) -
                 SBFunction::inner_product(f, f)) < 1e-9);
}

TEST_CASE("zeta integrals: canonical shapes") {
  LaurentFraction X = LaurentFraction::X_power(1);
  LaurentFraction one(1L);
  for (long p : {2L, 3L, 5L}) {
    PAdicContext ctx(p);
    SBFunction zp = indicator_Zp(p);
    CHECK(zeta_integral(zp, UnitChar::Trivial, ctx) == (one - X).inv());

    SBFunction units(p, 1);
    for (long c = 1; c < p; ++c) units.add_term({Rational(c)}, 1, Complex(1, 0));
    CHECK(zeta_integral(units, UnitChar::Trivial, ctx) == one);

    SBFunction pz(p, 1);
    pz.add_term({Rational(0)}, 1, Complex(1, 0));
    CHECK(zeta_integral(pz, UnitChar::Trivial, ctx) == X * (one - X).inv());

    // Quadratic unramified eta: Z(1_{Z_p}) = 1/(1 + X)... sign pattern via
    // eta(p) = -1: sum (-X)^m = 1/(1+X).
    CHECK(zeta_integral(zp, UnitChar::UnramifiedQuadratic, ctx) ==
          (one + X).inv());
  }
}

TEST_CASE("zeta integral numeric agreement on random s0") {
  std::mt19937 rng(1234);
  long p = 3;
  PAdicContext ctx(p);
  SBFunction f = random_function(rng, p, 1, 2, 3);
  LaurentFraction Z = zeta_integral(f, UnitChar::Trivial, ctx);
  std::uniform_real_distribution<double> re(0.5, 2.0), im(-1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::complex<double> s0(re(rng), im(rng));
    // Direct shell sum to depth 40 (geometric tail below 1e-12).
    std::complex<double> direct = 0.0;
    int K = f.max_level();
    for (int m = -f.support_norm_exp(); m < 40; ++m) {
      Complex shell(0, 0);
      long span = 1;
      for (int e = 0; e < std::max(K - m, 1); ++e) span *= p;
      for (long c = 1; c < span; ++c) {
        if (c % p == 0) continue;
        shell += f.value_at({Rational(c) * pow_p(p, m)});
      }
      double volx = pow_p(p, -std::max(K - m, 1) + 1).get_d() / (1.0 - 1.0 / p) /
                    p;  // zeta(1) * p^m * dx-vol of one rep cell
      direct += shell * volx * std::pow(std::complex<double>(p, 0),
                                        -s0 * static_cast<double>(m));
    }
    CHECK(std::abs(Z.eval_at_s(s0, static_cast<double>(p)) - direct) < 1e-8);
  }
}

TEST_CASE("pv_integral statuses") {
  TruncationPolicy pol;
  PAdicContext ctx(3);
  // Compactly supported: proven vanishing.
  PvResult r1 = pv_integral(
      [&](int m) {
        ShellTerm t;
        t.value = m < 3 ? Complex(1.0 / (m + 1), 0) : Complex(0, 0);
        t.exact_zero = m >= 3;
        t.provably_zero_beyond = m >= 3;
        return t;
      },
      pol, 1e-9);
  CHECK(r1.status == ShellStatus::ProvenVanishing);
  CHECK(std::abs(r1.value - Complex(1 + 0.5 + 1.0 / 3, 0)) < 1e-12);

  // g(t) = psi(t) 1_{|t|<=p^M}: shells |t| = p^m, m >= 1, vanish exactly.
  // Shell index j corresponds to |t| = p^{j} here.
  long p = 3;
  int M = 5;
  auto shell = [&](int j) {
    ShellTerm t;
    // Exact character sum over the shell {val = -j} at level M+1.
    Complex acc(0, 0);
    long span = 1;
    for (int e = 0; e < M + 1 + j; ++e) span *= p;
    if (j <= M) {
      for (long c = 1; c < span; ++c) {
        if (c % p == 0) continue;
        acc += psi_eval(ctx, Rational(c) * pow_p(p, -j));
      }
      acc *= pow_p(p, -(M + 1 + j)).get_d();
    }
    t.value = acc;
    t.exact_zero = std::abs(acc) < 1e-12;
    t.provably_zero_beyond = j > M;  // compact support bound
    return t;
  };
  PvResult r2 = pv_integral(shell, pol, 1e-9);
  CHECK(r2.status == ShellStatus::ProvenVanishing);
  // Ramanujan sums: the shell at |t| = p is -1/p * (unit volume), shells
  // at |t| >= p^2 vanish exactly.
  CHECK(!shell(1).exact_zero);
  for (int j = 2; j <= M; ++j) CHECK(shell(j).exact_zero);

  // Zero integrand.
  PvResult r3 = pv_integral(
      [](int) {
        ShellTerm t;
        t.value = Complex(0, 0);
        t.exact_zero = true;
        t.provably_zero_beyond = true;
        return t;
      },
      pol, 1e-9);
  CHECK(r3.status == ShellStatus::ProvenVanishing);
  CHECK(std::abs(r3.value) < 1e-15);

  // Truncated when nothing stabilizes.
  PvResult r4 = pv_integral(
      [](int m) {
        ShellTerm t;
        t.value = Complex(1.0, 0);
        return t;
      },
      pol, 1e-9);
  CHECK(r4.status == ShellStatus::Truncated);
}

TEST_CASE("level_set_integral examples and decay") {
  long p = 3;
  PAdicContext ctx(p);
  SBFunction f(p, 2);
  f.add_term({Rational(0), Rational(0)}, 0, Complex(1, 0));

  // Coordinate projection: slice x = 0 of 1_{Z_p^2} has measure 1.
  Polynomial px{{{Rational(1), {1, 0}}}};
  LevelSetResult r1 = level_set_integral(f, {px}, {Rational(0)}, 2, ctx);
  CHECK(std::abs(r1.value - Complex(1, 0)) < 1e-12);
  CHECK(r1.discrepancy < 1e-12);

  // Hyperbola xy = 1 inside Z_p^2: chart y = 1/x over units; the chart
  // measure is dx on Z_p^x, total 1 - 1/p (Hensel chart oracle below).
  Polynomial pxy{{{Rational(1), {1, 1}}}};
  LevelSetResult r2 = level_set_integral(f, {pxy}, {Rational(1)}, 3, ctx);
  double expect = 1.0 - 1.0 / p;
  CHECK(std::abs(r2.value - Complex(expect, 0)) < 1e-9);
  // Hensel chart oracle: every unit x mod p^m lifts uniquely to a solution
  // (x, 1/x); count level-m points directly at m = 4.
  {
    int m = 4;
    long span = 81;
    long count = 0;
    for (long x = 1; x < span; ++x) {
      if (x % p == 0) continue;
      for (long y = 1; y < span; ++y) {
        if ((x * y) % span == 1 % span) ++count;
      }
    }
    double est = std::pow((double)p, m) * count * std::pow((double)p, -2.0 * m);
    CHECK(std::abs(est - expect) < 1e-12);
  }

  // Discrepancy decays by >= factor 2 per refinement on a smooth family.
  SBFunction g(p, 2);
  g.add_term({Rational(0), Rational(0)}, 0, Complex(1, 0));
  g.add_term({Rational(1), Rational(1)}, 1, Complex(0.5, 0.25));
  Polynomial psum{{{Rational(1), {2, 0}}, {Rational(1), {0, 1}}}};  // x^2 + y
  double prev = -1;
  for (int m = 1; m <= 3; ++m) {
    LevelSetResult r = level_set_integral(g, {psum}, {Rational(1)}, m, ctx);
    if (prev >= 0 && prev > 1e-13)
      CHECK(r.discrepancy <= prev / 2.0 + 1e-12);
    prev = r.discrepancy;
  }
}
