#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <random>

#include "bk/transforms.hpp"
#include "support.hpp"

using namespace bk;
using namespace bktest;

namespace {

Rational random_rational(std::mt19937& rng, long p, int vmin, int vmax) {
  std::uniform_int_distribution<int> v(vmin, vmax);
  std::uniform_int_distribution<long> u(1, 4 * p);
  long num = u(rng);
  while (num % p == 0) num = u(rng);
  std::uniform_int_distribution<int> sign(0, 1);
  return Rational(sign(rng) ? num : -num) * pow_p(p, v(rng));
}

// Brute-force double integral over Z_p^2 at resolution M.
Complex brute_pair_integral(const PAdicContext& ctx, const Rational& A,
                            const Rational& B, const Rational& C, int M) {
  long span = 1;
  for (int e = 0; e < M; ++e) span *= ctx.p;
  Complex acc(0, 0);
  for (long x = 0; x < span; ++x)
    for (long y = 0; y < span; ++y)
      acc += psi_eval(ctx, A * x + B * y + C * Rational(x) * Rational(y));
  return acc / static_cast<double>(span * span);
}

Complex brute_square_cell(const PAdicContext& ctx, const Rational& q,
                          const Rational& b, const Rational& c, int L, int M) {
  long span = 1;
  for (int e = 0; e < M; ++e) span *= ctx.p;
  Complex acc(0, 0);
  Rational pL = pow_p(ctx.p, L);
  for (long x = 0; x < span; ++x) {
    Rational t = c + pL * x;
    acc += psi_eval(ctx, q * t * t + b * t);
  }
  return acc * pow_p(ctx.p, -L).get_d() / static_cast<double>(span);
}

}  // namespace

TEST_CASE("phase multipliers are exact pointwise and unimodular") {
  std::mt19937 rng(7001);
  for (long p : {2L, 3L, 5L}) {
    PAdicContext ctx(p);
    SBFunction f = random_function(rng, p, 2, 1, 3, 1);
    std::vector<Rational> ell = {random_rational(rng, p, -3, 1),
                                 random_rational(rng, p, -3, 1)};
    SBFunction g = multiply_linear_phase(f, ell, ctx);
    GramPairing S = GramPairing::antidiagonal(2);
    Rational sc = random_rational(rng, p, -3, 0);
    SBFunction h = multiply_quadratic_phase(f, S, sc, ctx);
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<Rational> x = {random_rational(rng, p, -1, 3),
                                 random_rational(rng, p, -1, 3)};
      Complex fx = f.value_at(x);
      Complex expect_lin = fx * psi_eval(ctx, ell[0] * x[0] + ell[1] * x[1]);
      CHECK(std::abs(g.value_at(x) - expect_lin) < 1e-12);
      Complex expect_quad = fx * psi_eval(ctx, sc * S.quad(x));
      CHECK(std::abs(h.value_at(x) - expect_quad) < 1e-12);
    }
    // |psi| = 1 pointwise, so the L2 norm is preserved exactly.
    Complex n0 = SBFunction::inner_product(f, f);
    CHECK(std::abs(SBFunction::inner_product(g, g) - n0) < 1e-12);
    CHECK(std::abs(SBFunction::inner_product(h, h) - n0) < 1e-12);
  }
}

TEST_CASE("scale_argument relabels cells exactly") {
  std::mt19937 rng(7002);
  PAdicContext ctx(3);
  SBFunction f = random_function(rng, 3, 2, 1, 3, 1);
  Rational a = Rational(2, 3);
  SBFunction g = scale_argument(f, a);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Rational> x = {random_rational(rng, 3, -2, 3),
                               random_rational(rng, 3, -2, 3)};
    CHECK(g.value_at(x) == f.value_at({a * x[0], a * x[1]}));
  }
}

TEST_CASE("hyperbolic and square Gauss cells match brute-force sums") {
  std::mt19937 rng(7003);
  for (long p : {2L, 3L, 5L}) {
    PAdicContext ctx(p);
    for (int trial = 0; trial < 25; ++trial) {
      Rational A = random_rational(rng, p, -2, 1);
      Rational B = random_rational(rng, p, -2, 1);
      Rational C = random_rational(rng, p, -2, 1);
      if (trial % 5 == 0) A = 0;
      if (trial % 7 == 0) C = 0;
      Complex closed = hyperbolic_pair_integral(ctx, A, B, C);
      CHECK(std::abs(closed - brute_pair_integral(ctx, A, B, C, 3)) < 1e-10);
    }
    // Shifted cells through the wrapper.
    for (int trial = 0; trial < 10; ++trial) {
      Rational al = random_rational(rng, p, -3, 0);
      Rational bx = random_rational(rng, p, -2, 1);
      Rational by = random_rational(rng, p, -2, 1);
      Rational cx = random_rational(rng, p, 0, 2);
      Rational cy = random_rational(rng, p, 0, 2);
      int L = 1;
      Complex closed = hyperbolic_cell_integral(ctx, al, bx, by, cx, cy, L);
      // Brute: x = cx + p^L X, y = cy + p^L Y over X,Y in Z_p at depth 3.
      long span = 1;
      for (int e = 0; e < 3; ++e) span *= p;
      Complex acc(0, 0);
      Rational pL = pow_p(p, L);
      for (long X = 0; X < span; ++X)
        for (long Y = 0; Y < span; ++Y) {
          Rational x = cx + pL * X, y = cy + pL * Y;
          acc += psi_eval(ctx, al * x * y + bx * x + by * y);
        }
      acc *= pow_p(p, -2 * L).get_d() / static_cast<double>(span * span);
      CHECK(std::abs(closed - acc) < 1e-10);
    }
  }
  for (long p : {3L, 5L}) {
    PAdicContext ctx(p);
    for (int trial = 0; trial < 20; ++trial) {
      Rational q = random_rational(rng, p, -3, 0);
      Rational b = random_rational(rng, p, -2, 1);
      Rational c = random_rational(rng, p, 0, 2);
      Complex closed = square_cell_integral(ctx, q, b, c, 1);
      CHECK(std::abs(closed - brute_square_cell(ctx, q, b, c, 1, 4)) < 1e-10);
    }
  }
}

TEST_CASE("mu operator: zero section, unit-shell section, Mellin mode") {
  for (long p : {3L, 5L}) {
    PAdicContext ctx(p);
    TruncationPolicy policy{30, 3};

    MuFiber zero{[](const Rational&) { return Complex(0, 0); }, 1, true, 0, true, 0};
    PvResult r0 = mu_operator(0.5, 1, 0.0, zero, Rational(1), ctx, policy);
    CHECK(r0.status == ShellStatus::ProvenVanishing);
    CHECK(std::abs(r0.value) == 0.0);

    // h = 1_{|t| = 1}: only the unit shell contributes; independent oracle by
    // direct representative sum mod p^2 with coset measure p^{-2}.
    MuFiber units{[p](const Rational& u) {
                    return valuation(u, p) == 0 ? Complex(1, 0) : Complex(0, 0);
                  },
                  1, true, 0, true, 1};
    PvResult r1 = mu_operator(0.7, 1, 0.25, units, Rational(1), ctx, policy);
    CHECK(r1.status == ShellStatus::ProvenVanishing);
    long span = p * p;
    Complex direct(0, 0);
    for (long c = 1; c < span; ++c)
      if (c % p != 0) direct += psi_eval(ctx, Rational(c));
    direct /= static_cast<double>(span);
    CHECK(std::abs(r1.value - direct) < 1e-12);
    CHECK(std::abs(r1.value - (1.0 - 1.0 / p)) < 1e-12);

    // Mellin compatibility: h = eta |.|^{s0} (windowed), lambda = 2, x a unit:
    // output = gamma(-s0, chi^lambda, psi) * h(x) with chi = eta |.|^{s0}.
    for (int eta_p : {1, -1}) {
      double s0 = 0.4;
      int lambda = 2;
      int W = 60;  // window wide enough that the cut Mellin tail is < 1e-8
      MuFiber mellin{[p, eta_p, s0](const Rational& u) -> Complex {
                       int v = valuation(u, p);
                       double etav = (eta_p == -1 && (v % 2 != 0)) ? -1.0 : 1.0;
                       return etav * std::pow(static_cast<double>(p), -v * s0);
                     },
                     1, true, W, false, 0};
      Rational x(2);
      if (p == 2) x = 3;
      TruncationPolicy wide{80, 3};
      PvResult rm = mu_operator(s0, lambda, 0.0, mellin, x, ctx, wide, 1e-11);
      CHECK(rm.status != ShellStatus::Truncated);
      // chi^lambda is the trivial-unit character |.|^{lambda s0} times
      // eta^lambda; gamma(-s0, chi^lambda) from the unramified closed form.
      double q = static_cast<double>(p);
      double el = (lambda % 2 == 0) ? 1.0 : static_cast<double>(eta_p);
      double expected = (1.0 - el * std::pow(q, -lambda * s0 + s0)) /
                        (1.0 - el * std::pow(q, lambda * s0 - s0 - 1.0));
      Complex hx = mellin.value(x);
      CHECK(std::abs(rm.value - expected * hx) < 1e-7);
    }
  }
}

TEST_CASE("mu operator annihilates its own Mellin pole mode") {
  // gamma(-s0, chi_{s0}) = (1 - q^0)/(1 - q^{-1}) = 0: the lambda = 1 operator
  // at parameter s0 kills the matching Mellin mode.
  PAdicContext ctx(3);
  TruncationPolicy policy{30, 3};
  double s0 = 0.3;
  MuFiber mellin{[&](const Rational& u) -> Complex {
                   int v = valuation(u, 3);
                   return std::pow(3.0, -v * s0);
                 },
                 1, true, 14, false, 0};
  PvResult rm = mu_operator(s0, 1, 0.0, mellin, Rational(1), ctx, policy, 1e-11);
  CHECK(rm.status != ShellStatus::Truncated);
  CHECK(std::abs(rm.value) < 1e-7);
}

TEST_CASE("weil representation: identity, relations, joint factors") {
  std::mt19937 rng(7010);
  PAdicContext ctx(3);
  std::array<QuadraticSpace, 3> spaces = {
      QuadraticSpace::hyperbolic(4), QuadraticSpace::hyperbolic(4),
      QuadraticSpace(GramPairing({{Rational(2), 0, 0, 0},
                                  {0, Rational(2), 0, 0},
                                  {0, 0, Rational(2), 0},
                                  {0, 0, 0, Rational(4)}}))};
  WeilRepContext wctx(spaces, ctx);

  auto random_state = [&]() {
    return WeilState{{random_function(rng, 3, 4, 1, 2, 0),
                      random_function(rng, 3, 4, 1, 2, 0),
                      random_function(rng, 3, 4, 1, 2, 0)},
                     Complex(1, 0)};
  };

  WeilState f = random_state();
  CHECK(weil_state_close(weil_rep_apply(wctx, {}, f), f, 1e-12));

  using K = WeilMove::Kind;
  const double tol = 1e-8;

  // Relation 1: w * w = m(-1), exercising gamma(Q)^2 = chi_Q(-1).
  for (int i = 0; i < 3; ++i) {
    std::vector<WeilMove> ww = {{K::Weyl, i, Rational(0)}, {K::Weyl, i, Rational(0)}};
    std::vector<WeilMove> mneg = {{K::Diag, i, Rational(-1)}};
    std::array<std::array<Rational, 4>, 3> expect;
    for (auto& e : expect) e = {Rational(1), 0, 0, Rational(1)};
    expect[i] = {Rational(-1), 0, 0, Rational(-1)};
    WeilState a = weil_rep_apply(wctx, ww, f, &expect);
    WeilState b = weil_rep_apply(wctx, mneg, f, &expect);
    CHECK(weil_state_close(a, b, tol));
  }

  // Relation 2: m(a) w = w m(1/a) with a of mixed valuation.
  for (const Rational& a : {Rational(3), Rational(2), Rational(2, 3)}) {
    for (int i = 0; i < 3; ++i) {
      std::vector<WeilMove> lhs = {{K::Diag, i, a}, {K::Weyl, i, Rational(0)}};
      std::vector<WeilMove> rhs = {{K::Weyl, i, Rational(0)}, {K::Diag, i, 1 / a}};
      auto Ml = weil_word_matrices(lhs), Mr = weil_word_matrices(rhs);
      for (int k = 0; k < 4; ++k) CHECK(Ml[i][k] == Mr[i][k]);
      CHECK(weil_state_close(weil_rep_apply(wctx, lhs, f),
                             weil_rep_apply(wctx, rhs, f), tol));
    }
  }

  // Relation 3: the lower-triangular element two ways,
  // l(c) = m(-1) w n(-c) w = n(1/c) m(-1/c) w n(1/c).
  for (const Rational& c : {Rational(1), Rational(3), Rational(2)}) {
    int i = 1;
    std::vector<WeilMove> lhs = {{K::Diag, i, Rational(-1)},
                                 {K::Weyl, i, Rational(0)},
                                 {K::Upper, i, -c},
                                 {K::Weyl, i, Rational(0)}};
    std::vector<WeilMove> rhs = {{K::Upper, i, 1 / c},
                                 {K::Diag, i, -1 / c},
                                 {K::Weyl, i, Rational(0)},
                                 {K::Upper, i, 1 / c}};
    auto Ml = weil_word_matrices(lhs), Mr = weil_word_matrices(rhs);
    for (int k = 0; k < 4; ++k) CHECK(Ml[i][k] == Mr[i][k]);
    CHECK(weil_state_close(weil_rep_apply(wctx, lhs, f),
                           weil_rep_apply(wctx, rhs, f), tol));
  }

  // rho(w)^2 f(xi) = chi_Q(-1) f(-xi) on the full triple (sign identity).
  std::vector<WeilMove> wall;
  for (int i = 0; i < 3; ++i) {
    wall.push_back({K::Weyl, i, Rational(0)});
    wall.push_back({K::Weyl, i, Rational(0)});
  }
  WeilState lhs = weil_rep_apply(wctx, wall, f);
  WeilState rhs = f;
  double sign = 1.0;
  for (int i = 0; i < 3; ++i) {
    rhs.blocks[i] = scale_argument(rhs.blocks[i], Rational(-1));
    sign *= chi_Q(spaces[i], Rational(-1), ctx);
  }
  rhs.scale *= sign;
  CHECK(weil_state_close(lhs, rhs, tol));

  // Factors commute: mixed word across blocks in either order.
  std::vector<WeilMove> ord1 = {{K::Weyl, 0, Rational(0)},
                                {K::Upper, 1, Rational(1, 3)},
                                {K::Diag, 2, Rational(2)}};
  std::vector<WeilMove> ord2 = {{K::Diag, 2, Rational(2)},
                                {K::Upper, 1, Rational(1, 3)},
                                {K::Weyl, 0, Rational(0)}};
  CHECK(weil_state_close(weil_rep_apply(wctx, ord1, f),
                         weil_rep_apply(wctx, ord2, f), tol));

  // Word validation: wrong target rejected.
  std::array<std::array<Rational, 4>, 3> wrong;
  for (auto& e : wrong) e = {Rational(1), 0, 0, Rational(1)};
  CHECK_THROWS_AS(weil_rep_apply(wctx, {{K::Weyl, 0, Rational(0)}}, f, &wrong),
                  std::invalid_argument);
}

namespace {

Rational unit_center(std::mt19937& rng, long p) {
  std::uniform_int_distribution<long> d(1, p * p - 1);
  long x = d(rng);
  while (x % p == 0) x = d(rng);
  return Rational(x);
}

// Unit cells guaranteed to meet the cone: the distinguished-coordinate center
// is solved from Q_6 = 0, and all marginals have constant unit valuation.
SBFunction random_cone_function(std::mt19937& rng, long p, int nterms) {
  SBFunction f(p, 6);
  std::uniform_int_distribution<int> coef(-16, 16);
  for (int t = 0; t < nterms; ++t) {
    std::vector<Rational> c(6);
    for (;;) {
      for (int i = 1; i <= 5; ++i) c[i] = unit_center(rng, p);
      c[0] = -(c[1] * c[4] + c[2] * c[3]) / c[5];
      if (val_or_inf(c[0], p) == 0) break;
    }
    int re = coef(rng), im = coef(rng);
    if (re == 0 && im == 0) re = 7;
    f.add_term(std::move(c), 1, Complex(re / 16.0, im / 16.0));
  }
  return f;
}

std::vector<Rational> random_cone_point(std::mt19937& rng, long p) {
  for (;;) {
    std::vector<Rational> v(6);
    for (int i = 1; i <= 5; ++i) v[i] = unit_center(rng, p);
    v[0] = -(v[1] * v[4] + v[2] * v[3]) / v[5];
    if (val_or_inf(v[0], p) == 0) return v;
  }
}

Rational j_pairing(const std::vector<Rational>& a, const std::vector<Rational>& b) {
  Rational s(0);
  for (int i = 0; i < 6; ++i) s += a[i] * b[5 - i];
  return s;
}

// Mutual transversality: the J-pairing is unit-valued across all support cell
// pairs, so both transforms terminate with proven tails.
bool transverse_pair(const SBFunction& f, const SBFunction& g, long p) {
  for (const auto& tf : f.terms())
    for (const auto& tg : g.terms())
      if (val_or_inf(j_pairing(tf.center, tg.center), p) != 0) return false;
  return true;
}

SBFunction conj_fn(const SBFunction& f) {
  SBFunction g(f.prime(), f.dim());
  for (const auto& t : f.terms()) g.add_term(t.center, t.level, std::conj(t.coeff));
  return g;
}

double cone_norm(const ConeContext& cctx, const SBFunction& f) {
  return std::sqrt(std::abs(cone_pair_integral(cctx, f, conj_fn(f)).real()));
}

// Brute-force cone transform: direct shell/grid sums at uniform resolution D
// over outer shells |m| <= M, sharing only the measure conventions.
Complex brute_cone(const ConeContext& cctx, const SBFunction& f,
                   const std::vector<Rational>& vp, int M, int Dt, int Dv) {
  const long p = cctx.ctx.p;
  const int n = cctx.n;
  Complex total(0.0, 0.0);
  long tspan = 1;
  for (int e = 0; e < Dt; ++e) tspan *= p;
  for (int m = -M; m <= M; ++m) {
    Complex shell(0.0, 0.0);
    for (long u = 1; u < tspan; ++u) {
      if (u % p == 0) continue;
      Rational t = Rational(u) * pow_p(p, m);
      // inner cone integral of f(v) psi(<v, t v'>) over the chart
      Complex inner(0.0, 0.0);
      for (const auto& term : f.terms()) {
        std::vector<int> tgt(n, Dv);
        std::vector<Rational> ctr = term.center;
        std::vector<int> lvl = term.level;
        // enumerate middle+conjugate coordinates, solve v_1 from the cone
        std::vector<Rational> mc(ctr.begin() + 1, ctr.end());
        std::vector<int> ml(lvl.begin() + 1, lvl.end());
        std::vector<int> mt(n - 1, Dv);
        long cells = 1;
        for (int j = 0; j < n - 1; ++j)
          for (int e = ml[j]; e < mt[j]; ++e) cells *= p;
        std::vector<long> idx(n - 1, 0);
        std::vector<long> cnt(n - 1, 1);
        for (int j = 0; j < n - 1; ++j)
          for (int e = ml[j]; e < mt[j]; ++e) cnt[j] *= p;
        for (long c = 0; c < cells; ++c) {
          long rem = c;
          std::vector<Rational> v(n);
          for (int j = 0; j < n - 1; ++j) {
            long k = rem % cnt[j];
            rem /= cnt[j];
            v[j + 1] = mc[j] + Rational(k) * pow_p(p, ml[j]);
          }
          Rational s = v[n - 1];
          Rational qt = v[1] * v[4] + v[2] * v[3];
          v[0] = -qt / s;
          if (val_or_inf(v[0] - term.center[0], p) < term.level[0]) continue;
          Rational phase(0);
          for (int j = 0; j < n; ++j) phase += v[j] * vp[n - 1 - j] * t;
          double meas = pow_p(p, valuation(s, p)).get_d();
          for (int j = 0; j < n - 1; ++j) meas *= pow_p(p, -mt[j]).get_d();
          inner += term.coeff * psi_eval(cctx.ctx, phase) * meas;
        }
      }
      shell += psi_eval(cctx.ctx, 1 / t) * inner;
    }
    total += shell * pow_p(p, -Dt).get_d() * pow_p(p, -m).get_d();
  }
  return total;
}

}  // namespace

TEST_CASE("cone form, validation, and trivial transform") {
  PAdicContext ctx(3);
  ConeContext cctx(6, ctx);
  std::vector<Rational> v = {Rational(2), Rational(1), Rational(1),
                             Rational(1), Rational(1), Rational(-1)};
  CHECK(cone_form(6, v) == 0);
  std::vector<Rational> off = v;
  off[2] = Rational(5);
  CHECK(cone_form(6, off) != 0);

  SBFunction zero(3, 6);
  ConeResult r = cone_transform(cctx, zero, v);
  CHECK(r.value == Complex(0.0, 0.0));
  CHECK(r.status == ShellStatus::ProvenVanishing);

  SBFunction f(3, 6);
  f.add_term(std::vector<Rational>(6, Rational(1)), 1, Complex(1.0, 0.0));
  CHECK_THROWS_AS(cone_transform(cctx, f, off), std::invalid_argument);
  CHECK_THROWS_AS(cone_transform(cctx, f, std::vector<Rational>(6, Rational(0))),
                  std::invalid_argument);
  CHECK_THROWS_AS(cone_transform(cctx, f, std::vector<Rational>(4, Rational(0))),
                  std::invalid_argument);

  // odd-n smoke: 5-dim split form with the half-square middle coordinate
  ConeContext c5(5, ctx);
  std::vector<Rational> v5 = {Rational(-3), Rational(1), Rational(2),
                              Rational(1), Rational(1)};
  CHECK(cone_form(5, v5) == 0);
  SBFunction f5(3, 5);
  // center solved from Q_5 = 0: v1 = -(v2 v4 + v3^2/2)/v5
  f5.add_term({Rational(-4), Rational(1), Rational(2), Rational(2), Rational(1)},
              1, Complex(1.0, 0.0));
  ConeResult r5 = cone_transform(c5, f5, v5);
  CHECK(r5.status != ShellStatus::Truncated);
  CHECK(std::isfinite(r5.value.real()));
}

TEST_CASE("cone transform matches brute-force shell sums") {
  std::mt19937 rng(9101);
  long p = 3;
  PAdicContext ctx(p);
  ConeContext cctx(6, ctx);
  for (int rep = 0; rep < 2; ++rep) {
    SBFunction f = random_cone_function(rng, p, 1 + rep);
    std::vector<Rational> vp = random_cone_point(rng, p);
    SBFunction probe(p, 6);
    probe.add_term(vp, 1, Complex(1.0, 0.0));
    if (!transverse_pair(f, probe, p)) {
      --rep;
      continue;
    }
    ConeResult r = cone_transform(cctx, f, vp);
    CHECK(r.status == ShellStatus::ProvenVanishing);
    Complex b = brute_cone(cctx, f, vp, 2, 2, 2);
    CHECK(std::abs(r.value - b) < 1e-9);
  }
}

TEST_CASE("cone transform equivariance under dilation") {
  std::mt19937 rng(9102);
  for (long p : {3L, 5L}) {
    PAdicContext ctx(p);
    ConeContext cctx(6, ctx);
    SBFunction f = random_cone_function(rng, p, 2);
    std::vector<Rational> vp = random_cone_point(rng, p);
    SBFunction probe(p, 6);
    probe.add_term(vp, 1, Complex(1.0, 0.0));
    if (!transverse_pair(f, probe, p)) {
      f = random_cone_function(rng, p, 1);
      if (!transverse_pair(f, probe, p)) continue;
    }
    std::vector<Rational> dilations = {Rational(2), Rational(1) / Rational(p),
                                       Rational(p)};
    for (const Rational& a : dilations) {
      SBFunction fa = scale_argument(f, a);
      std::vector<Rational> vpa(6);
      for (int i = 0; i < 6; ++i) vpa[i] = vp[i] / a;
      ConeResult lhs = cone_transform(cctx, fa, vp);
      ConeResult rhs = cone_transform(cctx, f, vpa);
      double fac = std::pow(static_cast<double>(p), 4.0 * valuation(a, p));
      CHECK(lhs.status != ShellStatus::Truncated);
      CHECK(rhs.status != ShellStatus::Truncated);
      CHECK(std::abs(lhs.value - fac * rhs.value) <
            1e-9 * (1.0 + std::abs(rhs.value)));
    }
  }
}

TEST_CASE("cone Plancherel symmetry on transverse pairs") {
  std::mt19937 rng(9103);
  for (long p : {3L, 5L}) {
    PAdicContext ctx(p);
    ConeContext cctx(6, ctx);
    int done = 0;
    while (done < 3) {
      SBFunction f1 = random_cone_function(rng, p, 2);
      SBFunction f2 = random_cone_function(rng, p, 2);
      if (!transverse_pair(f1, f2, p)) continue;
      ShellStatus worst = ShellStatus::ProvenVanishing;
      auto bump = [&](ShellStatus s) {
        if (static_cast<int>(s) > static_cast<int>(worst)) worst = s;
      };
      auto Ff1 = [&](const std::vector<Rational>& v) {
        ConeResult r = cone_transform(cctx, f1, v);
        bump(r.status);
        return r.value;
      };
      auto Ff2 = [&](const std::vector<Rational>& v) {
        ConeResult r = cone_transform(cctx, f2, v);
        bump(r.status);
        return r.value;
      };
      Complex lhs = cone_pair_integral(cctx, f2, Ff1, 1);
      Complex rhs = cone_pair_integral(cctx, f1, Ff2, 1);
      CHECK(worst != ShellStatus::Truncated);
      double scale = cone_norm(cctx, f1) * cone_norm(cctx, f2);
      CHECK(scale > 0.0);
      CHECK(std::abs(lhs - rhs) < 1e-6 * scale);
      ++done;
    }
  }
}

TEST_CASE("cone chart degenerate marginals are reported") {
  PAdicContext ctx(3);
  ConeContext cctx(6, ctx);
  std::mt19937 rng(9104);
  std::vector<Rational> vp = random_cone_point(rng, 3);

  // conjugate-coordinate marginal meets 0: tail dropped, status Truncated
  SBFunction f(3, 6);
  f.add_term({Rational(1), Rational(1), Rational(1), Rational(1), Rational(2),
              Rational(0)},
             1, Complex(1.0, 0.0));
  ConeResult r = cone_transform(cctx, f, vp);
  CHECK(r.status == ShellStatus::Truncated);

  // distinguished-coordinate ball cell stays exact
  SBFunction g(3, 6);
  g.add_term({Rational(0), Rational(1), Rational(1), Rational(1), Rational(2),
              Rational(1)},
             1, Complex(1.0, 0.0));
  ConeResult rg = cone_transform(cctx, g, vp);
  CHECK(rg.status != ShellStatus::Truncated);
}

TEST_CASE("cone double transform: empirical involution record") {
  // The exact relation between F_C^2 and the identity (possible reflection /
  // normalization from the w0 convention) is recorded, not asserted: we build
  // a coarse grid restriction of F_C(f) on the unit chart box and apply F_C
  // again at sample points of supp f.
  long p = 3;
  PAdicContext ctx(p);
  ConeContext cctx(6, ctx);
  std::mt19937 rng(9105);
  SBFunction f = random_cone_function(rng, p, 1);

  // sample points of supp f first, so the grid can be kept mutually transverse
  const auto& t0 = f.terms()[0];
  std::vector<std::vector<Rational>> samples;
  for (long d = 0; d < p && samples.size() < 3; ++d) {
    std::vector<Rational> v = t0.center;
    v[1] += Rational(3 * d);
    v[0] = -(v[1] * v[4] + v[2] * v[3]) / v[5];
    if (val_or_inf(v[0] - t0.center[0], p) < t0.level[0]) continue;
    samples.push_back(v);
  }

  SBFunction g(p, 6);
  ShellStatus worst = ShellStatus::ProvenVanishing;
  for (long m1 = 0; m1 < p; ++m1)
    for (long m2 = 0; m2 < p; ++m2)
      for (long m3 = 0; m3 < p; ++m3)
        for (long m4 = 0; m4 < p; ++m4)
          for (long s = 1; s < p; ++s) {
            std::vector<Rational> v = {Rational(0), Rational(m1), Rational(m2),
                                       Rational(m3), Rational(m4), Rational(s)};
            v[0] = -(v[1] * v[4] + v[2] * v[3]) / v[5];
            // coarse record: keep only grid cells transverse to supp f and to
            // the sample points (the fast proven-tail regime)
            if (val_or_inf(j_pairing(t0.center, v), p) != 0) continue;
            bool ok = true;
            for (const auto& sp : samples)
              ok = ok && val_or_inf(j_pairing(sp, v), p) == 0;
            if (!ok) continue;
            ConeResult r = cone_transform(cctx, f, v);
            if (static_cast<int>(r.status) > static_cast<int>(worst))
              worst = r.status;
            if (std::abs(r.value) > 1e-14) g.add_term(v, 1, r.value);
          }
  CHECK(worst != ShellStatus::Truncated);

  double max_ratio = 0.0, min_ratio = 1e300;
  int sampled = 0;
  for (const auto& v : samples) {
    ConeResult rr = cone_transform(cctx, g, v);
    CHECK(std::isfinite(rr.value.real()));
    CHECK(std::isfinite(rr.value.imag()));
    double ratio = std::abs(rr.value / t0.coeff);
    max_ratio = std::max(max_ratio, ratio);
    min_ratio = std::min(min_ratio, ratio);
    ++sampled;
  }
  CHECK(sampled > 0);
  MESSAGE("cone double-transform |F_C^2 f / f| over ", sampled,
          " points: [", min_ratio, ", ", max_ratio, "] (recorded, coarse grid)");
}

// ------------------------------------------------------------------ Y transform

namespace bk {
namespace detail {
double y_w_fast(long p, int c0, int m, const std::array<int, 3>& k);
double y_e2_level_measure(long p, int T, int k1, int k2, int k3);
Complex y_eval_config(const YContext& yc, const YProduct& f,
                      const std::vector<Rational>& xi, int m,
                      const std::array<int, 3>& k, bool force_honest);
}  // namespace detail
}  // namespace bk

namespace {

// Lebesgue measure over (Z_p^x)^2 of val(e2(b1 p^k1, b2 p^k2, p^k3)) >= T by
// direct residue counting at a modulus past all valuation crossings.
double brute_e2_measure(long p, int T, int k1, int k2, int k3) {
  int minS = std::min({k1 + k2, k1 + k3, k2 + k3});
  int B = std::max(0, -minS) + 2;
  long M = 1;
  for (int e = 0; e < std::max(1, T + B); ++e) M *= p;
  // e2 * p^{-minS} is an integer polynomial in (b1, b2); val >= T iff it
  // vanishes mod p^{T - minS}.
  auto ipow = [&](int e) {
    long long r = 1;
    for (int i = 0; i < e; ++i) r *= p;
    return r;
  };
  const long long P12 = ipow(k1 + k2 - minS), P13 = ipow(k1 + k3 - minS),
                  P23 = ipow(k2 + k3 - minS);
  const long long mod = (T - minS > 0) ? ipow(T - minS) : 1;
  long count = 0;
  for (long b1 = 1; b1 < M; ++b1) {
    if (b1 % p == 0) continue;
    for (long b2 = 1; b2 < M; ++b2) {
      if (b2 % p == 0) continue;
      __int128 n = static_cast<__int128>(b1) * b2 * P12 +
                   static_cast<__int128>(b1) * P13 +
                   static_cast<__int128>(b2) * P23;
      if (n % mod == 0) ++count;
    }
  }
  return static_cast<double>(count) / (static_cast<double>(M) * M);
}

Complex brute_zmass(const PAdicContext& ctx, int m, const Rational& r) {
  Rational q = -r * pow_p(ctx.p, 2 * m);
  return square_cell_integral(ctx, q, Rational(0), Rational(0), 0) -
         square_cell_integral(ctx, q, Rational(0), Rational(0), 1);
}

// W(m, k) by honest triple-unit-shell integration at resolution E.
double brute_w(long p, int c0, int m, const std::array<int, 3>& k, int E) {
  PAdicContext ctx(p, c0);
  long P = 1;
  for (int e = 0; e < E; ++e) P *= p;
  std::map<Rational, Complex> cache;
  Complex acc(0.0, 0.0);
  for (long r0 = 1; r0 < P; ++r0) {
    if (r0 % p == 0) continue;
    Rational a0 = Rational(r0) * pow_p(p, k[0]);
    for (long r1 = 1; r1 < P; ++r1) {
      if (r1 % p == 0) continue;
      Rational a1 = Rational(r1) * pow_p(p, k[1]);
      for (long r2 = 1; r2 < P; ++r2) {
        if (r2 % p == 0) continue;
        Rational a2 = Rational(r2) * pow_p(p, k[2]);
        Rational e2 = a0 * a1 + a1 * a2 + a2 * a0;
        Rational rr = (e2 == 0) ? Rational(0) : e2 * e2 / (a0 * a1 * a2);
        // zmass only sees rr through psi(rr p^{2m} u^2): key on that residue
        Rational key = canonical_mod(rr, p, c0 - 2 * m);
        auto it = cache.find(key);
        if (it == cache.end())
          it = cache.emplace(key, brute_zmass(ctx, m, rr)).first;
        acc += it->second;
      }
    }
  }
  Complex w = acc * std::pow(static_cast<double>(P), -3.0);
  CHECK(std::abs(w.imag()) < 1e-10);
  return w.real();
}

}  // namespace

TEST_CASE("y e2 level-set measures match residue counting") {
  for (long p : {3L, 5L}) {
    std::array<std::array<int, 3>, 6> ks = {{{0, 0, 0},
                                             {1, 0, 0},
                                             {0, 1, 0},
                                             {0, 0, -1},
                                             {-1, 0, 0},
                                             {0, -1, -1}}};
    for (const auto& k : ks)
      for (int T = -2; T <= 2; ++T) {
        double got = bk::detail::y_e2_level_measure(p, T, k[0], k[1], k[2]);
        double want = brute_e2_measure(p, T, k[0], k[1], k[2]);
        CHECK(std::abs(got - want) < 1e-12);
      }
  }
}

TEST_CASE("y W closed form matches brute unit-shell integration") {
  // hand-checked value at p = 3: W(-1, 0) = (2/3)^2 * 1/9
  CHECK(std::abs(bk::detail::y_w_fast(3, 0, -1, {0, 0, 0}) - 4.0 / 81.0) < 1e-14);
  struct Case {
    int m;
    std::array<int, 3> k;
    int E;
  };
  std::vector<Case> cases = {{-1, {0, 0, 0}, 2}, {-1, {1, 0, 0}, 3},
                             {-1, {1, 1, 0}, 2}, {-1, {0, 0, -1}, 3},
                             {-2, {0, 0, 0}, 4}, {-2, {0, -1, -1}, 4}};
  for (const auto& c : cases) {
    double got = bk::detail::y_w_fast(3, 0, c.m, c.k);
    double want = brute_w(3, 0, c.m, c.k, c.E);
    CAPTURE(c.m);
    CAPTURE(c.k[0]);
    CAPTURE(c.k[1]);
    CAPTURE(c.k[2]);
    CHECK(std::abs(got - want) < 1e-10);
  }
}

namespace {

// independent block-by-block enumeration of the level-set pairing estimator
Complex brute_y_pair(const YContext& yc, const YProduct& f, const YProduct& g,
                     int Lb) {
  const long p = yc.ctx.p;
  const int N = yc.refinement;
  std::array<std::map<Rational, Complex>, 3> U;
  long side = 1;
  for (int e = 0; e < Lb; ++e) side *= p;
  for (int i = 0; i < 3; ++i) {
    const int d = yc.spaces[i].dim();
    long total = 1;
    for (int j = 0; j < d; ++j) total *= side;
    const double vol = std::pow(static_cast<double>(p), -d * Lb);
    for (long it = 0; it < total; ++it) {
      std::vector<Rational> c(d);
      long rem = it;
      for (int j = 0; j < d; ++j) {
        c[j] = Rational(rem % side);
        rem /= side;
      }
      Complex w = f[i].value_at(c) * g[i].value_at(c);
      if (w == Complex(0.0, 0.0)) continue;
      U[i][canonical_mod(yc.spaces[i].gram().quad(c), p, N)] += w * vol;
    }
  }
  Complex s(0.0, 0.0);
  for (const auto& [key, u0] : U[0]) {
    auto i1 = U[1].find(key);
    auto i2 = U[2].find(key);
    if (i1 != U[1].end() && i2 != U[2].end()) s += u0 * i1->second * i2->second;
  }
  return s * std::pow(static_cast<double>(p), 2 * N);
}

YContext make_yctx_j4(long p) {
  std::array<QuadraticSpace, 3> sp = {QuadraticSpace::hyperbolic(4),
                                      QuadraticSpace::hyperbolic(4),
                                      QuadraticSpace::hyperbolic(4)};
  return YContext(std::move(sp), PAdicContext(p, 0));
}

}  // namespace

TEST_CASE("y_point_value and transform guards") {
  YContext yc = make_yctx_j4(3);
  std::vector<Rational> xi = {1, 0, 0, 1, 2, 0, 0, 2,  // Q = 1, Q = 4
                              0, 0, 0, 0};
  CHECK_THROWS_AS(y_point_value(yc, xi), std::invalid_argument);  // off Y
  std::vector<Rational> on = {1, 0, 0, 1, 2, 0, 0, Rational(1, 2),
                              1, 1, 0, 0};  // all Q = 1... last is 0
  on[8] = 1; on[9] = 0; on[10] = 0; on[11] = 1;
  CHECK(y_point_value(yc, on) == Rational(1));
  std::vector<Rational> iso(12, Rational(0));
  CHECK(y_point_value(yc, iso) == Rational(0));

  SBFunction one(3, 4);
  one.add_term({Rational(1), Rational(0), Rational(0), Rational(1)}, 1,
               Complex(1.0, 0.0));
  YProduct f = {one, one, one};
  CHECK_THROWS_AS(y_transform(yc, f, iso), std::invalid_argument);  // isotropic
  YContext yc2 = make_yctx_j4(2);
  CHECK_THROWS_AS(y_transform(yc2, f, on), std::invalid_argument);  // p = 2
  YContext ycr = make_yctx_j4(3);
  ycr.ctx = PAdicContext(3, 1);
  CHECK_THROWS(y_transform(ycr, f, on));  // ramified psi
  YProduct empty = {SBFunction(3, 4), SBFunction(3, 4), SBFunction(3, 4)};
  YResult r0 = y_transform(yc, empty, on);
  CHECK(r0.value == Complex(0.0, 0.0));
  CHECK(r0.report.z_status == ShellStatus::ProvenVanishing);
}

TEST_CASE("y_pair_integral matches pointwise enumeration") {
  std::mt19937 rng(9101);
  YContext yc = make_yctx_j4(3);
  for (int trial = 0; trial < 3; ++trial) {
    YProduct f = {random_function(rng, 3, 4, 1, 3, 0),
                  random_function(rng, 3, 4, 1, 3, 0),
                  random_function(rng, 3, 4, 1, 3, 0)};
    YProduct g = {random_function(rng, 3, 4, 1, 3, 0),
                  random_function(rng, 3, 4, 1, 3, 0),
                  random_function(rng, 3, 4, 1, 3, 0)};
    Complex got = y_pair_integral(yc, f, g);
    Complex want = brute_y_pair(yc, f, g, 1);
    CAPTURE(trial);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("y_transform kernel symmetry (Plancherel pairing on Y)") {
  YContext yc = make_yctx_j4(3);
  auto cell = [](std::vector<Rational> c) {
    SBFunction f(3, 4);
    f.add_term(std::move(c), 1, Complex(1.0, 0.0));
    return f;
  };
  // single unit cells per block, all with Q = 1 mod 3 (so the tensors meet Y)
  YProduct f = {cell({1, 0, 0, 1}), cell({2, 0, 0, 2}), cell({1, 1, 0, 1})};
  YProduct g = {cell({1, 0, 1, 1}), cell({2, 1, 0, 2}), cell({1, 2, 0, 1})};
  // on-Y representatives of the cells (exact: Q = 1)
  std::vector<Rational> rep_f = {1, 0, 0, 1, Rational(1, 2), 0, 0, 2,
                                 1, 1, 0, 1};
  std::vector<Rational> rep_g = {1, 0, 1, 1, Rational(1, 2), 1, 0, 2,
                                 1, 2, 0, 1};
  CHECK(y_point_value(yc, rep_f) == Rational(1));
  CHECK(y_point_value(yc, rep_g) == Rational(1));

  auto t0 = std::chrono::steady_clock::now();
  YResult lhs = y_transform(yc, f, rep_g);
  auto t1 = std::chrono::steady_clock::now();
  YResult rhs = y_transform(yc, g, rep_f);
  auto t2 = std::chrono::steady_clock::now();
  MESSAGE("F_Y(f)(rep_g) = ", lhs.value.real(), " + ", lhs.value.imag(),
          "i  [shells ", lhs.report.z_shells, ", configs ", lhs.report.configs,
          ", status ", static_cast<int>(lhs.report.z_status), ", a_trunc ",
          lhs.report.a_truncated, ", ",
          std::chrono::duration<double>(t1 - t0).count(), " s]");
  MESSAGE("F_Y(g)(rep_f) = ", rhs.value.real(), " + ", rhs.value.imag(),
          "i  [shells ", rhs.report.z_shells, ", configs ", rhs.report.configs,
          ", status ", static_cast<int>(rhs.report.z_status), ", a_trunc ",
          rhs.report.a_truncated, ", ",
          std::chrono::duration<double>(t2 - t1).count(), " s]");
  CHECK(!lhs.report.any_truncated());
  CHECK(!rhs.report.any_truncated());
  const double scale = std::max({std::abs(lhs.value), std::abs(rhs.value), 1e-12});
  CHECK(std::abs(lhs.value - rhs.value) / scale < 1e-2);
}

TEST_CASE("y shell configurations: reduced path matches representative loops") {
  YContext yc = make_yctx_j4(3);
  auto cell = [](std::vector<Rational> c) {
    SBFunction f(3, 4);
    f.add_term(std::move(c), 1, Complex(1.0, 0.0));
    return f;
  };
  YProduct f = {cell({1, 0, 0, 1}), cell({2, 0, 0, 2}), cell({1, 1, 0, 1})};
  std::vector<Rational> xi = {1, 0, 1, 1, Rational(1, 2), 1, 0, 2,
                              1, 2, 0, 1};
  // (m, k) pairs exercising every reduced regime (closed form, Gauss-mass
  // digits, positive-shell Kloosterman) at cost where the direct loops still
  // fit the budget.
  const std::vector<std::pair<int, std::array<int, 3>>> cases = {
      {0, {0, 0, 0}},   {-1, {0, 0, 0}},  {-1, {1, 0, 0}},
      {-1, {-2, 1, 1}}, {-1, {1, -2, 1}}, {0, {1, 1, 0}},
      {-2, {1, 1, 1}},  {-1, {2, 0, 0}},  {1, {1, -2, -2}},
      {1, {-1, -1, 0}}, {2, {0, 0, -2}}};
  double biggest = 0.0;
  for (const auto& [m, k] : cases) {
    const Complex fast = detail::y_eval_config(yc, f, xi, m, k, false);
    const Complex slow = detail::y_eval_config(yc, f, xi, m, k, true);
    CAPTURE(m);
    CAPTURE(k[0]);
    CAPTURE(k[1]);
    CAPTURE(k[2]);
    CHECK(std::abs(fast - slow) <=
          1e-9 * std::max(1.0, std::max(std::abs(fast), std::abs(slow))));
    biggest = std::max(biggest, std::abs(fast));
  }
  CHECK(biggest > 1e-12);  // the comparison saw genuinely nonzero values
}
