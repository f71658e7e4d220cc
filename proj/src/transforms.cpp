#include "bk/transforms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <map>
#include <stdexcept>

namespace bk {

namespace {

void require_unramified_psi(const PAdicContext& ctx, const char* where) {
  if (ctx.psi_conductor != 0)
    throw std::invalid_argument(std::string(where) +
                                ": requires unramified psi (conductor 0)");
}

long checked_budget(long count, long factor, long budget, const char* where) {
  if (factor <= 0 || count > budget / factor)
    throw std::runtime_error(std::string(where) + ": cell budget exhausted");
  return count * factor;
}

// Enumerates the refinement of term cell (center, level) to target levels,
// invoking emit(center) for each subcell center.
void for_each_subcell(long p, const std::vector<Rational>& center,
                      const std::vector<int>& level,
                      const std::vector<int>& target,
                      const std::function<void(const std::vector<Rational>&)>& emit) {
  int n = static_cast<int>(center.size());
  std::vector<long> counts(n, 1);
  long total = 1;
  for (int j = 0; j < n; ++j) {
    for (int e = level[j]; e < target[j]; ++e) counts[j] *= p;
    total *= counts[j];
  }
  std::vector<Rational> c(center);
  std::vector<long> idx(n, 0);
  for (long it = 0; it < total; ++it) {
    long rem = it;
    for (int j = 0; j < n; ++j) {
      idx[j] = rem % counts[j];
      rem /= counts[j];
      c[j] = center[j] + Rational(idx[j]) * pow_p(p, level[j]);
    }
    emit(c);
  }
}

int valp_long(long x, long p) {
  int v = 0;
  while (x % p == 0) {
    x /= p;
    ++v;
  }
  return v;
}

Rational rational_pow_int(const Rational& x, int e) {
  Rational r(1);
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

}  // namespace

// --------------------------------------------------------- phase multipliers

SBFunction multiply_linear_phase(const SBFunction& f,
                                 const std::vector<Rational>& ell,
                                 const PAdicContext& ctx, long cell_budget) {
  if (static_cast<int>(ell.size()) != f.dim())
    throw std::invalid_argument("multiply_linear_phase: dimension mismatch");
  const long p = f.prime();
  SBFunction out(p, f.dim());
  long used = 0;
  for (const SBTerm& t : f.terms()) {
    std::vector<int> target(t.level);
    long cells = 1;
    for (int j = 0; j < f.dim(); ++j) {
      if (ell[j] != 0)
        target[j] = std::max(t.level[j],
                             static_cast<int>(ctx.psi_conductor) - valuation(ell[j], p));
      for (int e = t.level[j]; e < target[j]; ++e) cells *= p;
    }
    used += checked_budget(cells, 1, cell_budget - used, "multiply_linear_phase");
    for_each_subcell(p, t.center, t.level, target,
                     [&](const std::vector<Rational>& c) {
                       Rational phase(0);
                       for (int j = 0; j < f.dim(); ++j) phase += ell[j] * c[j];
                       out.add_term(c, target, t.coeff * psi_eval(ctx, phase));
                     });
  }
  out.merge_duplicates();
  return out;
}

SBFunction multiply_quadratic_phase(const SBFunction& f, const GramPairing& S,
                                    const Rational& scale,
                                    const PAdicContext& ctx,
                                    const std::vector<int>& coords,
                                    long cell_budget) {
  if (scale == 0) return f;
  std::vector<int> block(coords);
  if (block.empty())
    for (int j = 0; j < f.dim(); ++j) block.push_back(j);
  const int nb = static_cast<int>(block.size());
  if (S.dim() != nb)
    throw std::invalid_argument("multiply_quadratic_phase: Gram/coords mismatch");
  const long p = f.prime();
  const int c0 = static_cast<int>(ctx.psi_conductor);
  const int vs = valuation(scale, p);
  const int v2 = valp_long(2, p);
  int vSmin = kValInfinity;
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < nb; ++b)
      if (S.matrix()[a][b] != 0)
        vSmin = std::min(vSmin, valuation(S.matrix()[a][b], p));

  SBFunction out(p, f.dim());
  long used = 0;
  for (const SBTerm& t : f.terms()) {
    // Conservative lower bound for val((S x_block)_a) over the cell.
    std::vector<Rational> cb(nb);
    for (int a = 0; a < nb; ++a) cb[a] = t.center[block[a]];
    std::vector<Rational> Sc = S.apply(cb);
    int L = 0;
    for (int a = 0; a < nb; ++a) {
      int vrow = val_or_inf(Sc[a], p);
      for (int b = 0; b < nb; ++b)
        if (S.matrix()[a][b] != 0)
          vrow = std::min(vrow, valuation(S.matrix()[a][b], p) + t.level[block[b]]);
      if (vrow < kValInfinity) L = std::max(L, c0 - vs - vrow);
    }
    if (vSmin < kValInfinity) {
      int twoL = c0 + v2 - vs - vSmin;
      L = std::max(L, (twoL + 1) / 2);
    }
    std::vector<int> target(t.level);
    long cells = 1;
    for (int a = 0; a < nb; ++a) {
      int j = block[a];
      target[j] = std::max(t.level[j], L);
      for (int e = t.level[j]; e < target[j]; ++e) cells *= p;
    }
    used += checked_budget(cells, 1, cell_budget - used, "multiply_quadratic_phase");
    for_each_subcell(p, t.center, t.level, target,
                     [&](const std::vector<Rational>& c) {
                       std::vector<Rational> xb(nb);
                       for (int a = 0; a < nb; ++a) xb[a] = c[block[a]];
                       out.add_term(c, target,
                                    t.coeff * psi_eval(ctx, scale * S.quad(xb)));
                     });
  }
  out.merge_duplicates();
  return out;
}

SBFunction scale_argument(const SBFunction& f, const Rational& a) {
  if (a == 0) throw std::invalid_argument("scale_argument: a = 0");
  const long p = f.prime();
  const int va = valuation(a, p);
  SBFunction out(p, f.dim());
  for (const SBTerm& t : f.terms()) {
    std::vector<Rational> c(t.center);
    std::vector<int> lv(t.level);
    for (int j = 0; j < f.dim(); ++j) {
      c[j] /= a;
      lv[j] -= va;
    }
    out.add_term(c, lv, t.coeff);
  }
  return out;
}

// ------------------------------------------------- exact oscillatory kernels

Complex hyperbolic_pair_integral(const PAdicContext& ctx, const Rational& A,
                                 const Rational& B, const Rational& C) {
  require_unramified_psi(ctx, "hyperbolic_pair_integral");
  const long p = ctx.p;
  if (val_or_inf(C, p) >= 0) {
    return (val_or_inf(A, p) >= 0 && val_or_inf(B, p) >= 0) ? Complex(1.0, 0.0)
                                                            : Complex(0.0, 0.0);
  }
  const int e = -valuation(C, p);  // > 0
  Rational Y0 = -A / C;
  if (val_or_inf(Y0, p) < 0) return {0.0, 0.0};
  if (val_or_inf(B, p) < -e) return {0.0, 0.0};
  return std::pow(static_cast<double>(p), -e) * psi_eval(ctx, B * Y0);
}

Complex hyperbolic_cell_integral(const PAdicContext& ctx, const Rational& alpha,
                                 const Rational& bx, const Rational& by,
                                 const Rational& cx, const Rational& cy, int L) {
  const Rational pL = pow_p(ctx.p, L);
  Complex outer = psi_eval(ctx, alpha * cx * cy + bx * cx + by * cy);
  Complex inner = hyperbolic_pair_integral(ctx, pL * (alpha * cy + bx),
                                           pL * (alpha * cx + by),
                                           pL * pL * alpha);
  return std::pow(static_cast<double>(ctx.p), -2.0 * L) * outer * inner;
}

namespace {

// integral_{Z_p} psi(B x^2) dx for val(B) < 0, odd p (classical Gauss sums).
Complex gauss_square_unit_ball(const PAdicContext& ctx, const Rational& B) {
  const long p = ctx.p;
  const int M = -valuation(B, p);
  if (M % 2 == 0) return {std::pow(static_cast<double>(p), -M / 2.0), 0.0};
  double mag = std::pow(static_cast<double>(p), -(M + 1) / 2.0) *
               std::sqrt(static_cast<double>(p));
  int leg = legendre_unit(unit_part(B, p), p);
  Complex eps = (p % 4 == 1) ? Complex(1.0, 0.0) : Complex(0.0, 1.0);
  return mag * static_cast<double>(leg) * eps;
}

// integral_{Z_p} psi(B x^2 + A x) dx, odd p.
Complex gauss_affine_unit_ball(const PAdicContext& ctx, const Rational& A,
                               const Rational& B) {
  const long p = ctx.p;
  if (val_or_inf(B, p) >= 0)
    return val_or_inf(A, p) >= 0 ? Complex(1.0, 0.0) : Complex(0.0, 0.0);
  if (val_or_inf(A, p) < valuation(B, p)) return {0.0, 0.0};
  // Complete the square: shift -A/(2B) lies in Z_p.
  return psi_eval(ctx, -A * A / (4 * B)) * gauss_square_unit_ball(ctx, B);
}

}  // namespace

Complex square_cell_integral(const PAdicContext& ctx, const Rational& q,
                             const Rational& b, const Rational& c, int L) {
  require_unramified_psi(ctx, "square_cell_integral");
  if (ctx.p == 2)
    throw std::invalid_argument("square_cell_integral: odd p only");
  const Rational pL = pow_p(ctx.p, L);
  Complex outer = psi_eval(ctx, q * c * c + b * c);
  Complex inner = gauss_affine_unit_ball(ctx, pL * (2 * q * c + b), pL * pL * q);
  return std::pow(static_cast<double>(ctx.p), -static_cast<double>(L)) * outer *
         inner;
}

// ----------------------------------------------------------------- mu operator

PvResult mu_operator(double s, int lambda, double delta_exp, const MuFiber& h,
                     const Rational& x, const PAdicContext& ctx,
                     const TruncationPolicy& policy, double tol) {
  if (lambda <= 0) throw std::invalid_argument("mu_operator: lambda must be > 0");
  if (x == 0) throw std::invalid_argument("mu_operator: x = 0 fiber point");
  const long p = ctx.p;
  const int c0 = static_cast<int>(ctx.psi_conductor);
  const int vx = valuation(x, p);
  const int vlam = valp_long(lambda, p);
  const double E = s + 1.0 + delta_exp;

  // Shell mass of psi(t) under d^x t / zeta(1) (coset measure p^{-R}):
  // 1 - 1/p for m >= c0, -1/p at c0 - 1, exactly 0 below.
  auto psi_shell_mass = [&](int m) -> double {
    if (m >= c0) return 1.0 - 1.0 / static_cast<double>(p);
    if (m == c0 - 1) return -1.0 / static_cast<double>(p);
    return 0.0;
  };

  int pos_next = 0, neg_next = -1;
  bool pos_done = false, neg_done = false, take_pos = true;

  auto eval_shell = [&](int m, bool positive) -> ShellTerm {
    const int vu = vx - lambda * m;
    // Support exhausted on this multiplicative shell.
    if (h.compact && vu < -h.support_exp) {
      if (positive) pos_done = true;  // |u| only grows with later positive m
      return {Complex(0.0, 0.0), true, pos_done && neg_done};
    }
    if (h.constant_small && vu >= h.small_exp) {
      Complex h0 = h.value(pow_p(p, vu));
      double mass = psi_shell_mass(m);
      if (!positive && m <= c0 - 2) neg_done = true;  // Ramanujan tail
      Complex v = h0 * mass * std::pow(static_cast<double>(p), -m * E);
      return {v, mass == 0.0 || h0 == Complex(0.0, 0.0), pos_done && neg_done};
    }
    // h is constant on unit cosets mod p^j; below m = c0 - j the remaining
    // character sum over each coset vanishes identically.
    const int j = std::max(1, h.mult_level - vlam);
    if (m < c0 - j) {
      if (!positive) neg_done = true;
      return {Complex(0.0, 0.0), true, pos_done && neg_done};
    }
    const int R = std::max(j, c0 - m);
    long span = 1;
    for (int e = 0; e < R; ++e) span *= p;
    Complex acc(0.0, 0.0);
    const Rational pm = pow_p(p, m);
    for (long c = 1; c < span; ++c) {
      if (c % p == 0) continue;
      Rational t = Rational(c) * pm;
      Rational u = x / rational_pow_int(t, lambda);
      acc += psi_eval(ctx, t) * h.value(u);
    }
    Complex v = acc * std::pow(static_cast<double>(p), -R) *
                std::pow(static_cast<double>(p), -m * E);
    return {v, false, false};
  };

  auto shell = [&](int) -> ShellTerm {
    if (pos_done && neg_done)
      return {Complex(0.0, 0.0), true, true};
    bool positive;
    if (pos_done)
      positive = false;
    else if (neg_done)
      positive = true;
    else {
      positive = take_pos;
      take_pos = !take_pos;
    }
    int m = positive ? pos_next++ : neg_next--;
    return eval_shell(m, positive);
  };

  return pv_integral(shell, policy, tol);
}

// --------------------------------------------------------- Weil representation

std::array<std::array<Rational, 4>, 3> weil_word_matrices(
    const std::vector<WeilMove>& word) {
  std::array<std::array<Rational, 4>, 3> M;
  for (auto& m : M) m = {Rational(1), Rational(0), Rational(0), Rational(1)};
  for (const WeilMove& mv : word) {
    if (mv.factor < 0 || mv.factor > 2)
      throw std::invalid_argument("weil_word_matrices: factor out of range");
    std::array<Rational, 4> g;
    switch (mv.kind) {
      case WeilMove::Kind::Upper:
        g = {Rational(1), mv.param, Rational(0), Rational(1)};
        break;
      case WeilMove::Kind::Diag:
        if (mv.param == 0)
          throw std::invalid_argument("weil_word_matrices: m(0) is singular");
        g = {mv.param, Rational(0), Rational(0), Rational(1) / mv.param};
        break;
      case WeilMove::Kind::Weyl:
        g = {Rational(0), Rational(1), Rational(-1), Rational(0)};
        break;
    }
    std::array<Rational, 4>& M0 = M[mv.factor];
    M0 = {M0[0] * g[0] + M0[1] * g[2], M0[0] * g[1] + M0[1] * g[3],
          M0[2] * g[0] + M0[3] * g[2], M0[2] * g[1] + M0[3] * g[3]};
  }
  return M;
}

WeilState weil_rep_apply(const WeilRepContext& ctx,
                         const std::vector<WeilMove>& word, const WeilState& f,
                         const std::array<std::array<Rational, 4>, 3>* expected) {
  if (expected) {
    auto M = weil_word_matrices(word);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 4; ++k)
        if (M[i][k] != (*expected)[i][k])
          throw std::invalid_argument(
              "weil_rep_apply: word does not multiply to the requested element");
  }
  WeilState st = f;
  const long p = ctx.ctx.p;
  for (auto it = word.rbegin(); it != word.rend(); ++it) {
    const WeilMove& mv = *it;
    const QuadraticSpace& sp = ctx.spaces[mv.factor];
    SBFunction& blk = st.blocks[mv.factor];
    switch (mv.kind) {
      case WeilMove::Kind::Upper:
        blk = multiply_quadratic_phase(blk, sp.gram(), mv.param, ctx.ctx, {},
                                       ctx.cell_budget);
        break;
      case WeilMove::Kind::Diag: {
        if (mv.param == 0)
          throw std::invalid_argument("weil_rep_apply: m(0) is singular");
        blk = scale_argument(blk, mv.param);
        double mag = std::pow(static_cast<double>(p),
                              -valuation(mv.param, p) * sp.dim() / 2.0);
        st.scale *= static_cast<double>(chi_Q(sp, mv.param, ctx.ctx)) * mag;
        break;
      }
      case WeilMove::Kind::Weyl:
        blk = fourier_transform(blk, sp.gram(), ctx.ctx, {}, false,
                                ctx.cell_budget);
        st.scale *= weil_index_form(sp, Rational(1), ctx.ctx);
        break;
    }
  }
  return st;
}

// --------------------------------------------------------------- cone transform

Rational cone_form(int n, const std::vector<Rational>& v) {
  if (static_cast<int>(v.size()) != n)
    throw std::invalid_argument("cone_form: dimension mismatch");
  Rational q(0);
  for (int i = 0; i + i < n - 1; ++i) q += v[i] * v[n - 1 - i];
  if (n % 2 == 1) q += v[(n - 1) / 2] * v[(n - 1) / 2] / 2;
  return q;
}

namespace {

// Middle-block description of the chart: hyperbolic pairs (i, n-1-i) plus the
// self-paired coordinate for odd n (0-based ambient indices).
struct ConeChart {
  int n;
  std::vector<std::pair<int, int>> pairs;
  int self = -1;

  explicit ConeChart(int dim) : n(dim) {
    for (int i = 1; i + i < n - 1; ++i) pairs.push_back({i, n - 1 - i});
    if (n % 2 == 1) self = (n - 1) / 2;
  }

  Rational middle_form(const std::vector<Rational>& v) const {
    Rational q(0);
    for (auto [i, j] : pairs) q += v[i] * v[j];
    if (self >= 0) q += v[self] * v[self] / 2;
    return q;
  }
};

// Exact inner cone integral: integral_{C} f(v) psi(<v, w>) |omega_{Q_n}| with
// the chart v_1 = -Qtilde(m)/v_n, measure dm ds/|s|. Additive over the terms
// of f; `truncated` reports a dropped small-|v_n| tail (conjugate-coordinate
// marginal meeting 0).
Complex inner_cone_integral(const ConeContext& cctx, const ConeChart& chart,
                            const SBFunction& f, const std::vector<Rational>& w,
                            long& budget, bool& truncated) {
  const long p = cctx.ctx.p;
  const int n = cctx.n;
  const int c0 = static_cast<int>(cctx.ctx.psi_conductor);
  const int v2 = valp_long(2, p);
  Complex total(0.0, 0.0);

  const int vw0 = val_or_inf(w[0], p);
  const int vwn = val_or_inf(w[n - 1], p);

  for (const SBTerm& term : f.terms()) {
    const Rational& cn = term.center[n - 1];
    const int lvn = term.level[n - 1];
    const Rational& c1 = term.center[0];
    const int lv1 = term.level[0];
    const bool ball1 = val_or_inf(c1, p) >= lv1;  // v_1 slot contains 0

    // Valuation shells of the conjugate coordinate on this cell.
    std::vector<int> kshells;
    bool balln = val_or_inf(cn, p) >= lvn;
    if (!balln) {
      kshells.push_back(valuation(cn, p));
    } else {
      for (int k = lvn; k <= lvn + 8; ++k) kshells.push_back(k);
      truncated = true;  // the |v_n| <= p^{-(lvn+8)} remainder is dropped
    }

    for (int k : kshells) {
      // Minimal valuation of Qtilde on the contributing region: val(v_1) + k.
      const int vQbar = (ball1 ? lv1 : valuation(c1, p)) + k;

      // Uniform middle refinement L: Qtilde stable mod p^{lv1 + k}.
      int vlow = kValInfinity;
      int L = 0;
      for (auto [i, j] : chart.pairs) {
        vlow = std::min({vlow, std::min(val_or_inf(term.center[i], p), term.level[i]),
                         std::min(val_or_inf(term.center[j], p), term.level[j])});
        L = std::max({L, term.level[i], term.level[j]});
      }
      if (chart.self >= 0) {
        vlow = std::min(vlow,
                        std::min(val_or_inf(term.center[chart.self], p),
                                 term.level[chart.self]) - v2);
        L = std::max(L, term.level[chart.self]);
      }
      const int target = lv1 + k;
      if (vlow < kValInfinity) L = std::max(L, target - vlow);
      L = std::max(L, (target + v2 + 1) / 2);

      // s-resolution: every s-dependent quantity of the per-cell closed forms
      // (psi(s w_0), the v_1-membership value, alpha-phases per pair including
      // branch indicators of the hyperbolic/square kernels) must be constant
      // on each representative cell s(1 + O(p^{Es - k})).
      int vamin = kValInfinity;  // min valuation of the middle components of w
      for (auto [i, j] : chart.pairs) {
        vamin = std::min({vamin, val_or_inf(w[n - 1 - i], p),
                          val_or_inf(w[n - 1 - j], p)});
      }
      if (chart.self >= 0)
        vamin = std::min(vamin, val_or_inf(w[n - 1 - chart.self], p));
      const int vlo = (vlow == kValInfinity) ? 0 : std::min(vlow, 0);
      int Es = std::max(lvn, k + 1);
      if (w[0] != 0) Es = std::max(Es, c0 - vw0);
      Es = std::max(Es, lv1 + 2 * k - vQbar);
      if (w[n - 1] != 0) {
        Es = std::max(Es, c0 - vwn + 2 * k - vQbar);
        Es = std::max(Es, c0 - vwn + 2 * k - 2 * vlo);
        Es = std::max(Es, L + k - vlo);
        if (vamin < kValInfinity) {
          Es = std::max(Es, c0 + vwn - 2 * vamin);
          Es = std::max(Es, L + vwn - vamin);
        }
      }

      if (Es - std::min(lvn, k) > 24) {
        if (balln) break;  // deep shells of the dropped tail, already reported
        throw std::runtime_error("cone_transform: s-resolution budget exhausted");
      }

      // Representative lists for s and the middle cells.
      std::vector<Rational> sreps;
      if (!balln) {
        long cnt = 1;
        for (int e = lvn; e < Es; ++e) cnt *= p;
        for (long d = 0; d < cnt; ++d)
          sreps.push_back(cn + Rational(d) * pow_p(p, lvn));
      } else {
        long m = 1;
        for (int e = 0; e < Es - k; ++e) m *= p;
        for (long u = 1; u < m; ++u)
          if (u % p != 0) sreps.push_back(Rational(u) * pow_p(p, k));
      }

      std::vector<int> mid;
      for (auto [i, j] : chart.pairs) {
        mid.push_back(i);
        mid.push_back(j);
      }
      if (chart.self >= 0) mid.push_back(chart.self);
      std::vector<Rational> mcenter;
      std::vector<int> mlevel, mtarget;
      for (int i : mid) {
        mcenter.push_back(term.center[i]);
        mlevel.push_back(term.level[i]);
        mtarget.push_back(std::max(term.level[i], L));
      }
      long cells = 1;
      for (size_t a = 0; a < mid.size(); ++a)
        for (int e = mlevel[a]; e < mtarget[a]; ++e) cells *= p;
      if (balln && cells > 300000 / std::max<long>(1, (long)sreps.size()))
        break;  // deeper shells of the dropped tail, already reported
      budget -= checked_budget(cells, static_cast<long>(sreps.size()), budget,
                               "cone_transform");

      const double smeas = std::pow(static_cast<double>(p), k - Es);
      for (const Rational& s : sreps) {
        const Rational alpha = -w[n - 1] / s;
        const Complex sfac = psi_eval(cctx.ctx, s * w[0]) * smeas;
        Complex acc(0.0, 0.0);
        for_each_subcell(p, mcenter, mlevel, mtarget,
                         [&](const std::vector<Rational>& mc) {
                           std::vector<Rational> full(n, Rational(0));
                           for (size_t a = 0; a < mid.size(); ++a)
                             full[mid[a]] = mc[a];
                           Rational qt = chart.middle_form(full);
                           Rational v1 = -qt / s;
                           if (ball1) {
                             if (val_or_inf(v1, p) < lv1) return;
                           } else if (val_or_inf(v1 - c1, p) < lv1) {
                             return;
                           }
                           Complex g(1.0, 0.0);
                           size_t a = 0;
                           for (auto [i, j] : chart.pairs) {
                             g *= hyperbolic_cell_integral(
                                 cctx.ctx, alpha, w[n - 1 - i], w[n - 1 - j],
                                 mc[a], mc[a + 1], std::max(mtarget[a], mtarget[a + 1]));
                             a += 2;
                           }
                           if (chart.self >= 0)
                             g *= square_cell_integral(cctx.ctx, alpha / 2,
                                                       w[n - 1 - chart.self],
                                                       mc[a], mtarget[a]);
                           acc += g;
                         });
        total += term.coeff * sfac * acc;
      }
    }
  }
  return total;
}

}  // namespace

ConeResult cone_transform(const ConeContext& cctx, const SBFunction& f,
                          const std::vector<Rational>& v_prime) {
  const int n = cctx.n;
  if (n <= 4 && n % 2 == 0)
    throw std::invalid_argument("cone_transform: even n must be > 4");
  if (n <= 3) throw std::invalid_argument("cone_transform: n must be > 3");
  if (static_cast<int>(v_prime.size()) != n || f.dim() != n)
    throw std::invalid_argument("cone_transform: dimension mismatch");
  bool nonzero = false;
  for (const Rational& c : v_prime) nonzero = nonzero || c != 0;
  if (!nonzero || cone_form(n, v_prime) != 0)
    throw std::invalid_argument("cone_transform: v' must lie on C - {0}");

  const long p = cctx.ctx.p;
  const int c0 = static_cast<int>(cctx.ctx.psi_conductor);
  const bool even = (n % 2 == 0);
  const double texp = even ? (n - 4) / 2.0 : static_cast<double>(n - 3);
  const ConeChart chart(n);

  if (f.empty()) return {Complex(0.0, 0.0), ShellStatus::ProvenVanishing, 0};

  const int Rf = f.support_norm_exp();
  int vmin = kValInfinity;
  for (const Rational& c : v_prime)
    if (c != 0) vmin = std::min(vmin, valuation(c, p));
  // Beyond this t-valuation every psi(<v, t v'>) is trivial on supp f.
  const int Tpos = even ? (c0 + Rf - vmin) : (c0 + Rf - vmin + 1) / 2;

  // Upper bound V0 for val<v, v'> over supp f, when every cell pins the
  // valuation of the linear form (else kValInfinity). For val(t) = m <= c0 - 1
  // the factor psi(1/t) is identically 1 and the shell equals
  // int f(v) * (shell mass of psi(t <v,v'>)), which vanishes identically once
  // val<v,v'> <= c0 - m - 2 on supp f: a proven large-|t| tail.
  int V0 = 0;
  for (const SBTerm& term : f.terms()) {
    Rational lc(0);
    int var = kValInfinity;
    for (int i = 0; i < n; ++i) {
      lc += term.center[i] * v_prime[n - 1 - i];
      if (v_prime[n - 1 - i] != 0)
        var = std::min(var, term.level[i] + valuation(v_prime[n - 1 - i], p));
    }
    int vl = val_or_inf(lc, p);
    if (vl < var)
      V0 = std::max(V0, vl);
    else
      V0 = kValInfinity;
    if (V0 == kValInfinity) break;
  }
  const int Tneg =
      V0 == kValInfinity
          ? -(1 << 20)
          : (even ? c0 - 2 - V0 : (c0 - 2 - V0 >= 0 ? (c0 - 2 - V0) / 2
                                                    : -((V0 + 2 - c0 + 1) / 2)));

  long budget = cctx.cell_budget;
  bool truncated = false;
  int pos_next = 0, neg_next = -1, neg_zero_run = 0;
  bool pos_done = false, neg_done = false, take_pos = true;
  bool pos_proven = false, neg_proven = false;
  Complex Iconst(0.0, 0.0);
  bool have_Iconst = false;

  auto shell = [&](int) -> ShellTerm {
    if (pos_done && neg_done) return {Complex(0.0, 0.0), true, false};
    bool positive;
    if (pos_done)
      positive = false;
    else if (neg_done)
      positive = true;
    else {
      positive = take_pos;
      take_pos = !take_pos;
    }
    const int m = positive ? pos_next++ : neg_next--;
    // Small-|t| tail: the inner integral is t-independent and the psi(t^{-1})
    // shell mass vanishes exactly below conductor - 1.
    if (positive && m >= Tpos && m >= c0 + 2) {
      pos_done = pos_proven = true;
      return {Complex(0.0, 0.0), true, neg_proven};
    }
    // Large-|t| tail: psi(t^{-1}) trivial and the linear phase has exactly
    // vanishing shell mass on all of supp f.
    if (!positive && m <= Tneg) {
      neg_done = neg_proven = true;
      return {Complex(0.0, 0.0), true, pos_proven};
    }
    int Et = std::max({1, c0 + m, c0 + Rf - m - vmin});
    if (Et > 20)
      throw std::runtime_error("cone_transform: t-resolution budget exhausted");
    if (m >= Tpos && !have_Iconst) {
      // One representative suffices for the t-independent inner value.
      have_Iconst = true;
      std::vector<Rational> w(v_prime);
      Rational tval = pow_p(p, even ? m : 2 * m);
      for (auto& c : w) c *= tval;
      Iconst = inner_cone_integral(cctx, chart, f, w, budget, truncated);
    }
    long reps = 1;
    for (int e = 0; e < Et; ++e) reps *= p;
    Complex acc(0.0, 0.0);
    const Rational pm = pow_p(p, m);
    for (long u = 1; u < reps; ++u) {
      if (u % p == 0) continue;
      Rational t = Rational(u) * pm;
      Complex inner;
      if (m >= Tpos) {
        inner = Iconst;
      } else {
        std::vector<Rational> w(v_prime);
        Rational tw = even ? t : t * t;
        for (auto& c : w) c *= tw;
        inner = inner_cone_integral(cctx, chart, f, w, budget, truncated);
      }
      acc += psi_eval(cctx.ctx, 1 / t) * inner;
    }
    Complex value = acc * std::pow(static_cast<double>(p), -Et) *
                    std::pow(static_cast<double>(p), -m * texp);
    bool exact = (value == Complex(0.0, 0.0));
    if (!positive) {
      neg_zero_run = exact ? neg_zero_run + 1 : 0;
      if (neg_zero_run >= cctx.policy.window) neg_done = true;
    }
    return {value, exact, false};
  };

  PvResult pv = pv_integral(shell, cctx.policy, cctx.tol);
  ConeResult res{pv.value, pv.status, pv.shells_used};
  if (truncated) res.status = ShellStatus::Truncated;
  return res;
}

Complex cone_pair_integral(const ConeContext& cctx, const SBFunction& f,
                           const std::function<Complex(const std::vector<Rational>&)>& g,
                           int extra) {
  const long p = cctx.ctx.p;
  const int n = cctx.n;
  const int v2 = valp_long(2, p);
  const ConeChart chart(n);
  SBFunction fc = f.canonicalized(f.max_level());
  Complex total(0.0, 0.0);
  long budget = cctx.cell_budget;

  for (const SBTerm& term : fc.terms()) {
    const Rational& cn = term.center[n - 1];
    const int lvn = term.level[n - 1];
    if (val_or_inf(cn, p) >= lvn)
      throw std::runtime_error(
          "cone_pair_integral: conjugate-coordinate marginal meets 0");
    const int k = valuation(cn, p);
    const Rational& c1 = term.center[0];
    const int lv1 = term.level[0];
    const bool ball1 = val_or_inf(c1, p) >= lv1;
    const int T0 = lv1 + extra;
    const int vQbar = (ball1 ? lv1 : valuation(c1, p)) + k;

    int Es = std::max(lvn + extra, T0 + 2 * k - vQbar);
    int vlow = kValInfinity;
    int L = 0;
    std::vector<int> mid;
    for (auto [i, j] : chart.pairs) {
      mid.push_back(i);
      mid.push_back(j);
    }
    if (chart.self >= 0) mid.push_back(chart.self);
    for (int i : mid) {
      int vl = std::min(val_or_inf(term.center[i], p), term.level[i]);
      if (i == chart.self) vl -= v2;
      vlow = std::min(vlow, vl);
      L = std::max(L, term.level[i] + extra);
    }
    const int target = T0 + k;
    if (vlow < kValInfinity) L = std::max(L, target - vlow);
    L = std::max(L, (target + v2 + 1) / 2);

    std::vector<Rational> mcenter;
    std::vector<int> mlevel, mtarget;
    for (int i : mid) {
      mcenter.push_back(term.center[i]);
      mlevel.push_back(term.level[i]);
      mtarget.push_back(std::max(term.level[i] + extra, L));
    }
    long cells = 1;
    for (size_t a = 0; a < mid.size(); ++a)
      for (int e = mlevel[a]; e < mtarget[a]; ++e) cells *= p;
    long scnt = 1;
    for (int e = lvn; e < Es; ++e) scnt *= p;
    budget -= checked_budget(cells, scnt, budget, "cone_pair_integral");

    double mvol = 1.0;
    for (size_t a = 0; a < mid.size(); ++a)
      mvol *= std::pow(static_cast<double>(p), -mtarget[a]);
    const double smeas = std::pow(static_cast<double>(p), k - Es);

    for (long d = 0; d < scnt; ++d) {
      Rational s = cn + Rational(d) * pow_p(p, lvn);
      for_each_subcell(p, mcenter, mlevel, mtarget,
                       [&](const std::vector<Rational>& mc) {
                         std::vector<Rational> v(n, Rational(0));
                         for (size_t a = 0; a < mid.size(); ++a) v[mid[a]] = mc[a];
                         v[n - 1] = s;
                         Rational qt = chart.middle_form(v);
                         v[0] = -qt / s;
                         if (ball1) {
                           if (val_or_inf(v[0], p) < lv1) return;
                         } else if (val_or_inf(v[0] - c1, p) < lv1) {
                           return;
                         }
                         total += term.coeff * g(v) * smeas * mvol;
                       });
    }
  }
  return total;
}

Complex cone_pair_integral(const ConeContext& cctx, const SBFunction& f,
                           const SBFunction& g) {
  int extra = std::max(0, g.max_level() - f.max_level()) + 1;
  return cone_pair_integral(
      cctx, f, [&](const std::vector<Rational>& v) { return g.value_at(v); },
      extra);
}

Complex weil_state_pairing(const WeilState& f, const WeilState& g) {
  Complex acc = f.scale * std::conj(g.scale);
  for (int i = 0; i < 3; ++i)
    acc *= SBFunction::inner_product(f.blocks[i], g.blocks[i]);
  return acc;
}

// ------------------------------------------------------------------ Y transform

namespace detail {

// measure over (Z_p^x)^2 (Lebesgue, total (1-1/p)^2) of the beta-set where
// val(b1 (b2 p^{k1+k2} + p^{k1+k3}) + b2 p^{k2+k3}) >= T, i.e. the level set
// of e2(b1 p^{k1}, b2 p^{k2}, p^{k3}). Closed form by solving for b1.
double y_e2_level_measure(long p, int T, int k1, int k2, int k3) {
  const double q = 1.0 / static_cast<double>(p), uf = 1.0 - q;
  const int s12 = k1 + k2, s13 = k1 + k3, s23 = k2 + k3;
  auto m_b1 = [&](int vA) -> double {
    // b1-measure of the solution coset at coefficient valuation vA.
    if (vA >= T) return (s23 >= T) ? uf : 0.0;
    return (s23 == vA) ? std::pow(static_cast<double>(p), vA - T) : 0.0;
  };
  if (k3 < k2) return uf * m_b1(s13);
  if (k3 > k2) return uf * m_b1(s12);
  // k2 == k3: stratify by j = val(b2 + 1).
  double total = (p > 2) ? (1.0 - 2.0 * q) * m_b1(s12) : 0.0;
  int J = std::max({T - s12, s23 - s12, 0}) + 1;
  for (int j = 1; j <= J; ++j)
    total += uf * std::pow(static_cast<double>(p), -j) * m_b1(s12 + j);
  total += std::pow(static_cast<double>(p), -(J + 1)) * ((s23 >= T) ? uf : 0.0);
  return total;
}

// W(m, k) = int over (z, a) unit triples of psi-bar(z^2 r(a)) on the shell
// val z = m <= 0, a_i = alpha_i p^{k_i}: integrating the diagonal unit of a
// (r is degree-1 homogeneous) gives an exact Ramanujan mass in val(e2),
// leaving closed-form level-set measures. Real by construction.
double y_w_fast(long p, int c0, int m, const std::array<int, 3>& k) {
  const double q = 1.0 / static_cast<double>(p), uf = 1.0 - q;
  const int sumk = k[0] + k[1] + k[2];
  auto ceil2 = [](int n) { return (n >= 0) ? (n + 1) / 2 : -((-n) / 2); };
  const int T0 = ceil2(c0 + sumk - 2 * m);
  double M0 = y_e2_level_measure(p, T0, k[0], k[1], k[2]);
  const int t1 = c0 - 1 + sumk - 2 * m;
  double M1 = 0.0;
  if (t1 % 2 == 0) {
    const int T1 = t1 / 2;
    M1 = y_e2_level_measure(p, T1, k[0], k[1], k[2]) -
         y_e2_level_measure(p, T1 + 1, k[0], k[1], k[2]);
  }
  return uf * (uf * M0 - q * M1);
}

}  // namespace detail

namespace {

constexpr double kYRepBudget = 6.0e6;   // H-call equivalents per configuration
constexpr double kYHistBudget = 3.0e8;  // beta-pair enumerations per configuration

int checked_split_block(const QuadraticSpace& sp, const char* where) {
  const int d = sp.dim();
  if (d <= 2 || d % 2 != 0)
    throw std::invalid_argument(std::string(where) +
                                ": block dimensions must be even and > 2");
  const auto& S = sp.gram().matrix();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (S[i][j] != ((j == d - 1 - i) ? 1 : 0))
        throw std::invalid_argument(
            std::string(where) + ": blocks must be split (antidiagonal Gram)");
  return d;
}

int addv(int a, int b) {
  return (a >= kValInfinity || b >= kValInfinity) ? kValInfinity : a + b;
}

// integral over units of psi(-r p^{2m} u^2) du (the z-shell mass against
// psi-bar(z^2 r) when every other z-dependence is trivial).
Complex y_zmass(const PAdicContext& ctx, int m, const Rational& r) {
  const Rational c = -r * pow_p(ctx.p, 2 * m);
  return square_cell_integral(ctx, c, Rational(0), Rational(0), 0) -
         square_cell_integral(ctx, c, Rational(0), Rational(0), 1);
}

struct YBlockCells {
  const QuadraticSpace* space = nullptr;
  int d = 0, L = 1;
  bool chi_unit_trivial = true;
  std::vector<std::vector<Rational>> centers;
  std::vector<Complex> coeffs;              // tensor mode only
  std::vector<int> keyidx;                  // tensor mode only
  std::vector<Rational> keys;               // distinct residues of Q mod p^N
  std::vector<std::vector<int>> vc;         // coordinate valuations per center
};

struct YConfigPlan {
  bool pruned = false;
  bool unified = false;     // z-coupling beyond psi-bar(z^2 r(a)) is trivial
  bool zmass_mode = false;  // z handled by the Gauss shell mass per a-rep
  bool z_constant = false;  // all z-dependence besides psi(1/z) is trivial
  int Ez = 1;
  std::array<int, 3> Ea{1, 1, 1};
  int Dmax = 0;             // per-block linear-phase digit depth (max)
  int sumk = 0, vqb = 0, minpair = 0, cond_r = 0;
  std::array<bool, 3> osc{false, false, false};
  std::array<std::vector<char>, 3> possible;
};

struct YResidueData {
  int D = 0, DL = 1, Eb = 1, UD = 1;
  long PD = 1;
  std::vector<long> unitsD;  // unit residues mod p^D ({0} when D = 0)
  std::vector<int> uidx;     // residue -> index
  std::vector<Complex> V;    // [bin1][bin2][res3] conditioned shell mass
  long rval(int idx) const { return PD == 1 ? 1 : unitsD[idx]; }
};

long pow_long(long p, int e) {
  long r = 1;
  while (e-- > 0) r *= p;
  return r;
}

long inv_mod_long(long a, long mod) {
  long t = 0, nt = 1, r = mod, nr = a % mod;
  if (nr < 0) nr += mod;
  while (nr != 0) {
    const long q = r / nr;
    t -= q * nt; std::swap(t, nt);
    r -= q * nr; std::swap(r, nr);
  }
  return (t % mod + mod) % mod;
}

struct YEngine {
  const YContext* yc = nullptr;
  long p = 3;
  int c0 = 0, N = 1, Ka = 2;
  Rational rho;
  int vrho = 0;
  std::array<std::vector<Rational>, 3> xi;
  std::array<std::vector<int>, 3> vxi;
  std::array<YBlockCells, 3> blk;
  std::vector<std::array<int, 3>> kmatch;  // common-key index triples (tensor)
  bool grid_mode = false;
  std::vector<std::array<int, 3>> gcells;  // marginal-center indices per cell
  std::vector<Complex> gvals;
  Complex gsum{0.0, 0.0};
  double gabs = 0.0;
  // batch mode: evaluate at every triple of per-block marginal points at once
  bool batch_mode = false;
  std::array<std::vector<std::vector<Rational>>, 3> bxi;
  std::array<std::vector<std::vector<int>>, 3> bvxi;
  bool force_honest = false;  // test hook: skip the unified fast path
  double eps_cfg = 0.0;       // bound below which a configuration is negligible
  double eps_mid = 0.0;       // looser threshold for expensive configurations
  // accounting
  double dropped = 0.0;
  long configs = 0;
  std::map<std::array<long, 3>, Complex> zshell_cache;

  double dp(int e) const { return std::pow(static_cast<double>(p), e); }
  int sum_dL() const {
    int s = 0;
    for (int i = 0; i < 3; ++i) s += blk[i].d * blk[i].L;
    return s;
  }

  YConfigPlan plan_config(int m, const std::array<int, 3>& k) const;
  double config_bound(const YConfigPlan& pl, int m,
                      const std::array<int, 3>& k) const;
  std::pair<Complex, bool> eval_config(int m, const std::array<int, 3>& k);
  double zram(int m) const {
    // integral of psi(1/z) over the unit shell val z = m (Ramanujan).
    if (-m >= c0) return 1.0 - 1.0 / static_cast<double>(p);
    if (-m == c0 - 1) return -1.0 / static_cast<double>(p);
    return 0.0;
  }
  Complex zshell(int m, int vr, long ur);
  YResidueData residue_data(const YConfigPlan& pl, int m,
                            const std::array<int, 3>& k);
  Complex unified_eval(const YConfigPlan& pl, int m,
                       const std::array<int, 3>& k);
  bool eval_config_batch(int m, const std::array<int, 3>& k,
                         std::vector<Complex>& out);
  Complex lsi_trivial(const YConfigPlan& pl) const;
  Complex lsi(const YConfigPlan& pl, const Rational& qb,
              const std::array<const std::vector<Rational>*, 3>& bdual) const;
  double fscale() const;
};

YConfigPlan YEngine::plan_config(int m, const std::array<int, 3>& k) const {
  YConfigPlan pl;
  pl.sumk = k[0] + k[1] + k[2];
  pl.vqb = vrho - 2 * m - pl.sumk;
  const int minpair = std::min({k[0] + k[1], k[0] + k[2], k[1] + k[2]});
  const int r_floor = 2 * minpair - pl.sumk;
  const bool need_psi_z = (-m < c0);
  const int cond_r = c0 - 2 * m - r_floor;
  pl.minpair = minpair;
  pl.cond_r = cond_r;
  bool z_extra = false;
  int zneed = 0;
  std::array<int, 3> aneed{0, 0, 0}, D{0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    const YBlockCells& b = blk[i];
    if (!b.chi_unit_trivial) D[i] = 1;
    const int L = b.L, d = b.d;
    const bool osc = (2 * L + pl.vqb < 0);
    pl.osc[i] = osc;
    const size_t ncell = b.centers.size();
    const size_t nvv = batch_mode ? bvxi[i].size() : 1;
    pl.possible[i].assign(nvv * ncell, 0);
    bool any = false;
    for (size_t mv = 0; mv < nvv; ++mv) {
      const std::vector<int>& vv = batch_mode ? bvxi[i][mv] : vxi[i];
      for (size_t t = 0; t < ncell; ++t) {
        bool ok = true;
        int ist = 0, phz = 0, pha = 0, phai = 0;
        for (int x = 0; ok && x < d / 2; ++x) {
          const int y = d - 1 - x;
          const int vbx = addv(vv[y], -k[i]);
          const int vby = addv(vv[x], -k[i]);
          const int vcx = b.vc[t][x], vcy = b.vc[t][y];
          const int vqcy = addv(pl.vqb, vcy), vqcx = addv(pl.vqb, vcx);
          const int vA = std::min(vqcy, vbx);
          const int vB = std::min(vqcx, vby);
          const bool tieA = (vqcy == vbx) && vqcy < kValInfinity;
          const bool tieB = (vqcx == vby) && vqcx < kValInfinity;
          const int thr = osc ? (L + pl.vqb) : (-L);
          if (vA < thr && !tieA) { ok = false; break; }
          if (vB < thr && !tieB) { ok = false; break; }
          if (tieA && vA < thr) ist = std::max(ist, thr - vA);
          if (tieB && vB < thr) ist = std::max(ist, thr - vB);
          const int condq = std::max(0, c0 - addv(pl.vqb, addv(vcx, vcy)));
          phz = std::max(phz, condq);
          pha = std::max(pha, condq);
          phai = std::max({phai, c0 - addv(vbx, vcx), c0 - addv(vby, vcy)});
          if (osc) {
            const int tfloor = vA + vB - (2 * L + pl.vqb);
            const int condo = std::max(0, c0 - tfloor);
            phz = std::max(phz, condo);
            pha = std::max(pha, condo);
          }
        }
        if (!ok) continue;
        pl.possible[i][mv * ncell + t] = 1;
        any = true;
        if (ist > 0 || phz > 0 || osc) z_extra = true;
        zneed = std::max({zneed, ist, phz});
        for (int j = 0; j < 3; ++j) aneed[j] = std::max({aneed[j], ist, pha});
        aneed[i] = std::max(aneed[i], std::max(0, phai));
        D[i] = std::max(D[i], std::max(0, phai));
      }
    }
    if (!any) { pl.pruned = true; return pl; }
  }
  if (!grid_mode && !batch_mode) {
    // A common Q-residue with live cells must survive in all three blocks.
    bool live = false;
    for (const auto& km : kmatch) {
      bool all = true;
      for (int i = 0; all && i < 3; ++i) {
        bool found = false;
        for (size_t t = 0; t < blk[i].centers.size(); ++t)
          if (blk[i].keyidx[t] == km[i] && pl.possible[i][t]) { found = true; break; }
        all = found;
      }
      if (all) { live = true; break; }
    }
    if (!live) { pl.pruned = true; return pl; }
  }
  // everything except psi(1/z) constant on z unit cosets at E = 0
  pl.z_constant = !z_extra && zneed == 0 && cond_r <= 0;
  pl.unified = !z_extra && zneed == 0;
  pl.zmass_mode = !need_psi_z && pl.unified;
  pl.Dmax = std::max({D[0], D[1], D[2]});
  pl.Ez = std::max({1, zneed, need_psi_z ? c0 + m : 0, cond_r});
  for (int i = 0; i < 3; ++i) pl.Ea[i] = std::max({1, aneed[i], cond_r});
  return pl;
}

double YEngine::config_bound(const YConfigPlan& pl, int m,
                             const std::array<int, 3>& k) const {
  double umax = dp(2 * N);
  double att = 1.0;
  for (int i = 0; i < 3; ++i) {
    const YBlockCells& b = blk[i];
    const double cell_att =
        dp(-b.d * b.L) * (pl.osc[i] ? dp((2 * b.L + pl.vqb) * (b.d / 2)) : 1.0);
    if (grid_mode) {
      att *= cell_att;
    } else {
      // a cell counts if it is live for any marginal (point-uniform bound)
      double s = 0.0;
      const size_t ncell = b.centers.size();
      const size_t nvv = pl.possible[i].size() / ncell;
      for (size_t t = 0; t < ncell; ++t) {
        bool live = false;
        for (size_t mv = 0; mv < nvv && !live; ++mv)
          live = pl.possible[i][mv * ncell + t];
        if (live) s += std::abs(b.coeffs[t]) * cell_att;
      }
      umax *= s;
    }
  }
  if (grid_mode) umax *= gabs * att * dp(sum_dL());  // att replaces the flat volume
  // |zmass| over the e2 valuation strata, exact level-set measures.
  const int sumk = k[0] + k[1] + k[2];
  const int minpair = std::min({k[0] + k[1], k[0] + k[2], k[1] + k[2]});
  auto ceil2 = [](int n) { return (n >= 0) ? (n + 1) / 2 : -((-n) / 2); };
  const int T0 = ceil2(c0 + sumk - 2 * m);
  // unified plans: e2-levels below the conditioned lambda-ball floor vanish
  // exactly (the unit integral of psi-bar(z^2 r(b) lambda) is Ramanujan-zero),
  // so only the rare deep-cancellation levels can contribute.
  int Tlo = minpair;
  if (pl.unified) {
    const int DL = std::max(pl.Dmax, 1);
    Tlo = std::max(Tlo, ceil2(c0 - DL - 2 * m + sumk));
  }
  double wabs = 0.0;
  for (int T = Tlo; T < T0; ++T) {
    const double mt = detail::y_e2_level_measure(p, T, k[0], k[1], k[2]) -
                      detail::y_e2_level_measure(p, T + 1, k[0], k[1], k[2]);
    wabs += mt * std::min(1.0, 2.0 * dp(0) * std::pow(static_cast<double>(p),
                                                      (2 * m + 2 * T - sumk) * 0.5));
  }
  wabs += detail::y_e2_level_measure(p, std::max(T0, Tlo), k[0], k[1], k[2]);
  return dp(sumk) * umax * wabs;
}

Complex YEngine::lsi_trivial(const YConfigPlan& pl) const {
  if (grid_mode) {
    Complex s(0.0, 0.0);
    bool all = true;
    for (int i = 0; i < 3; ++i)
      for (char c : pl.possible[i]) all = all && c;
    if (all) {
      s = gsum;
    } else {
      for (size_t c = 0; c < gcells.size(); ++c)
        if (pl.possible[0][gcells[c][0]] && pl.possible[1][gcells[c][1]] &&
            pl.possible[2][gcells[c][2]])
          s += gvals[c];
    }
    return s * dp(2 * N - sum_dL());
  }
  std::array<std::vector<Complex>, 3> U;
  for (int i = 0; i < 3; ++i) {
    U[i].assign(blk[i].keys.size(), Complex(0.0, 0.0));
    const double vol = dp(-blk[i].d * blk[i].L);
    for (size_t t = 0; t < blk[i].centers.size(); ++t)
      if (pl.possible[i][t]) U[i][blk[i].keyidx[t]] += blk[i].coeffs[t] * vol;
  }
  Complex s(0.0, 0.0);
  for (const auto& km : kmatch) s += U[0][km[0]] * U[1][km[1]] * U[2][km[2]];
  return s * dp(2 * N);
}

Complex YEngine::lsi(const YConfigPlan& pl, const Rational& qb,
                     const std::array<const std::vector<Rational>*, 3>& bdual)
    const {
  const PAdicContext& ctx = yc->ctx;
  if (grid_mode) {
    std::array<std::vector<Complex>, 3> hp;
    for (int i = 0; i < 3; ++i) {
      const YBlockCells& b = blk[i];
      hp[i].assign(b.centers.size(), Complex(0.0, 0.0));
      for (size_t t = 0; t < b.centers.size(); ++t) {
        if (!pl.possible[i][t]) continue;
        Complex prod(1.0, 0.0);
        for (int x = 0; x < b.d / 2; ++x) {
          const int y = b.d - 1 - x;
          prod *= hyperbolic_cell_integral(ctx, qb, (*bdual[i])[x],
                                           (*bdual[i])[y], b.centers[t][x],
                                           b.centers[t][y], b.L);
          if (prod == Complex(0.0, 0.0)) break;
        }
        hp[i][t] = prod;
      }
    }
    Complex s(0.0, 0.0);
    for (size_t c = 0; c < gcells.size(); ++c)
      s += gvals[c] * hp[0][gcells[c][0]] * hp[1][gcells[c][1]] *
           hp[2][gcells[c][2]];
    return s * dp(2 * N);
  }
  std::array<std::vector<Complex>, 3> U;
  for (int i = 0; i < 3; ++i) {
    const YBlockCells& b = blk[i];
    U[i].assign(b.keys.size(), Complex(0.0, 0.0));
    for (size_t t = 0; t < b.centers.size(); ++t) {
      if (!pl.possible[i][t]) continue;
      Complex prod = b.coeffs[t];
      for (int x = 0; x < b.d / 2; ++x) {
        const int y = b.d - 1 - x;
        prod *= hyperbolic_cell_integral(ctx, qb, (*bdual[i])[x],
                                         (*bdual[i])[y], b.centers[t][x],
                                         b.centers[t][y], b.L);
        if (prod == Complex(0.0, 0.0)) break;
      }
      U[i][b.keyidx[t]] += prod;
    }
  }
  Complex s(0.0, 0.0);
  for (const auto& km : kmatch) s += U[0][km[0]] * U[1][km[1]] * U[2][km[2]];
  return s * dp(2 * N);
}

// integral over the z-shell val z = m of psi(1/z) psi-bar(z^2 rt) against the
// unit Haar measure, rt = ur p^vr (closed Gauss mass when psi(1/z) is trivial,
// a short cached Kloosterman-type unit sum otherwise).
Complex YEngine::zshell(int m, int vr, long ur) {
  const std::array<long, 3> key{static_cast<long>(m), static_cast<long>(vr), ur};
  auto it = zshell_cache.find(key);
  if (it != zshell_cache.end()) return it->second;
  const Rational rt = Rational(ur) * pow_p(p, vr);
  Complex zv;
  if (m <= -c0) {
    zv = y_zmass(yc->ctx, m, rt);
  } else {
    const int E1 = std::max({1, c0 + m, c0 - 2 * m - vr});
    const long P1 = pow_long(p, E1);
    const Rational pm = pow_p(p, m);
    Complex s(0.0, 0.0);
    for (long zu = 1; zu < P1; ++zu) {
      if (zu % p == 0) continue;
      const Rational z = Rational(zu) * pm;
      s += psi_eval(yc->ctx, 1 / z) * std::conj(psi_eval(yc->ctx, z * z * rt));
    }
    zv = s * dp(-E1);
  }
  zshell_cache.emplace(key, zv);
  return zv;
}

// Residue-level data of one unified configuration. Writing a = lambda
// (b1, b2, 1) with unit lambda = alpha_3 (d alpha = d b1 d b2 d lambda,
// r(a) = lambda r(b)), the conditioned lambda-ball integral of
// psi-bar(z^2 r(b) lambda) is exact, so the alpha-triple reduces to a
// histogram of (val, unit residue) of r(b) over unit beta-pairs mod p^Eb,
// combined with per-block cell integrals tabulated on alpha-residues mod p^D
// (D = linear-phase digit depth; the qb unit is irrelevant here by the plan
// conditions). V[bin1][bin2][res3] is the beta-pair mass against the residual
// z/lambda factor; all alpha- and z-measures are folded in.
YResidueData YEngine::residue_data(const YConfigPlan& pl, int m,
                                   const std::array<int, 3>& k) {
  YResidueData rd;
  const int D = rd.D = pl.Dmax;
  const int DL = rd.DL = std::max(D, 1);
  const long PD = rd.PD = pow_long(p, D);
  const int sumk = pl.sumk;
  auto ceil2 = [](int n) { return (n >= 0) ? (n + 1) / 2 : -((-n) / 2); };
  const int Eb = rd.Eb =
      std::max({1, D, ceil2(c0 - 2 * m + sumk) - pl.minpair});
  const long PE = pow_long(p, Eb);
  const int vfloor = c0 - DL - 2 * m;  // lowest contributing val r(a)
  const int vcap = c0 - 2 * m;         // >= vcap: psi-bar trivial on the shell
  const long PRmax = pow_long(p, DL);

  rd.uidx.assign(PD, -1);
  for (long r = 0; r < PD; ++r)
    if (PD == 1 || r % p != 0) {
      rd.uidx[r] = static_cast<int>(rd.unitsD.size());
      rd.unitsD.push_back(r);
    }
  const int UD = rd.UD = static_cast<int>(rd.unitsD.size());

  // histogram of unit beta-pairs by (beta mod p^D, level of r, unit residue)
  std::vector<double> hist(static_cast<size_t>(UD) * UD * (DL + 1) * PRmax, 0.0);
  auto hslot = [&](int i1, int i2, int t, long u) -> double& {
    return hist[((static_cast<size_t>(i1) * UD + i2) * (DL + 1) + t) * PRmax + u];
  };
  const int s12 = k[0] + k[1], s13 = k[0] + k[2], s23 = k[1] + k[2];
  const int minS = std::min({s12, s13, s23});
  const long long P12 = pow_long(p, s12 - minS), P13 = pow_long(p, s13 - minS),
                  P23 = pow_long(p, s23 - minS);
  for (long b1 = 1; b1 < PE; ++b1) {
    if (b1 % p == 0) continue;
    const int i1 = rd.uidx[b1 % PD];
    for (long b2 = 1; b2 < PE; ++b2) {
      if (b2 % p == 0) continue;
      const int i2 = rd.uidx[b2 % PD];
      __int128 n = static_cast<__int128>(b1) * b2 * P12 +
                   static_cast<__int128>(b1) * P13 +
                   static_cast<__int128>(b2) * P23;
      int t = DL;
      long u = 0;
      if (n != 0) {
        int v2 = minS;
        while (n % p == 0) { n /= p; ++v2; }
        const int vr = 2 * v2 - sumk;
        if (vr < vfloor) continue;
        if (vr < vcap) {
          t = vr - vfloor;
          const long PRu = pow_long(p, vcap - vr);
          long nn = static_cast<long>(n % PRu);
          if (nn < 0) nn += PRu;
          const long den = ((b1 % PRu) * (b2 % PRu)) % PRu;
          u = (((nn * nn) % PRu) * inv_mod_long(den, PRu)) % PRu;
        }
      }
      hslot(i1, i2, t, u) += 1.0;
    }
  }

  const double q1 = 1.0 / static_cast<double>(p), uf = 1.0 - q1;
  const double zr = zram(m), bmeas = dp(-2 * Eb);
  rd.V.assign(static_cast<size_t>(UD) * UD * UD, Complex(0.0, 0.0));
  for (int i1 = 0; i1 < UD; ++i1)
    for (int i2 = 0; i2 < UD; ++i2)
      for (int i3 = 0; i3 < UD; ++i3) {
        Complex v(0.0, 0.0);
        for (int t = 0; t <= DL; ++t) {
          const long PRu = (t == DL) ? 1 : pow_long(p, DL - t);
          for (long u = 0; u < PRu; ++u) {
            const double h = hslot(i1, i2, t, u);
            if (h == 0.0) continue;
            Complex zf;
            if (t == DL)
              zf = Complex((D == 0 ? uf : dp(-D)) * zr, 0.0);
            else if (D == 0)
              zf = Complex(-q1 * zr, 0.0);
            else
              zf = dp(-D) * zshell(m, vfloor + t,
                                   (u * (rd.rval(i3) % PRu)) % PRu);
            v += h * zf;
          }
        }
        rd.V[(static_cast<size_t>(i1) * UD + i2) * UD + i3] = v * bmeas;
      }
  return rd;
}

Complex YEngine::unified_eval(const YConfigPlan& pl, int m,
                              const std::array<int, 3>& k) {
  const PAdicContext& ctx = yc->ctx;
  const YResidueData rd = residue_data(pl, m, k);
  const int UD = rd.UD;
  const long PD = rd.PD;
  const int sumk = pl.sumk;
  const std::vector<Complex>& V = rd.V;

  // per-block tables at residue representatives (chi and cell weights folded)
  const Rational qb0 = -rho / pow_p(p, 2 * m + sumk);
  std::array<std::vector<std::vector<Complex>>, 3> U;
  for (int i = 0; i < 3; ++i) {
    const YBlockCells& b = blk[i];
    const size_t slots = grid_mode ? b.centers.size() : b.keys.size();
    U[i].assign(UD, std::vector<Complex>(slots, Complex(0.0, 0.0)));
    for (int ri = 0; ri < UD; ++ri) {
      const Rational a = Rational(rd.rval(ri)) * pow_p(p, k[i]);
      const double chi = chi_Q(*b.space, a, ctx);
      std::vector<Rational> bd(b.d);
      for (int j = 0; j < b.d; ++j) bd[j] = xi[i][b.d - 1 - j] / a;
      for (size_t t = 0; t < b.centers.size(); ++t) {
        if (!pl.possible[i][t]) continue;
        Complex prod(chi, 0.0);
        if (!grid_mode) prod *= b.coeffs[t];
        for (int x = 0; x < b.d / 2 && prod != Complex(0.0, 0.0); ++x) {
          const int y = b.d - 1 - x;
          prod *= hyperbolic_cell_integral(ctx, qb0, bd[x], bd[y],
                                           b.centers[t][x], b.centers[t][y],
                                           b.L);
        }
        if (grid_mode)
          U[i][ri][t] = prod;
        else
          U[i][ri][b.keyidx[t]] += prod;
      }
    }
  }

  auto bin_of = [&](int r, long ir3) -> int {
    return PD == 1 ? 0 : rd.uidx[(rd.unitsD[r] * ir3) % PD];
  };
  const std::vector<long>& unitsD = rd.unitsD;
  Complex acc(0.0, 0.0);
  if (!grid_mode) {
    for (int r3 = 0; r3 < UD; ++r3) {
      const long ir3 = (PD == 1) ? 1 : inv_mod_long(unitsD[r3], PD);
      for (int r1 = 0; r1 < UD; ++r1)
        for (int r2 = 0; r2 < UD; ++r2) {
          const Complex v = V[(static_cast<size_t>(bin_of(r1, ir3)) * UD +
                               bin_of(r2, ir3)) * UD + r3];
          if (v == Complex(0.0, 0.0)) continue;
          Complex s(0.0, 0.0);
          for (const auto& km : kmatch)
            s += U[0][r1][km[0]] * U[1][r2][km[1]] * U[2][r3][km[2]];
          acc += v * s;
        }
    }
  } else {
    const size_t M1 = blk[0].centers.size(), M2 = blk[1].centers.size(),
                 M3 = blk[2].centers.size();
    if (UD == 1) {
      Complex s(0.0, 0.0);
      for (size_t c = 0; c < gcells.size(); ++c)
        s += gvals[c] * U[0][0][gcells[c][0]] * U[1][0][gcells[c][1]] *
             U[2][0][gcells[c][2]];
      acc = V[0] * s;
    } else {
      // sequential contraction to T[c1][c2][c3], then one pass over cells
      std::vector<Complex> A3(static_cast<size_t>(UD) * UD * M3,
                              Complex(0.0, 0.0));
      for (int r1 = 0; r1 < UD; ++r1)
        for (int r2 = 0; r2 < UD; ++r2) {
          Complex* row = &A3[(static_cast<size_t>(r1) * UD + r2) * M3];
          for (int r3 = 0; r3 < UD; ++r3) {
            const long ir3 = inv_mod_long(unitsD[r3], PD);
            const Complex v = V[(static_cast<size_t>(bin_of(r1, ir3)) * UD +
                                 bin_of(r2, ir3)) * UD + r3];
            if (v == Complex(0.0, 0.0)) continue;
            const std::vector<Complex>& u3 = U[2][r3];
            for (size_t c = 0; c < M3; ++c) row[c] += v * u3[c];
          }
        }
      std::vector<Complex> A2(static_cast<size_t>(UD) * M2 * M3,
                              Complex(0.0, 0.0));
      for (int r1 = 0; r1 < UD; ++r1)
        for (int r2 = 0; r2 < UD; ++r2) {
          const Complex* row = &A3[(static_cast<size_t>(r1) * UD + r2) * M3];
          const std::vector<Complex>& u2 = U[1][r2];
          for (size_t c2 = 0; c2 < M2; ++c2) {
            if (u2[c2] == Complex(0.0, 0.0)) continue;
            Complex* dst = &A2[(static_cast<size_t>(r1) * M2 + c2) * M3];
            for (size_t c3 = 0; c3 < M3; ++c3) dst[c3] += u2[c2] * row[c3];
          }
        }
      std::vector<Complex> T(M1 * M2 * M3, Complex(0.0, 0.0));
      for (int r1 = 0; r1 < UD; ++r1) {
        const std::vector<Complex>& u1 = U[0][r1];
        for (size_t c1 = 0; c1 < M1; ++c1) {
          if (u1[c1] == Complex(0.0, 0.0)) continue;
          Complex* dst = &T[c1 * M2 * M3];
          const Complex* src = &A2[static_cast<size_t>(r1) * M2 * M3];
          for (size_t c = 0; c < M2 * M3; ++c) dst[c] += u1[c1] * src[c];
        }
      }
      for (size_t c = 0; c < gcells.size(); ++c)
        acc += gvals[c] *
               T[(static_cast<size_t>(gcells[c][0]) * M2 + gcells[c][1]) * M3 +
                 gcells[c][2]];
    }
  }
  return acc * dp(2 * N + sumk);
}

std::pair<Complex, bool> YEngine::eval_config(int m,
                                              const std::array<int, 3>& k) {
  YConfigPlan pl = plan_config(m, k);
  if (pl.pruned) return {Complex(0.0, 0.0), true};
  // psi(1/z) integrates to an exact zero over the shell once everything else
  // is constant in z (inversion preserves the unit Haar measure).
  if (m >= c0 + 2 && pl.z_constant) return {Complex(0.0, 0.0), true};
  const double bnd0 = config_bound(pl, m, k);
  if (bnd0 <= eps_cfg && !force_honest) {
    dropped += bnd0;
    return {Complex(0.0, 0.0), false};
  }
  ++configs;
  const PAdicContext& ctx = yc->ctx;
  const double wk = dp(pl.sumk);
  const auto dbg_u0 = std::chrono::steady_clock::now();
  if (pl.unified && !force_honest) {
    if (pl.Dmax == 0) {
      // closed form for every shell: the digit-free case is y_w_fast with the
      // unit z-mass replaced by the psi(1/z) Ramanujan factor.
      const double uf = 1.0 - 1.0 / static_cast<double>(p);
      const double zr = zram(m);
      if (zr == 0.0) return {Complex(0.0, 0.0), true};
      double chik = 1.0;
      for (int i = 0; i < 3; ++i)
        chik *= chi_Q(*blk[i].space, pow_p(p, k[i]), ctx);
      const double W = detail::y_w_fast(p, c0, m, k) * (zr / uf);
      return {lsi_trivial(pl) * (wk * chik * W), false};
    }
    auto ceil2 = [](int n) { return (n >= 0) ? (n + 1) / 2 : -((-n) / 2); };
    const int Eb =
        std::max({1, pl.Dmax, ceil2(c0 - 2 * m + pl.sumk) - pl.minpair});
    double ucost = dp(2 * Eb);
    if (grid_mode) {
      double mprod = dp(pl.Dmax);
      for (int i = 0; i < 3; ++i)
        mprod *= static_cast<double>(blk[i].centers.size());
      ucost += mprod;
    }
    if (ucost <= kYHistBudget && !(ucost > 1.0e6 && bnd0 <= eps_mid)) {
      Complex v = unified_eval(pl, m, k);
      if (std::getenv("BK_Y_DEBUG")) {
        const double dt = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - dbg_u0)
                              .count();
        if (dt > 0.01)
          std::fprintf(stderr,
                       "y-cfg m=%d k=(%d,%d,%d) unified D=%d Eb=%d |v|=%.3g dt=%.3fs\n",
                       m, k[0], k[1], k[2], pl.Dmax, Eb, std::abs(v), dt);
      }
      return {v, false};
    }
    dropped += bnd0;
    if (std::getenv("BK_Y_DEBUG"))
      std::fprintf(stderr,
                   "y-drop m=%d k=(%d,%d,%d) unified D=%d Eb=%d cost=%.3g bound=%.3g\n",
                   m, k[0], k[1], k[2], pl.Dmax, Eb, ucost, bnd0);
    return {Complex(0.0, 0.0), false};
  }
  // cost control
  double inner = 0.0;
  for (int i = 0; i < 3; ++i) {
    long live = 0;
    for (char c : pl.possible[i]) live += c;
    inner += static_cast<double>(live) * (blk[i].d / 2);
  }
  if (grid_mode) inner += static_cast<double>(gcells.size()) / 8.0;
  const double zcnt = pl.zmass_mode ? 1.0 : dp(pl.Ez) * (1.0 - 1.0 / p);
  double acnt = 1.0;
  for (int i = 0; i < 3; ++i) acnt *= dp(pl.Ea[i]) * (1.0 - 1.0 / p);
  if (zcnt * acnt * std::max(1.0, inner) > kYRepBudget && !force_honest) {
    dropped += bnd0;
    if (std::getenv("BK_Y_DEBUG"))
      std::fprintf(stderr,
                   "y-drop m=%d k=(%d,%d,%d) Ez=%d Ea=(%d,%d,%d) cost=%.3g bound=%.3g\n",
                   m, k[0], k[1], k[2], pl.Ez, pl.Ea[0], pl.Ea[1], pl.Ea[2],
                   zcnt * acnt * inner, bnd0);
    return {Complex(0.0, 0.0), false};
  }
  const auto dbg_t0 = std::chrono::steady_clock::now();
  // a-representatives per block
  struct ARep {
    Rational a;
    std::vector<Rational> bdual;
    double chi;
  };
  std::array<std::vector<ARep>, 3> reps;
  for (int i = 0; i < 3; ++i) {
    long P = 1;
    for (int e = 0; e < pl.Ea[i]; ++e) P *= p;
    const Rational pk = pow_p(p, k[i]);
    for (long r = 1; r < P; ++r) {
      if (r % p == 0) continue;
      ARep ar;
      ar.a = Rational(r) * pk;
      ar.bdual.resize(blk[i].d);
      for (int j = 0; j < blk[i].d; ++j)
        ar.bdual[j] = xi[i][blk[i].d - 1 - j] / ar.a;
      ar.chi = chi_Q(*blk[i].space, ar.a, ctx);
      reps[i].push_back(std::move(ar));
    }
  }
  double measA = 1.0;
  for (int i = 0; i < 3; ++i) measA *= dp(-pl.Ea[i]);
  std::vector<long> zreps;
  if (!pl.zmass_mode) {
    long P = 1;
    for (int e = 0; e < pl.Ez; ++e) P *= p;
    for (long r = 1; r < P; ++r)
      if (r % p != 0) zreps.push_back(r);
  }
  const Rational pm = pow_p(p, m), p2m = pow_p(p, 2 * m);
  Complex acc(0.0, 0.0);
  for (const ARep& a0 : reps[0])
    for (const ARep& a1 : reps[1])
      for (const ARep& a2 : reps[2]) {
        const Rational e3 = a0.a * a1.a * a2.a;
        const Rational e2 = a0.a * a1.a + a1.a * a2.a + a2.a * a0.a;
        const Rational rr = (e2 == 0) ? Rational(0) : e2 * e2 / e3;
        const double chi = a0.chi * a1.chi * a2.chi;
        const std::array<const std::vector<Rational>*, 3> bd{
            &a0.bdual, &a1.bdual, &a2.bdual};
        if (pl.zmass_mode) {
          const Rational qb = -rho / (p2m * e3);
          acc += y_zmass(ctx, m, rr) * chi * lsi(pl, qb, bd);
        } else {
          Complex zacc(0.0, 0.0);
          for (long zu : zreps) {
            const Rational z = Rational(zu) * pm;
            const Rational qb = -rho / (z * z * e3);
            zacc += psi_eval(ctx, 1 / z) * std::conj(psi_eval(ctx, z * z * rr)) *
                    lsi(pl, qb, bd);
          }
          acc += chi * zacc * dp(-pl.Ez);
        }
      }
  acc *= measA * wk;
  if (std::getenv("BK_Y_DEBUG")) {
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - dbg_t0)
            .count();
    if (dt > 0.01)
      std::fprintf(stderr,
                   "y-cfg m=%d k=(%d,%d,%d) %s Ez=%d Ea=(%d,%d,%d) |v|=%.3g dt=%.3fs\n",
                   m, k[0], k[1], k[2], pl.zmass_mode ? "zmass" : "enum", pl.Ez,
                   pl.Ea[0], pl.Ea[1], pl.Ea[2], std::abs(acc), dt);
  }
  return {acc, false};
}

// Batch form of eval_config: one (z, a) configuration evaluated at every
// marginal triple of the forward grid's rho class at once. out is indexed
// [(m1 * M2 + m2) * M3 + m3] over the per-block marginal lists bxi; returns
// true iff the configuration is provably zero at every point (out untouched).
// All residue histograms, z-shell masses and per-block tables are shared
// across the points; only the final rank-1 contractions see the grid size.
bool YEngine::eval_config_batch(int m, const std::array<int, 3>& k,
                                std::vector<Complex>& out) {
  YConfigPlan pl = plan_config(m, k);
  if (pl.pruned) return true;
  if (m >= c0 + 2 && pl.z_constant) return true;
  const double bnd0 = config_bound(pl, m, k);
  if (bnd0 <= eps_cfg) {
    dropped += bnd0;
    return false;
  }
  ++configs;
  const PAdicContext& ctx = yc->ctx;
  const double wk = dp(pl.sumk);
  const std::array<size_t, 3> M{bxi[0].size(), bxi[1].size(), bxi[2].size()};
  const size_t M1 = M[0], M2 = M[1], M3 = M[2];
  const size_t K1 = blk[0].keys.size(), K2 = blk[1].keys.size(),
               K3 = blk[2].keys.size();
  const double mcost = static_cast<double>(kmatch.size()) * M1 * M2 * M3;

  // weighted accumulation of a rank-1 key-matched table product into out
  auto accumulate = [&](const Complex& w,
                        const std::array<std::vector<Complex>, 3>& U) {
    for (const auto& km : kmatch)
      for (size_t m1 = 0; m1 < M1; ++m1) {
        const Complex c1 = w * U[0][m1 * K1 + km[0]];
        if (c1 == Complex(0.0, 0.0)) continue;
        for (size_t m2 = 0; m2 < M2; ++m2) {
          const Complex c12 = c1 * U[1][m2 * K2 + km[1]];
          if (c12 == Complex(0.0, 0.0)) continue;
          Complex* dst = &out[(m1 * M2 + m2) * M3];
          for (size_t m3 = 0; m3 < M3; ++m3)
            dst[m3] += c12 * U[2][m3 * K3 + km[2]];
        }
      }
  };
  // per-block cell-integral table [mv * K + key] at one (qb, a)
  auto build_u = [&](int i, const Rational& qb,
                     const Rational& a) -> std::vector<Complex> {
    const YBlockCells& b = blk[i];
    const size_t ncell = b.centers.size(), K = b.keys.size();
    std::vector<Complex> u(M[i] * K, Complex(0.0, 0.0));
    std::vector<Rational> bd(b.d);
    for (size_t mv = 0; mv < M[i]; ++mv) {
      for (int j = 0; j < b.d; ++j) bd[j] = bxi[i][mv][b.d - 1 - j] / a;
      for (size_t t = 0; t < ncell; ++t) {
        if (!pl.possible[i][mv * ncell + t]) continue;
        Complex prod = b.coeffs[t];
        for (int x = 0; x < b.d / 2 && prod != Complex(0.0, 0.0); ++x) {
          const int y = b.d - 1 - x;
          prod *= hyperbolic_cell_integral(ctx, qb, bd[x], bd[y],
                                           b.centers[t][x], b.centers[t][y],
                                           b.L);
        }
        u[mv * K + b.keyidx[t]] += prod;
      }
    }
    return u;
  };

  if (pl.unified && pl.Dmax == 0) {
    const double uf = 1.0 - 1.0 / static_cast<double>(p);
    const double zr = zram(m);
    if (zr == 0.0) return true;
    double chik = 1.0;
    for (int i = 0; i < 3; ++i)
      chik *= chi_Q(*blk[i].space, pow_p(p, k[i]), ctx);
    const Complex w(wk * chik * detail::y_w_fast(p, c0, m, k) * (zr / uf) *
                        dp(2 * N),
                    0.0);
    std::array<std::vector<Complex>, 3> B;  // [mv * K + key], plain cell masses
    for (int i = 0; i < 3; ++i) {
      const YBlockCells& b = blk[i];
      const double vol = dp(-b.d * b.L);
      const size_t ncell = b.centers.size(), K = b.keys.size();
      B[i].assign(M[i] * K, Complex(0.0, 0.0));
      for (size_t mv = 0; mv < M[i]; ++mv)
        for (size_t t = 0; t < ncell; ++t)
          if (pl.possible[i][mv * ncell + t])
            B[i][mv * K + b.keyidx[t]] += b.coeffs[t] * vol;
    }
    accumulate(w, B);
    return false;
  }

  if (pl.unified) {
    auto ceil2 = [](int n) { return (n >= 0) ? (n + 1) / 2 : -((-n) / 2); };
    const int Eb =
        std::max({1, pl.Dmax, ceil2(c0 - 2 * m + pl.sumk) - pl.minpair});
    const double ucost = dp(2 * Eb) + dp(pl.Dmax) * mcost;
    if (ucost > kYHistBudget || (ucost > 1.0e6 && bnd0 <= eps_mid)) {
      dropped += bnd0;
      if (std::getenv("BK_Y_DEBUG"))
        std::fprintf(stderr,
                     "y-batch-drop m=%d k=(%d,%d,%d) D=%d Eb=%d cost=%.3g bound=%.3g\n",
                     m, k[0], k[1], k[2], pl.Dmax, Eb, ucost, bnd0);
      return false;
    }
    const YResidueData rd = residue_data(pl, m, k);
    const int UD = rd.UD;
    const long PD = rd.PD;
    // B_i[(ri * M_i + mv) * K_i + key]: chi and cell integrals per a-residue
    const Rational qb0 = -rho / pow_p(p, 2 * m + pl.sumk);
    std::array<std::vector<Complex>, 3> B;
    for (int i = 0; i < 3; ++i) {
      const YBlockCells& b = blk[i];
      const size_t ncell = b.centers.size(), K = b.keys.size();
      B[i].assign(static_cast<size_t>(UD) * M[i] * K, Complex(0.0, 0.0));
      for (int ri = 0; ri < UD; ++ri) {
        const Rational a = Rational(rd.rval(ri)) * pow_p(p, k[i]);
        const double chi = chi_Q(*b.space, a, ctx);
        std::vector<Rational> bd(b.d);
        for (size_t mv = 0; mv < M[i]; ++mv) {
          for (int j = 0; j < b.d; ++j) bd[j] = bxi[i][mv][b.d - 1 - j] / a;
          for (size_t t = 0; t < ncell; ++t) {
            if (!pl.possible[i][mv * ncell + t]) continue;
            Complex prod = b.coeffs[t] * chi;
            for (int x = 0; x < b.d / 2 && prod != Complex(0.0, 0.0); ++x) {
              const int y = b.d - 1 - x;
              prod *= hyperbolic_cell_integral(ctx, qb0, bd[x], bd[y],
                                               b.centers[t][x],
                                               b.centers[t][y], b.L);
            }
            B[i][(static_cast<size_t>(ri) * M[i] + mv) * K + b.keyidx[t]] +=
                prod;
          }
        }
      }
    }
    auto bin_of = [&](int r, long ir3) -> int {
      return PD == 1 ? 0 : rd.uidx[(rd.unitsD[r] * ir3) % PD];
    };
    const Complex scale(dp(2 * N + pl.sumk), 0.0);
    std::vector<Complex> A3(static_cast<size_t>(UD) * UD * M3);
    std::vector<Complex> A2(static_cast<size_t>(UD) * M2 * M3);
    for (const auto& km : kmatch) {
      std::fill(A3.begin(), A3.end(), Complex(0.0, 0.0));
      for (int r3 = 0; r3 < UD; ++r3) {
        const long ir3 = (PD == 1) ? 1 : inv_mod_long(rd.unitsD[r3], PD);
        for (int r1 = 0; r1 < UD; ++r1)
          for (int r2 = 0; r2 < UD; ++r2) {
            const Complex v = rd.V[(static_cast<size_t>(bin_of(r1, ir3)) * UD +
                                    bin_of(r2, ir3)) * UD + r3];
            if (v == Complex(0.0, 0.0)) continue;
            Complex* row = &A3[(static_cast<size_t>(r1) * UD + r2) * M3];
            for (size_t m3 = 0; m3 < M3; ++m3)
              row[m3] +=
                  v * B[2][(static_cast<size_t>(r3) * M3 + m3) * K3 + km[2]];
          }
      }
      std::fill(A2.begin(), A2.end(), Complex(0.0, 0.0));
      for (int r1 = 0; r1 < UD; ++r1)
        for (int r2 = 0; r2 < UD; ++r2) {
          const Complex* row = &A3[(static_cast<size_t>(r1) * UD + r2) * M3];
          for (size_t m2 = 0; m2 < M2; ++m2) {
            const Complex b2 =
                B[1][(static_cast<size_t>(r2) * M2 + m2) * K2 + km[1]];
            if (b2 == Complex(0.0, 0.0)) continue;
            Complex* dst = &A2[(static_cast<size_t>(r1) * M2 + m2) * M3];
            for (size_t m3 = 0; m3 < M3; ++m3) dst[m3] += b2 * row[m3];
          }
        }
      for (int r1 = 0; r1 < UD; ++r1) {
        const Complex* src = &A2[static_cast<size_t>(r1) * M2 * M3];
        for (size_t m1 = 0; m1 < M1; ++m1) {
          const Complex b1 =
              scale * B[0][(static_cast<size_t>(r1) * M1 + m1) * K1 + km[0]];
          if (b1 == Complex(0.0, 0.0)) continue;
          Complex* dst = &out[m1 * M2 * M3];
          for (size_t c = 0; c < M2 * M3; ++c) dst[c] += b1 * src[c];
        }
      }
    }
    return false;
  }

  // honest representative loops (z-coupled configurations): per-block tables
  // are rebuilt per (a, z) but shared across all points.
  double inner = 0.0;
  for (int i = 0; i < 3; ++i) {
    long live = 0;
    for (char c : pl.possible[i]) live += c;
    inner += static_cast<double>(live) * (blk[i].d / 2);
  }
  const double zcnt = pl.zmass_mode ? 1.0 : dp(pl.Ez) * (1.0 - 1.0 / p);
  double acnt = 1.0;
  for (int i = 0; i < 3; ++i) acnt *= dp(pl.Ea[i]) * (1.0 - 1.0 / p);
  if (zcnt * acnt * (inner + mcost) > kYHistBudget) {
    dropped += bnd0;
    if (std::getenv("BK_Y_DEBUG"))
      std::fprintf(stderr,
                   "y-batch-drop m=%d k=(%d,%d,%d) Ez=%d Ea=(%d,%d,%d) cost=%.3g bound=%.3g\n",
                   m, k[0], k[1], k[2], pl.Ez, pl.Ea[0], pl.Ea[1], pl.Ea[2],
                   zcnt * acnt * (inner + mcost), bnd0);
    return false;
  }
  struct BRep {
    Rational a;
    double chi;
  };
  std::array<std::vector<BRep>, 3> reps;
  for (int i = 0; i < 3; ++i) {
    const long P = pow_long(p, pl.Ea[i]);
    const Rational pk = pow_p(p, k[i]);
    for (long r = 1; r < P; ++r) {
      if (r % p == 0) continue;
      const Rational a = Rational(r) * pk;
      reps[i].push_back(
          {a, static_cast<double>(chi_Q(*blk[i].space, a, ctx))});
    }
  }
  double measA = 1.0;
  for (int i = 0; i < 3; ++i) measA *= dp(-pl.Ea[i]);
  std::vector<long> zreps;
  if (!pl.zmass_mode) {
    const long P = pow_long(p, pl.Ez);
    for (long r = 1; r < P; ++r)
      if (r % p != 0) zreps.push_back(r);
  }
  const Rational pm = pow_p(p, m), p2m = pow_p(p, 2 * m);
  const double base = measA * wk * dp(2 * N);
  for (const BRep& a0 : reps[0])
    for (const BRep& a1 : reps[1])
      for (const BRep& a2 : reps[2]) {
        const Rational e3 = a0.a * a1.a * a2.a;
        const Rational e2 = a0.a * a1.a + a1.a * a2.a + a2.a * a0.a;
        const Rational rr = (e2 == 0) ? Rational(0) : e2 * e2 / e3;
        const double chi = a0.chi * a1.chi * a2.chi;
        if (pl.zmass_mode) {
          const Rational qb = -rho / (p2m * e3);
          const Complex w = y_zmass(ctx, m, rr) * (chi * base);
          if (w != Complex(0.0, 0.0))
            accumulate(w, {build_u(0, qb, a0.a), build_u(1, qb, a1.a),
                           build_u(2, qb, a2.a)});
        } else {
          for (long zu : zreps) {
            const Rational z = Rational(zu) * pm;
            const Rational qb = -rho / (z * z * e3);
            const Complex w = psi_eval(ctx, 1 / z) *
                              std::conj(psi_eval(ctx, z * z * rr)) *
                              (chi * base * dp(-pl.Ez));
            accumulate(w, {build_u(0, qb, a0.a), build_u(1, qb, a1.a),
                           build_u(2, qb, a2.a)});
          }
        }
      }
  return false;
}

double YEngine::fscale() const {
  double s = dp(2 * N);
  if (grid_mode) return s * gabs * dp(-sum_dL());
  for (int i = 0; i < 3; ++i) {
    double b = 0.0;
    for (const Complex& c : blk[i].coeffs) b += std::abs(c);
    s *= b * dp(-blk[i].d * blk[i].L);
  }
  return s;
}

YBlockCells build_y_block(const SBFunction& f, const QuadraticSpace& sp, int N,
                          long p) {
  YBlockCells b;
  b.space = &sp;
  b.d = checked_split_block(sp, "y_transform");
  if (f.dim() != b.d)
    throw std::invalid_argument("y_transform: block dimension mismatch");
  int vcmin = 0;
  for (int j = 0; j < b.d; ++j) vcmin = std::min(vcmin, f.min_val_bound(j));
  b.L = std::max({f.max_level(), N - vcmin, (N + 1) / 2, 1});
  SBFunction g = f.canonicalized(b.L);
  for (const SBTerm& t : g.terms()) {
    b.centers.push_back(t.center);
    b.coeffs.push_back(t.coeff);
    const Rational key = canonical_mod(sp.gram().quad(t.center), p, N);
    int idx = -1;
    for (size_t i = 0; i < b.keys.size(); ++i)
      if (b.keys[i] == key) { idx = static_cast<int>(i); break; }
    if (idx < 0) {
      idx = static_cast<int>(b.keys.size());
      b.keys.push_back(key);
    }
    b.keyidx.push_back(idx);
    std::vector<int> v(b.d);
    for (int j = 0; j < b.d; ++j) v[j] = val_or_inf(t.center[j], p);
    b.vc.push_back(std::move(v));
  }
  // unramified chi_Q: trivial on units
  Rational g0(1);
  for (long r = 2; r < p; ++r)
    if (legendre_unit(Rational(r), p) == -1) { g0 = Rational(r); break; }
  PAdicContext cx(p, 0);
  b.chi_unit_trivial = (p == 2) || (chi_Q(sp, g0, cx) == 1);
  return b;
}

void init_engine_point(YEngine& E, const YContext& yc,
                       const std::vector<Rational>& xi_full,
                       const Rational& rho) {
  E.yc = &yc;
  E.p = yc.ctx.p;
  E.c0 = static_cast<int>(yc.ctx.psi_conductor);
  E.N = std::max(1, yc.refinement);
  E.Ka = std::max(0, yc.a_radius);
  E.rho = rho;
  E.vrho = valuation(rho, E.p);
  size_t off = 0;
  for (int i = 0; i < 3; ++i) {
    const int d = yc.spaces[i].dim();
    E.xi[i].assign(xi_full.begin() + off, xi_full.begin() + off + d);
    E.vxi[i].resize(d);
    for (int j = 0; j < d; ++j) E.vxi[i][j] = val_or_inf(E.xi[i][j], E.p);
    off += d;
  }
}

YResult y_run(YEngine& E) {
  const YContext& yc = *E.yc;
  const int c0 = E.c0, Ka = E.Ka;
  // Threshold beyond which every positive shell's valuation pattern is past
  // all branch/tie crossings, so pruned/Ramanujan statuses persist.
  int vspread = std::abs(E.vrho);
  for (int i = 0; i < 3; ++i) {
    for (int v : E.vxi[i])
      if (v < kValInfinity) vspread = std::max(vspread, std::abs(v));
    for (const auto& vs : E.blk[i].vc)
      for (int v : vs)
        if (v < kValInfinity) vspread = std::max(vspread, std::abs(v));
  }
  int lmax = 0;
  for (int i = 0; i < 3; ++i) lmax = std::max(lmax, E.blk[i].L);
  const int mstar = std::min(40, c0 + 2 + 3 * Ka + 2 * lmax + 2 * vspread + 6);
  E.eps_cfg = 1e-7 * yc.tol * E.fscale();
  E.eps_mid = 3e-6 * yc.tol * E.fscale();

  auto for_k_box = [&](int radius, const std::function<void(const std::array<int, 3>&)>& fn) {
    std::array<int, 3> k;
    for (k[0] = -radius; k[0] <= radius; ++k[0])
      for (k[1] = -radius; k[1] <= radius; ++k[1])
        for (k[2] = -radius; k[2] <= radius; ++k[2]) fn(k);
  };
  auto proven_shell = [&](int m) -> bool {
    bool all = true;
    for_k_box(Ka, [&](const std::array<int, 3>& k) {
      if (!all) return;
      YConfigPlan pl = E.plan_config(m, k);
      all = pl.pruned || (m >= c0 + 2 && pl.z_constant);
    });
    return all;
  };

  int pos_next = 0, neg_next = -1;
  bool pos_done = false, neg_done = false, take_pos = true, pos_proven = false;
  auto shell = [&](int) -> ShellTerm {
    if (pos_done && neg_done) return {Complex(0.0, 0.0), true, false};
    bool positive;
    if (pos_done)
      positive = false;
    else if (neg_done)
      positive = true;
    else {
      positive = take_pos;
      take_pos = !take_pos;
    }
    const int m = positive ? pos_next++ : neg_next--;
    if (positive && m >= c0 + 2) {
      bool all = true;
      for (int mm = m; all && mm <= mstar; ++mm) all = proven_shell(mm);
      if (all) {
        pos_done = pos_proven = true;
        return {Complex(0.0, 0.0), true, false};
      }
    }
    Complex tot(0.0, 0.0);
    bool all_zero = true;
    for_k_box(Ka, [&](const std::array<int, 3>& k) {
      auto out = E.eval_config(m, k);
      tot += out.first;
      all_zero = all_zero && out.second;
    });
    // a-shells outside the box: evaluate rings until their rigorous bound is
    // negligible, then accept a geometric remainder.
    const double ring_eps = 1e-4 * yc.tol * E.fscale();
    double ring_last = 0.0;
    bool ring_ok = false;
    for (int R = Ka + 1; R <= Ka + 24; ++R) {
      double ring = 0.0;
      for_k_box(R, [&](const std::array<int, 3>& k) {
        if (std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2])}) != R)
          return;
        YConfigPlan pl = E.plan_config(m, k);
        if (pl.pruned) return;
        if (m >= c0 + 2 && pl.z_constant) return;
        ring += E.config_bound(pl, m, k);
      });
      ring_last = ring;
      if (ring <= ring_eps) { ring_ok = true; break; }
      Complex rtot(0.0, 0.0);
      for_k_box(R, [&](const std::array<int, 3>& k) {
        if (std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2])}) != R)
          return;
        auto out = E.eval_config(m, k);
        rtot += out.first;
      });
      tot += rtot;
      all_zero = all_zero && rtot == Complex(0.0, 0.0);
    }
    if (ring_ok)
      E.dropped += 2.0 * ring_last;  // geometric remainder of the a-tail
    else
      E.dropped += 4.0 * ring_last;
    return {tot, all_zero && tot == Complex(0.0, 0.0), false};
  };

  PvResult pv = pv_integral(shell, yc.z_policy, yc.tol);
  YResult res;
  res.value = pv.value * yc.c_constant;
  res.report.z_status = pv.status;
  res.report.z_shells = pv.shells_used;
  res.report.configs = E.configs;
  // tol is absolute at the transform's natural scale (as in the pv deltas)
  const double scale = std::max(std::abs(pv.value), E.fscale());
  res.report.a_truncated = (E.dropped > 0.5 * yc.tol * scale);
  if (std::getenv("BK_Y_DEBUG"))
    std::fprintf(stderr,
                 "y-run value=%.6g dropped=%.3g scale=%.3g shells=%d status=%d configs=%ld\n",
                 std::abs(pv.value), E.dropped, scale, pv.shells_used,
                 static_cast<int>(pv.status), E.configs);
  return res;
}

}  // namespace

Rational y_point_value(const YContext& yc, const std::vector<Rational>& xi) {
  size_t dim = 0;
  for (int i = 0; i < 3; ++i) dim += yc.spaces[i].dim();
  if (xi.size() != dim)
    throw std::invalid_argument("y_point_value: dimension mismatch");
  Rational common(0);
  size_t off = 0;
  for (int i = 0; i < 3; ++i) {
    const int d = yc.spaces[i].dim();
    std::vector<Rational> slice(xi.begin() + off, xi.begin() + off + d);
    const Rational q = yc.spaces[i].gram().quad(slice);
    if (i == 0)
      common = q;
    else if (q != common)
      throw std::invalid_argument("y_point_value: point is off Y");
    off += d;
  }
  return common;
}

YResult y_transform(const YContext& yc, const YProduct& f,
                    const std::vector<Rational>& xi) {
  require_unramified_psi(yc.ctx, "y_transform");
  if (yc.ctx.p == 2)
    throw std::invalid_argument("y_transform: requires odd residual characteristic");
  const Rational rho = y_point_value(yc, xi);
  if (rho == 0)
    throw std::invalid_argument("y_transform: xi must be anisotropic (Q(xi) != 0)");
  for (int i = 0; i < 3; ++i)
    if (f[i].empty())
      return {Complex(0.0, 0.0), {ShellStatus::ProvenVanishing, 0, false, 0}};
  YEngine E;
  init_engine_point(E, yc, xi, rho);
  for (int i = 0; i < 3; ++i) {
    if (f[i].prime() != yc.ctx.p)
      throw std::invalid_argument("y_transform: prime mismatch");
    E.blk[i] = build_y_block(f[i], yc.spaces[i], E.N, E.p);
  }
  for (size_t i0 = 0; i0 < E.blk[0].keys.size(); ++i0)
    for (size_t i1 = 0; i1 < E.blk[1].keys.size(); ++i1) {
      if (E.blk[0].keys[i0] != E.blk[1].keys[i1]) continue;
      for (size_t i2 = 0; i2 < E.blk[2].keys.size(); ++i2)
        if (E.blk[0].keys[i0] == E.blk[2].keys[i2])
          E.kmatch.push_back({static_cast<int>(i0), static_cast<int>(i1),
                              static_cast<int>(i2)});
    }
  if (E.kmatch.empty())
    return {Complex(0.0, 0.0), {ShellStatus::ProvenVanishing, 0, false, 0}};
  return y_run(E);
}

namespace detail {

// test hook: one (z-shell, a-shell) configuration value, optionally via the
// direct representative loops instead of the reduced fast path.
Complex y_eval_config(const YContext& yc, const YProduct& f,
                      const std::vector<Rational>& xi, int m,
                      const std::array<int, 3>& k, bool force_honest) {
  const Rational rho = y_point_value(yc, xi);
  YEngine E;
  init_engine_point(E, yc, xi, rho);
  E.force_honest = force_honest;
  for (int i = 0; i < 3; ++i)
    E.blk[i] = build_y_block(f[i], yc.spaces[i], E.N, E.p);
  for (size_t i0 = 0; i0 < E.blk[0].keys.size(); ++i0)
    for (size_t i1 = 0; i1 < E.blk[1].keys.size(); ++i1) {
      if (E.blk[0].keys[i0] != E.blk[1].keys[i1]) continue;
      for (size_t i2 = 0; i2 < E.blk[2].keys.size(); ++i2)
        if (E.blk[0].keys[i0] == E.blk[2].keys[i2])
          E.kmatch.push_back({static_cast<int>(i0), static_cast<int>(i1),
                              static_cast<int>(i2)});
    }
  if (E.kmatch.empty()) return Complex(0.0, 0.0);
  return E.eval_config(m, k).first;
}

}  // namespace detail

namespace {

struct YGridCand {
  std::vector<Rational> c;  // raw box center at resolution p^{-box_exp}
  Rational key, q;
  int piv = -1;  // first unit coordinate (by dual index); -1 = unusable
};

std::array<std::vector<YGridCand>, 3> y_grid_candidates(const YContext& yc,
                                                        int box_exp,
                                                        const char* where) {
  const long p = yc.ctx.p;
  const int N = std::max(1, yc.refinement);
  std::array<std::vector<YGridCand>, 3> cand;
  for (int i = 0; i < 3; ++i) {
    const int d = checked_split_block(yc.spaces[i], where);
    long side = 1;
    for (int e = 0; e < N + box_exp; ++e) side *= p;
    const Rational step = pow_p(p, -box_exp);
    long total = 1;
    for (int j = 0; j < d; ++j) total *= side;
    for (long it = 0; it < total; ++it) {
      YGridCand bc;
      bc.c.resize(d);
      long rem = it;
      for (int j = 0; j < d; ++j) {
        bc.c[j] = Rational(rem % side) * step;
        rem /= side;
      }
      bc.q = yc.spaces[i].gram().quad(bc.c);
      bc.key = canonical_mod(bc.q, p, N);
      for (int j = 0; j < d; ++j)
        if (bc.c[d - 1 - j] != 0 && valuation(bc.c[d - 1 - j], p) == 0) {
          bc.piv = j;
          break;
        }
      cand[i].push_back(std::move(bc));
    }
  }
  return cand;
}

// exact on-Y lift: shift the pivot coordinate so Q hits the target value
std::vector<Rational> y_adjust_cand(const YGridCand& bc,
                                    const Rational& target) {
  std::vector<Rational> c = bc.c;
  const int d = static_cast<int>(c.size());
  c[bc.piv] += (target - bc.q) / c[d - 1 - bc.piv];
  return c;
}

// Batch analogue of y_run: the same shell schedule (alternating z-shells,
// positive-tail vanishing scan, adaptive a-rings) with per-point sums and a
// per-point replication of the pv stopping rule. Shell deltas are absolute
// against tol, matching pv_integral; a point freezes as Stabilized once its
// last `window` deltas are quiet and not all provably exact.
std::vector<Complex> y_run_batch(YEngine& E, YReport& rep) {
  const YContext& yc = *E.yc;
  const int c0 = E.c0, Ka = E.Ka;
  int vspread = std::abs(E.vrho);
  for (int i = 0; i < 3; ++i) {
    for (const auto& vs : E.bvxi[i])
      for (int v : vs)
        if (v < kValInfinity) vspread = std::max(vspread, std::abs(v));
    for (const auto& vs : E.blk[i].vc)
      for (int v : vs)
        if (v < kValInfinity) vspread = std::max(vspread, std::abs(v));
  }
  int lmax = 0;
  for (int i = 0; i < 3; ++i) lmax = std::max(lmax, E.blk[i].L);
  const int mstar = std::min(40, c0 + 2 + 3 * Ka + 2 * lmax + 2 * vspread + 6);
  E.eps_cfg = 1e-7 * yc.tol * E.fscale();
  E.eps_mid = 3e-6 * yc.tol * E.fscale();
  const size_t npts = E.bxi[0].size() * E.bxi[1].size() * E.bxi[2].size();

  auto for_k_box = [&](int radius,
                       const std::function<void(const std::array<int, 3>&)>& fn) {
    std::array<int, 3> k;
    for (k[0] = -radius; k[0] <= radius; ++k[0])
      for (k[1] = -radius; k[1] <= radius; ++k[1])
        for (k[2] = -radius; k[2] <= radius; ++k[2]) fn(k);
  };
  auto proven_shell = [&](int m) -> bool {
    bool all = true;
    for_k_box(Ka, [&](const std::array<int, 3>& k) {
      if (!all) return;
      YConfigPlan pl = E.plan_config(m, k);
      all = pl.pruned || (m >= c0 + 2 && pl.z_constant);
    });
    return all;
  };

  int pos_next = 0, neg_next = -1;
  bool pos_done = false, take_pos = true;
  // one shell for all points; exact = every configuration provably zero
  std::vector<Complex> tot(npts);
  auto shell = [&](std::vector<Complex>& out) -> bool {
    std::fill(out.begin(), out.end(), Complex(0.0, 0.0));
    bool positive;
    if (pos_done) {
      positive = false;
    } else {
      positive = take_pos;
      take_pos = !take_pos;
    }
    const int m = positive ? pos_next++ : neg_next--;
    if (positive && m >= c0 + 2) {
      bool all = true;
      for (int mm = m; all && mm <= mstar; ++mm) all = proven_shell(mm);
      if (all) {
        pos_done = true;
        return true;
      }
    }
    bool all_zero = true;
    for_k_box(Ka, [&](const std::array<int, 3>& k) {
      all_zero = E.eval_config_batch(m, k, out) && all_zero;
    });
    const double ring_eps = 1e-4 * yc.tol * E.fscale();
    double ring_last = 0.0;
    bool ring_ok = false;
    for (int R = Ka + 1; R <= Ka + 24; ++R) {
      double ring = 0.0;
      for_k_box(R, [&](const std::array<int, 3>& k) {
        if (std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2])}) != R)
          return;
        YConfigPlan pl = E.plan_config(m, k);
        if (pl.pruned) return;
        if (m >= c0 + 2 && pl.z_constant) return;
        ring += E.config_bound(pl, m, k);
      });
      ring_last = ring;
      if (ring <= ring_eps) { ring_ok = true; break; }
      for_k_box(R, [&](const std::array<int, 3>& k) {
        if (std::max({std::abs(k[0]), std::abs(k[1]), std::abs(k[2])}) != R)
          return;
        all_zero = E.eval_config_batch(m, k, out) && all_zero;
      });
    }
    E.dropped += (ring_ok ? 2.0 : 4.0) * ring_last;
    return all_zero;
  };

  const TruncationPolicy& policy = yc.z_policy;
  const int window = std::max(1, policy.window);
  std::vector<Complex> sums(npts, Complex(0.0, 0.0));
  std::vector<char> frozen(npts, 0);
  size_t nfrozen = 0;
  // rolling window of the last `window` shells: per-point deltas + exactness
  std::deque<std::pair<std::vector<double>, bool>> hist;
  int shells = 0;
  for (int j = 0; j <= policy.max_shell && nfrozen < npts; ++j) {
    const bool exact = shell(tot);
    shells = j + 1;
    for (size_t pt = 0; pt < npts; ++pt)
      if (!frozen[pt]) sums[pt] += tot[pt];
    std::vector<double> ds(npts);
    for (size_t pt = 0; pt < npts; ++pt) ds[pt] = std::abs(tot[pt]);
    hist.emplace_back(std::move(ds), exact);
    if (static_cast<int>(hist.size()) > window) hist.pop_front();
    if (static_cast<int>(hist.size()) < window) continue;
    bool all_exact = true;
    for (const auto& h : hist) all_exact = all_exact && h.second;
    if (all_exact) continue;  // keep scanning for a vanishing proof
    for (size_t pt = 0; pt < npts; ++pt) {
      if (frozen[pt]) continue;
      bool quiet = true;
      for (const auto& h : hist) quiet = quiet && h.first[pt] <= yc.tol;
      if (quiet) {
        frozen[pt] = 1;
        ++nfrozen;
      }
    }
  }
  ShellStatus worst = ShellStatus::Stabilized;
  if (nfrozen < npts) {
    // budget exhausted: unfrozen points are Stabilized only if quiet
    for (size_t pt = 0; pt < npts && worst != ShellStatus::Truncated; ++pt) {
      if (frozen[pt]) continue;
      bool quiet = static_cast<int>(hist.size()) >= window;
      for (const auto& h : hist) quiet = quiet && h.first[pt] <= yc.tol;
      if (!quiet) worst = ShellStatus::Truncated;
    }
  }
  rep.z_status = std::max(rep.z_status, worst,
                          [](ShellStatus a, ShellStatus b) {
                            return static_cast<int>(a) < static_cast<int>(b);
                          });
  rep.z_shells = std::max(rep.z_shells, shells);
  rep.configs += E.configs;
  const double floor = E.fscale();  // tol is absolute at the transform scale
  for (size_t pt = 0; pt < npts; ++pt) {
    const double scale = std::max(std::abs(sums[pt]), floor);
    if (E.dropped > 0.5 * yc.tol * scale) rep.a_truncated = true;
  }
  if (std::getenv("BK_Y_DEBUG"))
    std::fprintf(stderr,
                 "y-batch rho-class pts=%zu shells=%d dropped=%.3g configs=%ld status=%d\n",
                 npts, shells, E.dropped, E.configs, static_cast<int>(worst));
  for (size_t pt = 0; pt < npts; ++pt) sums[pt] *= yc.c_constant;
  return sums;
}

}  // namespace

YGrid make_y_grid(const YContext& yc, int box_exp,
                  const std::function<Complex(const std::vector<Rational>&)>& g) {
  const long p = yc.ctx.p;
  const int N = std::max(1, yc.refinement);
  YGrid grid;
  grid.level = N;
  grid.box_exp = box_exp;
  const auto cand = y_grid_candidates(yc, box_exp, "make_y_grid");
  const Rational pN = pow_p(p, N);
  for (const YGridCand& b0 : cand[0])
    for (const YGridCand& b1 : cand[1]) {
      if (b1.key != b0.key) continue;
      for (const YGridCand& b2 : cand[2]) {
        if (b2.key != b0.key) continue;
        if (b0.piv < 0 || b1.piv < 0 || b2.piv < 0) continue;
        const Rational target = (b0.key == 0) ? pN : b0.key;
        std::vector<Rational> center;
        for (const YGridCand* bc : {&b0, &b1, &b2}) {
          const std::vector<Rational> c = y_adjust_cand(*bc, target);
          center.insert(center.end(), c.begin(), c.end());
        }
        grid.values.push_back(g(center));
        grid.centers.push_back(std::move(center));
      }
    }
  return grid;
}

YGrid y_forward_grid(const YContext& yc, const YProduct& f, int box_exp,
                     YReport* report) {
  require_unramified_psi(yc.ctx, "y_forward_grid");
  if (yc.ctx.p == 2)
    throw std::invalid_argument("y_forward_grid: requires odd residual characteristic");
  const long p = yc.ctx.p;
  const int N = std::max(1, yc.refinement);
  YGrid grid;
  grid.level = N;
  grid.box_exp = box_exp;
  const auto cand = y_grid_candidates(yc, box_exp, "y_forward_grid");
  const Rational pN = pow_p(p, N);
  YReport rep;
  rep.z_status = ShellStatus::ProvenVanishing;

  bool empty = false;
  std::array<YBlockCells, 3> blk;
  std::vector<std::array<int, 3>> kmatch;
  for (int i = 0; i < 3; ++i) empty = empty || f[i].empty();
  if (!empty) {
    for (int i = 0; i < 3; ++i) {
      if (f[i].prime() != p)
        throw std::invalid_argument("y_forward_grid: prime mismatch");
      blk[i] = build_y_block(f[i], yc.spaces[i], N, p);
    }
    for (size_t i0 = 0; i0 < blk[0].keys.size(); ++i0)
      for (size_t i1 = 0; i1 < blk[1].keys.size(); ++i1) {
        if (blk[0].keys[i0] != blk[1].keys[i1]) continue;
        for (size_t i2 = 0; i2 < blk[2].keys.size(); ++i2)
          if (blk[0].keys[i0] == blk[2].keys[i2])
            kmatch.push_back({static_cast<int>(i0), static_cast<int>(i1),
                              static_cast<int>(i2)});
      }
  }
  const bool zero_out = empty || kmatch.empty();

  // one rho class per distinct grid key; marginals keep candidate order
  struct ClassData {
    std::array<std::vector<int>, 3> idx;
    std::array<std::vector<std::vector<Rational>>, 3> pts;
    std::vector<Complex> vals;
  };
  std::map<Rational, ClassData> classes;
  for (int i = 0; i < 3; ++i)
    for (size_t t = 0; t < cand[i].size(); ++t)
      if (cand[i][t].piv >= 0)
        classes[cand[i][t].key].idx[i].push_back(static_cast<int>(t));
  for (auto& [key, cd] : classes) {
    if (cd.idx[0].empty() || cd.idx[1].empty() || cd.idx[2].empty()) continue;
    const Rational target = (key == 0) ? pN : key;
    size_t npts = 1;
    for (int i = 0; i < 3; ++i) {
      for (int t : cd.idx[i])
        cd.pts[i].push_back(y_adjust_cand(cand[i][t], target));
      npts *= cd.idx[i].size();
    }
    if (zero_out) {
      cd.vals.assign(npts, Complex(0.0, 0.0));
      continue;
    }
    YEngine E;
    E.yc = &yc;
    E.p = p;
    E.c0 = static_cast<int>(yc.ctx.psi_conductor);
    E.N = N;
    E.Ka = std::max(0, yc.a_radius);
    E.rho = target;
    E.vrho = valuation(target, p);
    E.blk = blk;
    E.kmatch = kmatch;
    E.batch_mode = true;
    for (int i = 0; i < 3; ++i) {
      E.bxi[i] = cd.pts[i];
      for (const auto& slice : cd.pts[i]) {
        std::vector<int> v(slice.size());
        for (size_t j = 0; j < slice.size(); ++j)
          v[j] = val_or_inf(slice[j], p);
        E.bvxi[i].push_back(std::move(v));
      }
    }
    cd.vals = y_run_batch(E, rep);
  }

  // emit in make_y_grid order: b0 outer, then matching (b1, b2)
  for (size_t t0 = 0; t0 < cand[0].size(); ++t0) {
    const YGridCand& b0 = cand[0][t0];
    if (b0.piv < 0) continue;
    auto it = classes.find(b0.key);
    if (it == classes.end()) continue;
    const ClassData& cd = it->second;
    if (cd.idx[1].empty() || cd.idx[2].empty()) continue;
    size_t m1 = 0;
    while (cd.idx[0][m1] != static_cast<int>(t0)) ++m1;
    const size_t M2 = cd.idx[1].size(), M3 = cd.idx[2].size();
    for (size_t m2 = 0; m2 < M2; ++m2)
      for (size_t m3 = 0; m3 < M3; ++m3) {
        std::vector<Rational> center = cd.pts[0][m1];
        center.insert(center.end(), cd.pts[1][m2].begin(),
                      cd.pts[1][m2].end());
        center.insert(center.end(), cd.pts[2][m3].begin(),
                      cd.pts[2][m3].end());
        grid.centers.push_back(std::move(center));
        grid.values.push_back(cd.vals[(m1 * M2 + m2) * M3 + m3]);
      }
  }
  if (report) *report = rep;
  return grid;
}

YResult y_transform_grid(const YContext& yc, const YGrid& grid,
                         const std::vector<Rational>& xi) {
  require_unramified_psi(yc.ctx, "y_transform");
  if (yc.ctx.p == 2)
    throw std::invalid_argument("y_transform: requires odd residual characteristic");
  const Rational rho = y_point_value(yc, xi);
  if (rho == 0)
    throw std::invalid_argument("y_transform: xi must be anisotropic (Q(xi) != 0)");
  if (grid.centers.empty())
    return {Complex(0.0, 0.0), {ShellStatus::ProvenVanishing, 0, false, 0}};
  YEngine E;
  init_engine_point(E, yc, xi, rho);
  E.grid_mode = true;
  E.N = grid.level;
  std::array<std::map<std::vector<Rational>, int>, 3> seen;
  for (int i = 0; i < 3; ++i) {
    E.blk[i].space = &yc.spaces[i];
    E.blk[i].d = checked_split_block(yc.spaces[i], "y_transform_grid");
    E.blk[i].L = grid.level;
    Rational g0(1);
    for (long r = 2; r < E.p; ++r)
      if (legendre_unit(Rational(r), E.p) == -1) { g0 = Rational(r); break; }
    E.blk[i].chi_unit_trivial = (chi_Q(yc.spaces[i], g0, yc.ctx) == 1);
  }
  for (size_t c = 0; c < grid.centers.size(); ++c) {
    std::array<int, 3> idx;
    size_t off = 0;
    for (int i = 0; i < 3; ++i) {
      const int d = E.blk[i].d;
      std::vector<Rational> slice(grid.centers[c].begin() + off,
                                  grid.centers[c].begin() + off + d);
      off += d;
      auto it = seen[i].find(slice);
      if (it == seen[i].end()) {
        it = seen[i].emplace(slice, static_cast<int>(E.blk[i].centers.size()))
                 .first;
        std::vector<int> v(d);
        for (int j = 0; j < d; ++j) v[j] = val_or_inf(slice[j], E.p);
        E.blk[i].vc.push_back(std::move(v));
        E.blk[i].centers.push_back(slice);
      }
      idx[i] = it->second;
    }
    E.gcells.push_back(idx);
    E.gvals.push_back(grid.values[c]);
    E.gsum += grid.values[c];
    E.gabs += std::abs(grid.values[c]);
  }
  return y_run(E);
}

Complex y_pair_integral(const YContext& yc, const YProduct& f,
                        const YProduct& g) {
  const long p = yc.ctx.p;
  const int N = std::max(1, yc.refinement);
  std::array<std::map<Rational, Complex>, 3> keysum;
  for (int i = 0; i < 3; ++i) {
    const int d = checked_split_block(yc.spaces[i], "y_pair_integral");
    if (f[i].empty() || g[i].empty()) return Complex(0.0, 0.0);
    int vcmin = 0;
    for (int j = 0; j < d; ++j)
      vcmin = std::min({vcmin, f[i].min_val_bound(j), g[i].min_val_bound(j)});
    const int L = std::max(
        {f[i].max_level(), g[i].max_level(), N - vcmin, (N + 1) / 2, 1});
    SBFunction fc = f[i].canonicalized(L), gc = g[i].canonicalized(L);
    std::map<std::vector<Rational>, Complex> gmap;
    for (const SBTerm& t : gc.terms()) gmap[t.center] = t.coeff;
    const double vol = std::pow(static_cast<double>(p), -d * L);
    for (const SBTerm& t : fc.terms()) {
      auto it = gmap.find(t.center);
      if (it == gmap.end()) continue;
      const Rational key = canonical_mod(yc.spaces[i].gram().quad(t.center), p, N);
      keysum[i][key] += t.coeff * it->second * vol;
    }
  }
  Complex s(0.0, 0.0);
  for (const auto& [key, u0] : keysum[0]) {
    auto i1 = keysum[1].find(key);
    auto i2 = keysum[2].find(key);
    if (i1 != keysum[1].end() && i2 != keysum[2].end())
      s += u0 * i1->second * i2->second;
  }
  return s * std::pow(static_cast<double>(p), 2 * N);
}

CalibrationReport calibrate_c(
    YContext& yc,
    const std::vector<std::pair<YProduct, std::vector<Rational>>>& probes,
    int box_exp) {
  if (probes.empty())
    throw std::invalid_argument("calibrate_c: needs at least one probe");
  CalibrationReport rep;
  const Complex saved = yc.c_constant;
  yc.c_constant = Complex(1.0, 0.0);
  bool trunc = false;
  const YProduct* grid_f = nullptr;
  YGrid grid;
  auto same_product = [](const YProduct& a, const YProduct& b) {
    for (int i = 0; i < 3; ++i)
      if (!SBFunction::approx_equal(a[i], b[i], 1e-14)) return false;
    return true;
  };
  std::vector<Complex> raw(probes.size()), fval(probes.size());
  for (size_t j = 0; j < probes.size(); ++j) {
    const YProduct& f = probes[j].first;
    const std::vector<Rational>& xi = probes[j].second;
    if (!grid_f || !same_product(*grid_f, f)) {
      YReport grep;
      grid = y_forward_grid(yc, f, box_exp, &grep);
      trunc = trunc || grep.any_truncated();
      grid_f = &f;
    }
    YResult rr = y_transform_grid(yc, grid, xi);
    trunc = trunc || rr.report.any_truncated();
    raw[j] = rr.value;
    Complex v(1.0, 0.0);
    size_t off = 0;
    for (int i = 0; i < 3; ++i) {
      const int d = yc.spaces[i].dim();
      std::vector<Rational> slice(xi.begin() + off, xi.begin() + off + d);
      v *= f[i].value_at(slice);
      off += d;
    }
    fval[j] = v;
  }
  if (raw[0] == Complex(0.0, 0.0))
    throw std::runtime_error("calibrate_c: degenerate calibration probe");
  Complex c = std::sqrt(fval[0] / raw[0]);
  if (c.real() < 0 || (c.real() == 0 && c.imag() < 0)) c = -c;
  rep.c = c;
  for (size_t j = 1; j < probes.size(); ++j) {
    // relative to the probe's sup-norm bound, so off-support points count too
    double fsup = 1.0;
    for (int i = 0; i < 3; ++i) {
      double b = 0.0;
      for (const SBTerm& t : probes[j].first[i].terms())
        b = std::max(b, std::abs(t.coeff));
      fsup *= b;
    }
    const double scale = std::max(std::abs(fval[j]), std::max(fsup, 1e-30));
    rep.max_probe_discrepancy = std::max(
        rep.max_probe_discrepancy, std::abs(c * c * raw[j] - fval[j]) / scale);
  }
  // empirical k = c / (gamma(Q) kappa / (|3| zeta(1))), kappa = 1
  Complex gammaQ(1.0, 0.0);
  for (int i = 0; i < 3; ++i)
    gammaQ *= weil_index_form(yc.spaces[i], Rational(1), yc.ctx);
  const double p = static_cast<double>(yc.ctx.p);
  const double abs3 = std::pow(p, -valuation(Rational(3), yc.ctx.p));
  const double zeta1 = 1.0 / (1.0 - 1.0 / p);
  rep.empirical_k = c * abs3 * zeta1 / gammaQ;
  rep.any_truncated = trunc;
  yc.c_constant = c;
  (void)saved;
  return rep;
}

bool weil_state_close(const WeilState& f, const WeilState& g, double tol) {
  Complex ff = weil_state_pairing(f, f);
  Complex gg = weil_state_pairing(g, g);
  Complex fg = weil_state_pairing(f, g);
  double diff2 = ff.real() + gg.real() - 2.0 * fg.real();
  double scale = std::max(1.0, std::max(ff.real(), gg.real()));
  return diff2 <= tol * tol * scale;
}

}  // namespace bk
