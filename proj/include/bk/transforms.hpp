#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "bk/local_factors.hpp"
#include "bk/padic.hpp"
#include "bk/schwartz.hpp"

namespace bk {

// --------------------------------------------------------- phase multipliers

/**
 * f(x) * psi(<ell, x>) as an exact SBFunction (cells refined until the phase
 * is constant per cell). <ell, x> is the plain dot product.
 */
SBFunction multiply_linear_phase(const SBFunction& f,
                                 const std::vector<Rational>& ell,
                                 const PAdicContext& ctx,
                                 long cell_budget = 4000000);

/**
 * f(x) * psi(scale * Q_S(x_coords)) with Q_S(y) = y^T S y / 2 on the listed
 * coordinate block (default: all; S must have dim = #coords).
 */
SBFunction multiply_quadratic_phase(const SBFunction& f, const GramPairing& S,
                                    const Rational& scale,
                                    const PAdicContext& ctx,
                                    const std::vector<int>& coords = {},
                                    long cell_budget = 4000000);

/** g(x) = f(a x), exact cell reindexing (a != 0). */
SBFunction scale_argument(const SBFunction& f, const Rational& a);

// ------------------------------------------------- exact oscillatory kernels

/** integral_{Z_p^2} psi(A x + B y + C x y) dx dy, closed form (psi unramified). */
Complex hyperbolic_pair_integral(const PAdicContext& ctx, const Rational& A,
                                 const Rational& B, const Rational& C);

/**
 * integral over (cx + p^L Z_p) x (cy + p^L Z_p) of psi(alpha x y + bx x + by y).
 */
Complex hyperbolic_cell_integral(const PAdicContext& ctx, const Rational& alpha,
                                 const Rational& bx, const Rational& by,
                                 const Rational& cx, const Rational& cy, int L);

/** integral_{c + p^L Z_p} psi(q x^2 + b x) dx, odd p, closed form. */
Complex square_cell_integral(const PAdicContext& ctx, const Rational& q,
                             const Rational& b, const Rational& c, int L);

// ----------------------------------------------------------------- mu operator

/**
 * Fiber section h on F^x presented with just enough structure for exact shell
 * handling: value(u) is exact at representatives, constant on u(1 + p^j Z_p)
 * for j >= mult_level; optionally compactly supported (|u| <= p^support_exp)
 * and/or constant on the small ball |u| <= p^{-small_exp}.
 */
struct MuFiber {
  std::function<Complex(const Rational&)> value;
  int mult_level = 1;
  bool compact = false;
  int support_exp = 0;
  bool constant_small = false;
  int small_exp = 0;
};

/**
 * The normalizing-operator shell integral at one fiber point x != 0:
 *   integral psi(t) |t|^{s + 1 + delta_exp} h(t^{-lambda} x) d^x t
 * with vol^x(Z_p^x) = 1, evaluated by two-sided pv shell summation with exact
 * Ramanujan-vanishing detection on both tails.
 */
PvResult mu_operator(double s, int lambda, double delta_exp, const MuFiber& h,
                     const Rational& x, const PAdicContext& ctx,
                     const TruncationPolicy& policy = {}, double tol = 1e-9);

// --------------------------------------------------------- Weil representation

/**
 * Generator of one SL2 factor: Upper = n(b) = [[1,b],[0,1]],
 * Diag = m(a) = [[a,0],[0,1/a]], Weyl = w = [[0,1],[-1,0]].
 */
struct WeilMove {
  enum class Kind { Upper, Diag, Weyl };
  Kind kind;
  int factor;       // 0..2
  Rational param;   // unused for Weyl
};

/** Pure-tensor state f = f1 (x) f2 (x) f3 times a scalar. */
struct WeilState {
  std::array<SBFunction, 3> blocks;
  Complex scale{1.0, 0.0};
};

struct WeilRepContext {
  std::array<QuadraticSpace, 3> spaces;  // even-dimensional
  PAdicContext ctx;
  long cell_budget = 4000000;

  WeilRepContext(std::array<QuadraticSpace, 3> sp, PAdicContext c)
      : spaces(std::move(sp)), ctx(c) {}
};

/** Exact 2x2 word products per factor, flattened [[a,b],[c,d]] -> {a,b,c,d}. */
std::array<std::array<Rational, 4>, 3> weil_word_matrices(
    const std::vector<WeilMove>& word);

/**
 * rho(word) f: generators act blockwise -- n(b) multiplies block i by
 * psi(b Q_i(xi)); m(a) sends f_i to chi_{Q_i}(a) |a|^{d_i/2} f_i(a xi);
 * w sends f_i to gamma(Q_i) * Fourier_{S_i}(f_i). If expected is given the
 * word product is checked against it factorwise (exact; throws on mismatch).
 */
WeilState weil_rep_apply(const WeilRepContext& ctx,
                         const std::vector<WeilMove>& word, const WeilState& f,
                         const std::array<std::array<Rational, 4>, 3>* expected =
                             nullptr);

/** <f, g> for pure tensors: product of blockwise L2 pairings times scales. */
Complex weil_state_pairing(const WeilState& f, const WeilState& g);

bool weil_state_close(const WeilState& f, const WeilState& g, double tol);

// --------------------------------------------------------------- cone transform

/**
 * Split cone C = {Q_n = 0} with the antidiagonal Gram J_n; chart coordinates
 * (v_2,...,v_n) with v_1 solved from Q_n = 0 and measure dv_2...dv_n / |v_n|.
 */
struct ConeContext {
  int n;  // ambient dimension, n > 4 even or n > 3 odd
  PAdicContext ctx;
  TruncationPolicy policy{};
  double tol = 1e-9;
  long cell_budget = 40000000;

  ConeContext(int dim, PAdicContext c) : n(dim), ctx(c) {}
};

/** Q_n(v): sum v_i v_{n+1-i} over i <= n/2, plus v_{r+1}^2 / 2 for odd n=2r+1. */
Rational cone_form(int n, const std::vector<Rational>& v);

struct ConeResult {
  Complex value{0.0, 0.0};
  ShellStatus status = ShellStatus::Truncated;
  int shells_used = 0;
};

/**
 * F_C(f)(v') per the explicit formula: outer pv sum over t-shells of
 * psi(t^{-1}) |t|^{(n-4)/2} (even; |t|^{n-3} odd) times the exact inner cone
 * integral of f(v) psi(<v, t v'>) |omega| (<v, t^2 v'> for odd n). The inner
 * integral is exact per cell via hyperbolic/square Gauss closed forms; the
 * chart requires the v_1 and v_n marginals of supp f to avoid 0 (cells with
 * constant valuation), else a budget error is thrown.
 */
ConeResult cone_transform(const ConeContext& ctx, const SBFunction& f,
                          const std::vector<Rational>& v_prime);

/**
 * integral_C f g |omega| by chart cell enumeration with pointwise sampling of
 * g at refinement `extra` below the cells of f (g locally constant there).
 */
Complex cone_pair_integral(const ConeContext& ctx, const SBFunction& f,
                           const std::function<Complex(const std::vector<Rational>&)>& g,
                           int extra);
Complex cone_pair_integral(const ConeContext& ctx, const SBFunction& f,
                           const SBFunction& g);

// ------------------------------------------------------------------ Y transform

/** Pure tensor f = f1 (x) f2 (x) f3 on V = V1 + V2 + V3. */
using YProduct = std::array<SBFunction, 3>;

struct YContext {
  std::array<QuadraticSpace, 3> spaces;  // d_i even, > 2
  PAdicContext ctx;
  int refinement = 1;       // level-set resolution N (u-cells at level N)
  int a_radius = 2;         // |val a_i| <= a_radius before exact-vanishing cutoff
  TruncationPolicy z_policy{8, 2};
  double tol = 1e-3;
  Complex c_constant{1.0, 0.0};  // calibrated scalar; 1 = raw transform

  YContext(std::array<QuadraticSpace, 3> sp, PAdicContext c)
      : spaces(std::move(sp)), ctx(c) {}
};

struct YReport {
  ShellStatus z_status = ShellStatus::Truncated;
  int z_shells = 0;
  bool a_truncated = false;    // large-|a| tail cut by a_radius (decay side)
  long configs = 0;            // (z, a) shell-rep configurations evaluated
  bool any_truncated() const {
    return z_status == ShellStatus::Truncated || a_truncated;
  }
};

struct YResult {
  Complex value{0.0, 0.0};
  YReport report;
};

/** Common quadric value Q_1(xi_1) = Q_2(xi_2) = Q_3(xi_3); throws if off Y. */
Rational y_point_value(const YContext& ctx, const std::vector<Rational>& xi);

/**
 * F_Y(f)(xi) for anisotropic xi via the regularized formula: nested z-shells
 * (pv with stabilization), a-shells over (F^x)^3 (exact small-|a| vanishing,
 * reported large-|a| cutoff), and the inner Y-integral realized as the exact
 * level-set limit of the F^2-regularization at resolution `refinement`.
 * Result is scaled by c_constant.
 */
YResult y_transform(const YContext& ctx, const YProduct& f,
                    const std::vector<Rational>& xi);

/**
 * Grid form of F_Y(f) (or any function) sampled on the level-N Y-cells of the
 * box |u_j| <= p^box_exp: centers with Q_1 = Q_2 = Q_3 mod p^N.
 */
struct YGrid {
  int level = 1;
  int box_exp = 0;
  std::vector<std::vector<Rational>> centers;
  std::vector<Complex> values;
};

YGrid make_y_grid(const YContext& ctx, int box_exp,
                  const std::function<Complex(const std::vector<Rational>&)>& g);

/**
 * F_Y(f) sampled on the whole grid at once: points sharing a Q-residue class
 * reuse every shell's residue histograms and per-block tables, so the full
 * grid costs little more than a handful of single-point transforms. The
 * aggregate report keeps the worst shell status across points.
 */
YGrid y_forward_grid(const YContext& ctx, const YProduct& f, int box_exp,
                     YReport* report = nullptr);

/** F_Y applied to a sampled grid function (used for the double application). */
YResult y_transform_grid(const YContext& ctx, const YGrid& grid,
                         const std::vector<Rational>& xi);

/** integral_Y f g dmu as the level-set counting estimator at resolution N. */
Complex y_pair_integral(const YContext& ctx, const YProduct& f, const YProduct& g);

/**
 * Calibrates c_constant by enforcing F_Y(F_Y(f)) = f on the first probe and
 * validating on the rest; reports the empirical measure constant
 * k = c / (gamma(Q) kappa / (|3| zeta(1))) with kappa = 1 (unramified psi,
 * self-dual lattices -- asserted by the caller's choice of forms).
 */
struct CalibrationReport {
  Complex c{1.0, 0.0};
  Complex empirical_k{0.0, 0.0};
  double max_probe_discrepancy = 0.0;  // relative, across validation probes
  bool any_truncated = false;
};

CalibrationReport calibrate_c(YContext& ctx,
                              const std::vector<std::pair<YProduct, std::vector<Rational>>>& probes,
                              int box_exp = 0);

}  // namespace bk
