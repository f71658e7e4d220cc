#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bk/laurent.hpp"
#include "bk/padic.hpp"

namespace bk {

/**
 * One product cell with a complex weight: coeff * 1_{prod_j (center_j + p^{level_j} Z_p)}.
 * Centers are canonical representatives mod p^{level_j}.
 */
struct SBTerm {
  std::vector<Rational> center;
  std::vector<int> level;
  Complex coeff;
};

/**
 * Locally constant compactly supported f: Q_p^n -> C as a finite sum of
 * weighted product-cell indicators. Cells may overlap (values add).
 *
 * The spec-level canonical form (single common level, disjoint cosets) is
 * produced by canonicalized(); internal operations keep per-coordinate levels
 * so that block transforms only refine the coordinates they touch.
 */
class SBFunction {
 public:
  SBFunction(long p, int dim) : p_(p), dim_(dim) {}

  long prime() const { return p_; }
  int dim() const { return dim_; }
  bool empty() const { return terms_.empty(); }
  const std::vector<SBTerm>& terms() const { return terms_; }

  // Add coeff * indicator of the product cell; canonicalizes the center.
  void add_term(std::vector<Rational> center, std::vector<int> level, Complex coeff);
  // Convenience for a common level on all coordinates.
  void add_term(std::vector<Rational> center, int level, Complex coeff);

  Complex value_at(const std::vector<Rational>& x) const;

  SBFunction operator+(const SBFunction& o) const;
  SBFunction operator*(Complex c) const;
  SBFunction conjugated() const;

  // Disjoint common-level form: all cells at per-coordinate level K (must be
  // >= every term level), duplicates merged, near-zero coefficients dropped.
  SBFunction canonicalized(int K) const;
  // Smallest K giving the spec's common-level canonical form.
  int max_level() const;
  // Merge exactly-coincident cells without refining.
  void merge_duplicates(double drop_eps = 1e-14);

  // max_j over support of -val(x_j) ("support radius exponent"); 0 for empty.
  int support_norm_exp() const;
  // Lower bound for val(x_j) over the support of coordinate j.
  int min_val_bound(int j) const;

  // L2 inner product <f,g> = sum f conj(g) dx with vol(Z_p^n)=1; exact cells.
  static Complex inner_product(const SBFunction& f, const SBFunction& g);
  static bool approx_equal(const SBFunction& f, const SBFunction& g, double tol);

  // JSON (spec schema: {"prime","dim","level","terms":[{"center",["..."],"coeff"}]}).
  std::string to_json() const;
  static SBFunction from_json(const std::string& text);

 private:
  long p_;
  int dim_;
  std::vector<SBTerm> terms_;
};

/** Symmetric nondegenerate rational Gram matrix; <x,y> = x^T S y, Q = <x,x>/2. */
class GramPairing {
 public:
  explicit GramPairing(std::vector<std::vector<Rational>> S);
  static GramPairing identity(int n);
  static GramPairing antidiagonal(int n);  // J_n

  int dim() const { return static_cast<int>(S_.size()); }
  const std::vector<std::vector<Rational>>& matrix() const { return S_; }
  const std::vector<std::vector<Rational>>& inverse() const { return Sinv_; }
  const Rational& det() const { return det_; }

  Rational pair(const std::vector<Rational>& x, const std::vector<Rational>& y) const;
  Rational quad(const std::vector<Rational>& x) const;  // Q(x) = pair(x,x)/2
  std::vector<Rational> apply(const std::vector<Rational>& x) const;  // S x

 private:
  std::vector<std::vector<Rational>> S_, Sinv_;
  Rational det_;
};

/**
 * Exact Fourier transform f^(t) = integral psi(<t,x>) f(x) dx over the listed
 * coordinates (default: all), with the self-dual measure for (psi,S);
 * conjugate=true gives the inverse kernel psi-bar. Closed form per product
 * cell; dual-lattice cosets enumerated via Smith normal form.
 */
SBFunction fourier_transform(const SBFunction& f, const GramPairing& S,
                             const PAdicContext& ctx,
                             const std::vector<int>& coords = {},
                             bool conjugate = false,
                             long cell_budget = 4000000);
SBFunction inverse_fourier_transform(const SBFunction& g, const GramPairing& S,
                                     const PAdicContext& ctx,
                                     const std::vector<int>& coords = {},
                                     long cell_budget = 4000000);

/** Unramified unit characters supported by zeta_integral / gamma factors. */
enum class UnitChar { Trivial, UnramifiedQuadratic };  // eta(p) = +1 / -1

/**
 * Tate zeta integral Z(f, eta, s) = integral f(x) eta(x) |x|^s d^x as an exact
 * LaurentFraction in X = q^{-s} (d^x = zeta(1) dx/|x|, vol^x(Z_p^x) = 1).
 * Shell aggregates are snapped to exact Gaussian rationals, possibly times
 * sqrt(q) = u (error on failure).
 */
LaurentFraction zeta_integral(const SBFunction& f, UnitChar eta,
                              const PAdicContext& ctx);

/**
 * General quadratic-character form: eta returns +-1 on nonzero rationals and
 * must be multiplicative with conductor exponent `conductor` (0 when trivial
 * on units). Ramified unit parts kill the tail at 0 shell by shell; shells are
 * resolved at max(function level, conductor).
 */
LaurentFraction zeta_integral(const SBFunction& f,
                              const std::function<int(const Rational&)>& eta,
                              int conductor, const PAdicContext& ctx);

// ---------------------------------------------------------------- pv integral

enum class ShellStatus { ProvenVanishing, Stabilized, Truncated };

struct TruncationPolicy {
  int max_shell = 24;
  int window = 3;
};

struct ShellTerm {
  Complex value;
  bool exact_zero = false;           // this shell vanishes exactly
  bool provably_zero_beyond = false; // this and all later shells vanish exactly
};

struct PvResult {
  Complex value{0.0, 0.0};
  ShellStatus status = ShellStatus::Truncated;
  int shells_used = 0;
};

const char* status_name(ShellStatus s);

/**
 * Regularized integral by outward shell summation: shells are supplied by the
 * caller as exact sums, indexed m = 0,1,2,...; status reports whether the tail
 * vanished provably, stabilized within tolerance, or hit the budget.
 */
PvResult pv_integral(const std::function<ShellTerm(int)>& shell,
                     const TruncationPolicy& policy, double tol);

// ------------------------------------------------------- level-set integrals

/** Multivariate polynomial with rational coefficients: sum c * prod x_j^{e_j}. */
struct Polynomial {
  struct Mono {
    Rational coeff;
    std::vector<int> exps;
  };
  std::vector<Mono> monos;
  Rational eval(const std::vector<Rational>& x) const;
};

struct LevelSetResult {
  Complex value{0.0, 0.0};    // estimator at refinement m+1
  Complex coarse{0.0, 0.0};   // estimator at refinement m
  double discrepancy = 0.0;
  int refinement = 0;
  long cells_visited = 0;
};

/**
 * Counting estimator for integral_{p(v)=c} f dmu_c at refinement levels m and
 * m+1: p^{rm} sum over level-m cells with p_i(center) = c_i mod p^m.
 */
LevelSetResult level_set_integral(const SBFunction& f,
                                  const std::vector<Polynomial>& maps,
                                  const std::vector<Rational>& target,
                                  int refinement, const PAdicContext& ctx,
                                  long cell_budget = 30000000);

}  // namespace bk
