#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bk/laurent.hpp"
#include "bk/rational.hpp"

namespace bk {

enum class CartanType { A, B, C, D, E, F, G };

char cartan_type_char(CartanType t);
CartanType cartan_type_from_char(char c);

/**
 * Simple root system in Bourbaki numbering: Cartan matrix, relative root
 * lengths, and all positive roots as coefficient vectors over the simple
 * roots.  cartan(i, j) = <alpha_j, alpha_i^vee> (0-based node indices).
 */
class RootSystem {
 public:
  static RootSystem build(CartanType type, int rank);

  CartanType type() const { return type_; }
  int rank() const { return rank_; }
  int cartan(int i, int j) const { return cartan_[i][j]; }
  const std::vector<std::vector<int>>& positive_roots() const { return roots_; }
  // d_i = (alpha_i, alpha_i)/2 up to one overall scale (exact rationals).
  const std::vector<Rational>& half_lengths() const { return d_; }

  // <gamma, alpha_i^vee> for gamma a coefficient vector (0-based i).
  int simple_coroot_pairing(const std::vector<int>& gamma, int i) const;
  // <x, gamma^vee> for an arbitrary root gamma of the system.
  Rational coroot_pairing(const std::vector<int>& x,
                          const std::vector<int>& gamma) const;

  // Root system with the transposed Cartan matrix (the coroot system),
  // keeping node indices; its Bourbaki relabeling swaps B<->C and reverses
  // the F4 / G2 node order.
  RootSystem dual() const;

  RootSystem() = default;

 private:
  void generate_roots();
  CartanType type_ = CartanType::A;
  int rank_ = 0;
  std::vector<std::vector<int>> cartan_;
  std::vector<Rational> d_;
  std::vector<std::vector<int>> roots_;
};

/** Expected number of positive roots for a given type and rank. */
int positive_root_count(CartanType type, int rank);

/**
 * Maximal parabolic data for a marked node beta (1-based): nilradical roots
 * with their grade c_beta(gamma) and h-eigenvalue against the sum of positive
 * coroots of M.
 */
struct ParabolicDatum {
  RootSystem system;
  int node = 1;  // 1-based Bourbaki label of beta
  std::vector<std::vector<int>> nil_roots;
  std::vector<int> grade;    // c_beta per nilradical root, always >= 1
  std::vector<int> h_eigen;  // e(gamma) per nilradical root

  // grade -> sorted (descending) h-eigenvalue multiset.
  std::map<int, std::vector<int>> graded_eigenvalues() const;
};

ParabolicDatum build_parabolic(CartanType type, int rank, int node);

/** Per grade i, the multiset of sl2 highest weights n (descending). */
using Sl2Content = std::map<int, std::vector<int>>;

Sl2Content sl2_decompose(const ParabolicDatum& datum);

/**
 * The normalizing parameters {(s_i, lambda_i)} in a good ordering
 * (s/lambda nondecreasing; ties by lambda then s ascending), with the
 * A(L(i)) / B(L(i)) window endpoints and the a_L / mu_L factories for
 * unramified characters.
 */
struct NormalizingData {
  std::vector<std::pair<Rational, int>> params;  // (s_i, lambda_i), good order

  int k() const { return static_cast<int>(params.size()); }
  // A(L) = max s_i/lambda_i; B(L) = +infinity (all lambda_i > 0).
  Rational A() const;
  // Window endpoints for the intermediate spaces L(i), 0 <= i <= k:
  // A(L(i)) = s_{k-i}/lambda_{k-i} (finite = false means -infinity at i = k),
  // B(L(i)) = min_{k-i < j <= k} (1+s_j)/lambda_j (infinite at i = 0).
  struct Ext {
    bool finite = true;
    Rational value = Rational(0);
  };
  Ext A_of(int i) const;
  Ext B_of(int i) const;

  // a_L(chi_s) = prod_i L(-s_i, chi^{lambda_i}) and
  // mu_L(chi_s) = prod_i gamma(-s_i, chi^{lambda_i}, psi) for an unramified
  // chi = eta |.|^s with eta(p) = eta_p in {+1, -1}; X = q^{-s}.
  LaurentFraction a_L(int eta_p) const;
  LaurentFraction mu_L(int eta_p) const;
};

NormalizingData normalizing_data(const Sl2Content& content);

/**
 * Closed-form parameter multisets for the classical families, used only to
 * cross-check normalizing_data:
 *   PGL(n, l): maximal parabolic of PGL_n stabilizing an l-plane;
 *   OddOrthogonal(r, l): SO_{2r+1}, isotropic l-plane stabilizer (B_r node l);
 *   Symplectic(r, l): PSp_{2r} (C_r node l);
 *   EvenOrthogonal(r, l): PSO_{2r} (D_r node l, l <= r-2, or l = r);
 *   Siegel(n): Siegel-parabolic data for Sp_{2n} on the dual side (B_n node n).
 */
enum class ClassicalFamily { PGL, OddOrthogonal, Symplectic, EvenOrthogonal, Siegel };

std::vector<std::pair<Rational, int>> closed_form_oracle(ClassicalFamily family,
                                                         int rank, int ell);

/**
 * Verifies Prop-style weight identity for (type, rank, node): on the dual
 * (transposed-Cartan) system the nilradical roots sum to r * omega_beta, and
 * r = 2 s_k + 2 with s_k the top normalizing parameter of the engine system.
 */
struct DeltaCheck {
  bool ok = false;
  Rational r = Rational(0);            // multiple of the fundamental weight
  Rational expected = Rational(0);     // 2 s_k + 2
  std::vector<Rational> off_node;      // pairings against the other coroots
};

DeltaCheck check_delta_relation(CartanType type, int rank, int node);

/** One golden-table row: engine system label, marked node, expected content. */
struct GoldenRow {
  CartanType type;
  int rank = 0;
  int node = 0;
  Sl2Content content;
};

std::vector<GoldenRow> load_golden_tables(const std::string& path);

/**
 * Recomputes every golden row and reports mismatches as strings
 * "(type, node, grade, expected, got)"; empty result means full agreement.
 */
std::vector<std::string> diff_golden_tables(const std::string& path);

}  // namespace bk
