#include "bk/lie.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bk {

char cartan_type_char(CartanType t) {
  switch (t) {
    case CartanType::A: return 'A';
    case CartanType::B: return 'B';
    case CartanType::C: return 'C';
    case CartanType::D: return 'D';
    case CartanType::E: return 'E';
    case CartanType::F: return 'F';
    case CartanType::G: return 'G';
  }
  throw std::logic_error("cartan_type_char: bad type");
}

CartanType cartan_type_from_char(char c) {
  switch (c) {
    case 'A': return CartanType::A;
    case 'B': return CartanType::B;
    case 'C': return CartanType::C;
    case 'D': return CartanType::D;
    case 'E': return CartanType::E;
    case 'F': return CartanType::F;
    case 'G': return CartanType::G;
  }
  throw std::invalid_argument("cartan_type_from_char: bad type letter");
}

int positive_root_count(CartanType type, int rank) {
  switch (type) {
    case CartanType::A: return rank * (rank + 1) / 2;
    case CartanType::B:
    case CartanType::C: return rank * rank;
    case CartanType::D: return rank * (rank - 1);
    case CartanType::E:
      if (rank == 6) return 36;
      if (rank == 7) return 63;
      return 120;
    case CartanType::F: return 24;
    case CartanType::G: return 6;
  }
  throw std::logic_error("positive_root_count: bad type");
}

namespace {

void validate_rank(CartanType type, int rank) {
  bool ok = false;
  switch (type) {
    case CartanType::A: ok = rank >= 1; break;
    case CartanType::B: ok = rank >= 2; break;
    case CartanType::C: ok = rank >= 2; break;
    case CartanType::D: ok = rank >= 3; break;
    case CartanType::E: ok = rank >= 6 && rank <= 8; break;
    case CartanType::F: ok = rank == 4; break;
    case CartanType::G: ok = rank == 2; break;
  }
  if (!ok) throw std::invalid_argument("RootSystem: invalid rank for type");
}

std::vector<std::vector<int>> cartan_matrix(CartanType type, int rank) {
  int n = rank;
  std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
  for (int i = 0; i < n; ++i) a[i][i] = 2;
  auto edge = [&](int i, int j) { a[i][j] = a[j][i] = -1; };
  switch (type) {
    case CartanType::A:
      for (int i = 0; i + 1 < n; ++i) edge(i, i + 1);
      break;
    case CartanType::B:
      for (int i = 0; i + 1 < n; ++i) edge(i, i + 1);
      a[n - 1][n - 2] = -2;  // alpha_n short
      break;
    case CartanType::C:
      for (int i = 0; i + 1 < n; ++i) edge(i, i + 1);
      a[n - 2][n - 1] = -2;  // alpha_n long
      break;
    case CartanType::D:
      for (int i = 0; i + 2 < n; ++i) edge(i, i + 1);
      edge(n - 3, n - 1);
      break;
    case CartanType::E:
      // Bourbaki: chain 1-3-4-5-...-n with node 2 attached to node 4.
      edge(0, 2);
      for (int i = 2; i + 1 < n; ++i) edge(i, i + 1);
      edge(1, 3);
      break;
    case CartanType::F:
      for (int i = 0; i + 1 < n; ++i) edge(i, i + 1);
      a[2][1] = -2;  // alpha_1, alpha_2 long; alpha_3, alpha_4 short
      break;
    case CartanType::G:
      a[0][1] = -3;  // alpha_1 short, alpha_2 long
      a[1][0] = -1;
      break;
  }
  return a;
}

// Relative half-lengths d_i = (alpha_i, alpha_i)/2 from the symmetrization
// d_i a[i][j] = d_j a[j][i], normalized by d_0 = 1.
std::vector<Rational> half_lengths_from(const std::vector<std::vector<int>>& a) {
  int n = static_cast<int>(a.size());
  std::vector<Rational> d(n, Rational(0));
  d[0] = Rational(1);
  std::vector<int> stack{0};
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    for (int j = 0; j < n; ++j) {
      if (j == i || a[i][j] == 0 || d[j] != 0) continue;
      d[j] = d[i] * Rational(a[i][j]) / Rational(a[j][i]);
      stack.push_back(j);
    }
  }
  for (const Rational& x : d)
    if (x == 0) throw std::logic_error("half_lengths: Dynkin graph disconnected");
  return d;
}

}  // namespace

RootSystem RootSystem::build(CartanType type, int rank) {
  validate_rank(type, rank);
  RootSystem rs;
  rs.type_ = type;
  rs.rank_ = rank;
  rs.cartan_ = cartan_matrix(type, rank);
  rs.d_ = half_lengths_from(rs.cartan_);
  rs.generate_roots();
  return rs;
}

RootSystem RootSystem::dual() const {
  RootSystem rs;
  switch (type_) {
    case CartanType::B: rs.type_ = CartanType::C; break;
    case CartanType::C: rs.type_ = CartanType::B; break;
    default: rs.type_ = type_; break;
  }
  rs.rank_ = rank_;
  rs.cartan_.assign(rank_, std::vector<int>(rank_, 0));
  for (int i = 0; i < rank_; ++i)
    for (int j = 0; j < rank_; ++j) rs.cartan_[i][j] = cartan_[j][i];
  rs.d_ = half_lengths_from(rs.cartan_);
  rs.generate_roots();
  return rs;
}

int RootSystem::simple_coroot_pairing(const std::vector<int>& gamma, int i) const {
  int s = 0;
  for (int j = 0; j < rank_; ++j) s += gamma[j] * cartan_[i][j];
  return s;
}

Rational RootSystem::coroot_pairing(const std::vector<int>& x,
                                    const std::vector<int>& gamma) const {
  // <x, gamma^vee> = (x, gamma) / ((gamma, gamma)/2), with
  // (alpha_i, alpha_j) = d_i a[i][j].
  Rational inner(0), norm(0);
  for (int i = 0; i < rank_; ++i) {
    if (d_[i] == 0) continue;
    Rational row(0), grow(0);
    for (int j = 0; j < rank_; ++j) {
      row += Rational(cartan_[i][j]) * Rational(x[j]);
      grow += Rational(cartan_[i][j]) * Rational(gamma[j]);
    }
    inner += d_[i] * Rational(gamma[i]) * row;
    norm += d_[i] * Rational(gamma[i]) * grow;
  }
  if (norm == 0) throw std::invalid_argument("coroot_pairing: zero-length gamma");
  return 2 * inner / norm;
}

void RootSystem::generate_roots() {
  // Standard root-string closure: gamma + alpha_i is a root iff
  // p - <gamma, alpha_i^vee> > 0 where p = max{k : gamma - k alpha_i is a root}.
  std::set<std::vector<int>> roots;
  std::vector<std::vector<int>> frontier;
  for (int i = 0; i < rank_; ++i) {
    std::vector<int> e(rank_, 0);
    e[i] = 1;
    roots.insert(e);
    frontier.push_back(e);
  }
  while (!frontier.empty()) {
    std::vector<std::vector<int>> next;
    for (const auto& g : frontier) {
      for (int i = 0; i < rank_; ++i) {
        int p = 0;
        std::vector<int> down = g;
        while (true) {
          down[i] -= 1;
          bool negative = std::all_of(down.begin(), down.end(),
                                      [](int c) { return c <= 0; });
          if (!negative && down[i] >= 0 && roots.count(down)) {
            ++p;
            continue;
          }
          // gamma = alpha_i itself steps to zero, which is not a root.
          break;
        }
        if (p - simple_coroot_pairing(g, i) <= 0) continue;
        std::vector<int> up = g;
        up[i] += 1;
        if (roots.insert(up).second) next.push_back(up);
      }
    }
    frontier = std::move(next);
  }
  roots_.assign(roots.begin(), roots.end());
  if (static_cast<int>(roots_.size()) != positive_root_count(type_, rank_))
    throw std::logic_error("RootSystem: positive root count mismatch");
}

// ------------------------------------------------------------- parabolic data

ParabolicDatum build_parabolic(CartanType type, int rank, int node) {
  if (node < 1 || node > rank)
    throw std::invalid_argument("build_parabolic: node out of range");
  ParabolicDatum d;
  d.system = RootSystem::build(type, rank);
  d.node = node;
  int b = node - 1;
  std::vector<std::vector<int>> levi;
  for (const auto& g : d.system.positive_roots())
    if (g[b] == 0) levi.push_back(g);
  for (const auto& g : d.system.positive_roots()) {
    if (g[b] == 0) continue;
    // h realized as the sum of positive coroots of M.
    Rational e(0);
    for (const auto& delta : levi) e += d.system.coroot_pairing(g, delta);
    if (e.get_den() != 1)
      throw std::logic_error("build_parabolic: non-integral h-eigenvalue");
    d.nil_roots.push_back(g);
    d.grade.push_back(g[b]);
    d.h_eigen.push_back(static_cast<int>(e.get_num().get_si()));
  }
  return d;
}

std::map<int, std::vector<int>> ParabolicDatum::graded_eigenvalues() const {
  std::map<int, std::vector<int>> out;
  for (size_t i = 0; i < nil_roots.size(); ++i)
    out[grade[i]].push_back(h_eigen[i]);
  for (auto& [g, v] : out) std::sort(v.begin(), v.end(), std::greater<int>());
  return out;
}

Sl2Content sl2_decompose(const ParabolicDatum& datum) {
  Sl2Content content;
  for (const auto& [gr, eigen] : datum.graded_eigenvalues()) {
    std::map<int, int> count;
    for (int e : eigen) count[e] += 1;
    for (const auto& [e, c] : count)
      if (count[-e] != c)
        throw std::logic_error("sl2_decompose: eigenvalue multiset asymmetric");
    int top = eigen.front();
    std::vector<int> weights;
    for (int n = top; n >= 0; --n) {
      int mult = count[n] - (count.count(n + 2) ? count[n + 2] : 0);
      if (mult < 0)
        throw std::logic_error("sl2_decompose: negative multiplicity");
      weights.insert(weights.end(), mult, n);
    }
    long dim = 0;
    for (int n : weights) dim += n + 1;
    if (dim != static_cast<long>(eigen.size()))
      throw std::logic_error("sl2_decompose: dimension mismatch");
    content[gr] = weights;
  }
  return content;
}

// ---------------------------------------------------------- normalizing data

namespace {

bool good_order_less(const std::pair<Rational, int>& a,
                     const std::pair<Rational, int>& b) {
  Rational qa = a.first / Rational(a.second), qb = b.first / Rational(b.second);
  if (qa != qb) return qa < qb;
  if (a.second != b.second) return a.second < b.second;
  return a.first < b.first;
}

int twice(const Rational& s) {
  Rational t = 2 * s;
  if (t.get_den() != 1)
    throw std::logic_error("normalizing data: s is not a half-integer");
  return static_cast<int>(t.get_num().get_si());
}

}  // namespace

NormalizingData normalizing_data(const Sl2Content& content) {
  NormalizingData data;
  for (const auto& [grade, weights] : content)
    for (int n : weights)
      data.params.emplace_back(Rational(n) / 2, grade);
  std::sort(data.params.begin(), data.params.end(), good_order_less);
  return data;
}

Rational NormalizingData::A() const {
  if (params.empty()) throw std::logic_error("NormalizingData::A: empty data");
  return params.back().first / Rational(params.back().second);
}

NormalizingData::Ext NormalizingData::A_of(int i) const {
  int n = k();
  if (i < 0 || i > n) throw std::invalid_argument("A_of: index out of range");
  if (i == n) return {false, Rational(0)};  // -infinity
  const auto& [s, lam] = params[n - i - 1];
  return {true, s / Rational(lam)};
}

NormalizingData::Ext NormalizingData::B_of(int i) const {
  int n = k();
  if (i < 0 || i > n) throw std::invalid_argument("B_of: index out of range");
  if (i == 0) return {false, Rational(0)};  // +infinity
  Ext out{true, Rational(0)};
  bool first = true;
  for (int j = n - i; j < n; ++j) {
    Rational v = (Rational(1) + params[j].first) / Rational(params[j].second);
    if (first || v < out.value) out.value = v;
    first = false;
  }
  return out;
}

LaurentFraction NormalizingData::a_L(int eta_p) const {
  // prod_i (1 - eta(p)^{lambda_i} q^{s_i} X^{lambda_i})^{-1}
  LaurentFraction out(1L);
  for (const auto& [s, lam] : params) {
    long eps = (eta_p < 0 && lam % 2) ? -1 : 1;
    XPoly den = XPoly::one() -
                XPoly::monomial(UFrac(eps) * UFrac::u_power(twice(s)), lam);
    out = out * LaurentFraction(XPoly::one(), den);
  }
  return out;
}

LaurentFraction NormalizingData::mu_L(int eta_p) const {
  // prod_i gamma(-s_i, chi^{lambda_i}, psi) with unramified chi and epsilon 1:
  // (1 - c q^{s_i} X^{lambda_i}) / (1 - c q^{-s_i-1} X^{-lambda_i}),
  // c = eta(p)^{lambda_i}.
  LaurentFraction out(1L);
  for (const auto& [s, lam] : params) {
    long eps = (eta_p < 0 && lam % 2) ? -1 : 1;
    LaurentFraction num(
        XPoly::one() -
            XPoly::monomial(UFrac(eps) * UFrac::u_power(twice(s)), lam),
        XPoly::one());
    LaurentFraction den(
        XPoly::one() -
            XPoly::monomial(UFrac(eps) * UFrac::u_power(-twice(s) - 2), -lam),
        XPoly::one());
    out = out * (num / den);
  }
  return out;
}

// ------------------------------------------------------- closed-form oracles

std::vector<std::pair<Rational, int>> closed_form_oracle(ClassicalFamily family,
                                                         int rank, int ell) {
  std::vector<std::pair<Rational, int>> out;
  auto run1 = [&out](int lo2, int hi2) {  // (lo2/2, 1), (lo2/2+1, 1), ...
    for (int t = lo2; t <= hi2; t += 2) out.emplace_back(Rational(t) / 2, 1);
  };
  switch (family) {
    case ClassicalFamily::PGL: {
      int n = rank;
      if (n < 2 || ell < 1 || ell >= n)
        throw std::invalid_argument("closed_form_oracle: PGL range");
      run1(std::abs(n - 2 * ell), n - 2);
      break;
    }
    case ClassicalFamily::OddOrthogonal: {
      int r = rank;
      if (r < 2 || ell < 1 || ell > r)
        throw std::invalid_argument("closed_form_oracle: B range");
      if (ell == 1) {
        out.emplace_back(Rational(r - 1), 1);
      } else {
        run1(std::abs(2 * r + 1 - 3 * ell), 2 * r - 1 - ell);
        for (int j = 0; 2 * j <= ell - 2; ++j)
          out.emplace_back(Rational(ell - 2 - 2 * j), 2);
      }
      break;
    }
    case ClassicalFamily::Symplectic: {
      int r = rank;
      if (r < 2 || ell < 1 || ell > r)
        throw std::invalid_argument("closed_form_oracle: C range");
      if (ell == r) {
        for (int j = 0; 2 * j <= r - 1; ++j)
          out.emplace_back(Rational(r - 1 - 2 * j), 1);
      } else if (ell == 1) {
        out.emplace_back(Rational(2 * r - 3) / 2, 1);
        out.emplace_back(Rational(0), 2);
      } else {
        run1(std::abs(2 * r - 3 * ell), 2 * r - ell - 2);
        for (int j = 0; 2 * j <= ell - 1; ++j)
          out.emplace_back(Rational(ell - 1 - 2 * j), 2);
      }
      break;
    }
    case ClassicalFamily::EvenOrthogonal: {
      int r = rank;
      if (r < 3 || ell < 1 || ell > r || ell == r - 1)
        throw std::invalid_argument("closed_form_oracle: D range");
      if (ell == r) {
        for (int j = 0; 2 * j <= r - 2; ++j)
          out.emplace_back(Rational(r - 2 - 2 * j), 1);
      } else if (ell == 1) {
        out.emplace_back(Rational(0), 1);
        out.emplace_back(Rational(r - 2), 1);
      } else {
        run1(std::abs(2 * r - 1 - 3 * ell), 2 * r - ell - 3);
        out.emplace_back(Rational(ell - 1) / 2, 1);
        for (int j = 0; 2 * j <= ell - 2; ++j)
          out.emplace_back(Rational(ell - 2 - 2 * j), 2);
      }
      break;
    }
    case ClassicalFamily::Siegel: {
      int n = rank;
      if (n < 2) throw std::invalid_argument("closed_form_oracle: Siegel range");
      for (int r = 1; r <= n / 2; ++r)
        out.emplace_back(Rational(n + 2 * r - 2 * (n / 2) - 2), 2);
      out.emplace_back(Rational(n - 1) / 2, 1);
      break;
    }
  }
  std::sort(out.begin(), out.end(), good_order_less);
  return out;
}

// ------------------------------------------------------------ delta relation

DeltaCheck check_delta_relation(CartanType type, int rank, int node) {
  ParabolicDatum datum = build_parabolic(type, rank, node);
  NormalizingData data = normalizing_data(sl2_decompose(datum));
  DeltaCheck out;
  out.expected = 2 * data.params.back().first + 2;

  // The group-side weight identity lives on the dual (transposed-Cartan)
  // system with the same node index.
  RootSystem dual = datum.system.dual();
  std::vector<int> sum(rank, 0);
  for (const auto& g : dual.positive_roots()) {
    if (g[node - 1] == 0) continue;
    for (int j = 0; j < rank; ++j) sum[j] += g[j];
  }
  bool ok = true;
  for (int j = 0; j < rank; ++j) {
    Rational rj(dual.simple_coroot_pairing(sum, j));
    if (j == node - 1) {
      out.r = rj;
    } else {
      out.off_node.push_back(rj);
      if (rj != 0) ok = false;
    }
  }
  out.ok = ok && out.r == out.expected && data.params.back().second == 1;
  return out;
}

// -------------------------------------------------------------- golden tables

std::vector<GoldenRow> load_golden_tables(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_golden_tables: cannot open " + path);
  nlohmann::json j;
  in >> j;
  std::vector<GoldenRow> rows;
  for (const auto& item : j.at("tables")) {
    GoldenRow row;
    row.type = cartan_type_from_char(item.at("type").get<std::string>().at(0));
    row.rank = item.at("rank").get<int>();
    row.node = item.at("node").get<int>();
    for (const auto& [key, val] : item.at("content").items()) {
      std::vector<int> ws = val.get<std::vector<int>>();
      std::sort(ws.begin(), ws.end(), std::greater<int>());
      row.content[std::stoi(key)] = ws;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> diff_golden_tables(const std::string& path) {
  std::vector<std::string> diffs;
  auto fmt = [](const std::vector<int>& v) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << ']';
    return os.str();
  };
  for (const GoldenRow& row : load_golden_tables(path)) {
    Sl2Content got = sl2_decompose(build_parabolic(row.type, row.rank, row.node));
    std::set<int> grades;
    for (const auto& [g, _] : row.content) grades.insert(g);
    for (const auto& [g, _] : got) grades.insert(g);
    for (int g : grades) {
      std::vector<int> want =
          row.content.count(g) ? row.content.at(g) : std::vector<int>{};
      std::vector<int> have = got.count(g) ? got.at(g) : std::vector<int>{};
      if (want != have) {
        std::ostringstream os;
        os << '(' << cartan_type_char(row.type) << row.rank << ", node "
           << row.node << ", grade " << g << ", expected " << fmt(want)
           << ", got " << fmt(have) << ')';
        diffs.push_back(os.str());
      }
    }
  }
  return diffs;
}

}  // namespace bk
