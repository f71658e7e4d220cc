#include "bk/schwartz.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace bk {

// ------------------------------------------------------------- SBFunction

void SBFunction::add_term(std::vector<Rational> center, std::vector<int> level,
                          Complex coeff) {
  if (static_cast<int>(center.size()) != dim_ ||
      static_cast<int>(level.size()) != dim_)
    throw std::invalid_argument("SBFunction::add_term: dimension mismatch");
  if (coeff == Complex(0.0, 0.0)) return;
  for (int j = 0; j < dim_; ++j)
    center[j] = canonical_mod(center[j], p_, level[j]);
  terms_.push_back({std::move(center), std::move(level), coeff});
}

void SBFunction::add_term(std::vector<Rational> center, int level, Complex coeff) {
  add_term(std::move(center), std::vector<int>(dim_, level), coeff);
}

Complex SBFunction::value_at(const std::vector<Rational>& x) const {
  Complex v(0.0, 0.0);
  for (const auto& t : terms_) {
    bool in = true;
    for (int j = 0; j < dim_ && in; ++j)
      in = val_or_inf(x[j] - t.center[j], p_) >= t.level[j];
    if (in) v += t.coeff;
  }
  return v;
}

SBFunction SBFunction::operator+(const SBFunction& o) const {
  if (p_ != o.p_ || dim_ != o.dim_)
    throw std::invalid_argument("SBFunction: incompatible sum");
  SBFunction r = *this;
  r.terms_.insert(r.terms_.end(), o.terms_.begin(), o.terms_.end());
  return r;
}

SBFunction SBFunction::operator*(Complex c) const {
  SBFunction r(p_, dim_);
  if (c == Complex(0.0, 0.0)) return r;
  r.terms_ = terms_;
  for (auto& t : r.terms_) t.coeff *= c;
  return r;
}

SBFunction SBFunction::conjugated() const {
  SBFunction r = *this;
  for (auto& t : r.terms_) t.coeff = std::conj(t.coeff);
  return r;
}

static std::string cell_key(const std::vector<Rational>& c,
                            const std::vector<int>& k) {
  std::ostringstream os;
  for (size_t j = 0; j < c.size(); ++j)
    os << c[j].get_str() << "@" << k[j] << "|";
  return os.str();
}

void SBFunction::merge_duplicates(double drop_eps) {
  std::map<std::string, size_t> seen;
  std::vector<SBTerm> out;
  for (auto& t : terms_) {
    std::string key = cell_key(t.center, t.level);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen[key] = out.size();
      out.push_back(t);
    } else {
      out[it->second].coeff += t.coeff;
    }
  }
  double mx = 0;
  for (auto& t : out) mx = std::max(mx, std::abs(t.coeff));
  std::vector<SBTerm> pruned;
  for (auto& t : out)
    if (std::abs(t.coeff) > drop_eps * std::max(1.0, mx)) pruned.push_back(t);
  terms_ = std::move(pruned);
}

int SBFunction::max_level() const {
  int K = 0;
  for (const auto& t : terms_)
    for (int k : t.level) K = std::max(K, k);
  return K;
}

SBFunction SBFunction::canonicalized(int K) const {
  K = std::max(K, max_level());
  SBFunction r(p_, dim_);
  for (const auto& t : terms_) {
    // Enumerate the level-K children of the product cell.
    std::vector<long> steps(dim_);
    long total = 1;
    for (int j = 0; j < dim_; ++j) {
      long s = 1;
      for (int e = t.level[j]; e < K; ++e) s *= p_;
      steps[j] = s;
      total *= s;
      if (total > 20000000L)
        throw std::runtime_error("SBFunction::canonicalized: refinement too large");
    }
    std::vector<long> idx(dim_, 0);
    for (long c = 0; c < total; ++c) {
      std::vector<Rational> ctr(dim_);
      long rest = c;
      for (int j = 0; j < dim_; ++j) {
        long d = rest % steps[j];
        rest /= steps[j];
        ctr[j] = canonical_mod(t.center[j] + Rational(d) * pow_p(p_, t.level[j]),
                               p_, K);
      }
      r.terms_.push_back({std::move(ctr), std::vector<int>(dim_, K), t.coeff});
    }
  }
  r.merge_duplicates();
  return r;
}

int SBFunction::support_norm_exp() const {
  int m = 0;
  for (const auto& t : terms_)
    for (int j = 0; j < dim_; ++j) {
      int v = std::min(val_or_inf(t.center[j], p_), t.level[j]);
      m = std::max(m, -v);
    }
  return m;
}

int SBFunction::min_val_bound(int j) const {
  int v = kValInfinity;
  for (const auto& t : terms_)
    v = std::min(v, std::min(val_or_inf(t.center[j], p_), t.level[j]));
  return v;
}

Complex SBFunction::inner_product(const SBFunction& f, const SBFunction& g) {
  if (f.p_ != g.p_ || f.dim_ != g.dim_)
    throw std::invalid_argument("inner_product: incompatible functions");
  Complex s(0.0, 0.0);
  for (const auto& a : f.terms_)
    for (const auto& b : g.terms_) {
      Rational vol(1);
      bool meet = true;
      for (int j = 0; j < f.dim_ && meet; ++j) {
        int lo = std::min(a.level[j], b.level[j]);
        int hi = std::max(a.level[j], b.level[j]);
        if (val_or_inf(a.center[j] - b.center[j], f.p_) < lo) {
          meet = false;
        } else {
          vol *= pow_p(f.p_, -hi);
        }
      }
      if (meet) s += a.coeff * std::conj(b.coeff) * vol.get_d();
    }
  return s;
}

bool SBFunction::approx_equal(const SBFunction& f, const SBFunction& g, double tol) {
  SBFunction d = f + g * Complex(-1.0, 0.0);
  // Quadratic-form agreement: cancellation noise in <d,d> sits at machine
  // epsilon, so the form itself (not its square root) is held against tol.
  double n2 = std::abs(inner_product(d, d));
  double nf = std::abs(inner_product(f, f));
  if (n2 > tol * (1.0 + nf)) return false;
  // Exact pointwise agreement at every listed cell center.
  double mx = 0.0;
  for (const auto& t : f.terms_) mx = std::max(mx, std::abs(t.coeff));
  for (const auto& t : g.terms_) mx = std::max(mx, std::abs(t.coeff));
  for (const auto& t : f.terms_)
    if (std::abs(d.value_at(t.center)) > tol * (1.0 + mx)) return false;
  for (const auto& t : g.terms_)
    if (std::abs(d.value_at(t.center)) > tol * (1.0 + mx)) return false;
  return true;
}

std::string SBFunction::to_json() const {
  nlohmann::json j;
  int K = max_level();
  SBFunction c = canonicalized(K);
  j["prime"] = p_;
  j["dim"] = dim_;
  j["level"] = K;
  j["terms"] = nlohmann::json::array();
  for (const auto& t : c.terms_) {
    nlohmann::json term;
    term["center"] = nlohmann::json::array();
    for (const auto& x : t.center) term["center"].push_back(x.get_str());
    term["coeff"] = {{"re", t.coeff.real()}, {"im", t.coeff.imag()}};
    j["terms"].push_back(term);
  }
  return j.dump(2);
}

SBFunction SBFunction::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  long p = j.at("prime").get<long>();
  int dim = j.at("dim").get<int>();
  int level = j.at("level").get<int>();
  SBFunction f(p, dim);
  for (const auto& term : j.at("terms")) {
    std::vector<Rational> center;
    for (const auto& s : term.at("center"))
      center.push_back(parse_rational(s.get<std::string>()));
    Complex c(term.at("coeff").at("re").get<double>(),
              term.at("coeff").at("im").get<double>());
    f.add_term(std::move(center), level, c);
  }
  return f;
}

// ------------------------------------------------------------ GramPairing

GramPairing::GramPairing(std::vector<std::vector<Rational>> S) : S_(std::move(S)) {
  int n = static_cast<int>(S_.size());
  for (const auto& row : S_)
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("GramPairing: not square");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (S_[i][j] != S_[j][i])
        throw std::invalid_argument("GramPairing: not symmetric");
  // Gauss-Jordan for det and inverse, exact.
  std::vector<std::vector<Rational>> a = S_;
  std::vector<std::vector<Rational>> inv(n, std::vector<Rational>(n, Rational(0)));
  for (int i = 0; i < n; ++i) inv[i][i] = 1;
  det_ = 1;
  for (int col = 0; col < n; ++col) {
    int piv = -1;
    for (int r = col; r < n; ++r)
      if (a[r][col] != 0) {
        piv = r;
        break;
      }
    if (piv < 0) throw std::invalid_argument("GramPairing: singular matrix");
    if (piv != col) {
      std::swap(a[piv], a[col]);
      std::swap(inv[piv], inv[col]);
      det_ = -det_;
    }
    det_ *= a[col][col];
    Rational d = a[col][col];
    for (int j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0) continue;
      Rational f = a[r][col];
      for (int j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  Sinv_ = std::move(inv);
}

GramPairing GramPairing::identity(int n) {
  std::vector<std::vector<Rational>> S(n, std::vector<Rational>(n, Rational(0)));
  for (int i = 0; i < n; ++i) S[i][i] = 1;
  return GramPairing(std::move(S));
}

GramPairing GramPairing::antidiagonal(int n) {
  std::vector<std::vector<Rational>> S(n, std::vector<Rational>(n, Rational(0)));
  for (int i = 0; i < n; ++i) S[i][n - 1 - i] = 1;
  return GramPairing(std::move(S));
}

Rational GramPairing::pair(const std::vector<Rational>& x,
                           const std::vector<Rational>& y) const {
  Rational s(0);
  int n = dim();
  for (int i = 0; i < n; ++i) {
    if (x[i] == 0) continue;
    for (int j = 0; j < n; ++j) s += x[i] * S_[i][j] * y[j];
  }
  return s;
}

Rational GramPairing::quad(const std::vector<Rational>& x) const {
  return pair(x, x) / 2;
}

std::vector<Rational> GramPairing::apply(const std::vector<Rational>& x) const {
  int n = dim();
  std::vector<Rational> r(n, Rational(0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) r[i] += S_[i][j] * x[j];
  return r;
}

// ------------------------------------------------------- Fourier transform

namespace {

/**
 * Column-reduce the rational matrix M over Z_(p) to lower-triangular form with
 * diagonal entries exact powers p^{v_j}; the column span over Z_p is unchanged.
 */
std::vector<std::vector<Rational>> triangular_lattice_basis(
    std::vector<std::vector<Rational>> M, long p, std::vector<int>& diag_val) {
  int n = static_cast<int>(M.size());
  diag_val.assign(n, 0);
  for (int row = 0; row < n; ++row) {
    int best = -1, bestv = kValInfinity;
    for (int c = row; c < n; ++c) {
      int v = val_or_inf(M[row][c], p);
      if (v < bestv) {
        bestv = v;
        best = c;
      }
    }
    if (best < 0 || bestv == kValInfinity)
      throw std::logic_error("triangular_lattice_basis: singular lattice");
    for (int r = 0; r < n; ++r) std::swap(M[r][row], M[r][best]);
    // Scale column so the pivot becomes exactly p^{bestv}.
    Rational scale = pow_p(p, bestv) / M[row][row];
    for (int r = 0; r < n; ++r) M[r][row] *= scale;
    diag_val[row] = bestv;
    for (int c = row + 1; c < n; ++c) {
      if (M[row][c] == 0) continue;
      Rational f = M[row][c] / M[row][row];  // in Z_(p) by pivot minimality
      for (int r = 0; r < n; ++r) M[r][c] -= f * M[r][row];
    }
  }
  return M;
}

struct GroupKey {
  std::string spectator;
  std::vector<int> sub_levels;
  bool operator<(const GroupKey& o) const {
    if (spectator != o.spectator) return spectator < o.spectator;
    return sub_levels < o.sub_levels;
  }
};

}  // namespace

SBFunction fourier_transform(const SBFunction& f, const GramPairing& S,
                             const PAdicContext& ctx,
                             const std::vector<int>& coords_in, bool conjugate,
                             long cell_budget) {
  long p = ctx.p;
  long c0 = ctx.psi_conductor;
  int dim = f.dim();
  std::vector<int> coords = coords_in;
  if (coords.empty()) {
    coords.resize(dim);
    for (int i = 0; i < dim; ++i) coords[i] = i;
  }
  int nb = static_cast<int>(coords.size());
  if (S.dim() != nb)
    throw std::invalid_argument("fourier_transform: Gram size != #coords");

  // Group terms by (spectator cell, transform-coordinate level vector).
  std::map<GroupKey, std::vector<const SBTerm*>> groups;
  for (const auto& t : f.terms()) {
    GroupKey key;
    std::ostringstream os;
    for (int j = 0; j < dim; ++j) {
      if (std::find(coords.begin(), coords.end(), j) != coords.end()) continue;
      os << t.center[j].get_str() << "@" << t.level[j] << "|";
    }
    key.spectator = os.str();
    for (int c : coords) key.sub_levels.push_back(t.level[c]);
    groups[key].push_back(&t);
  }

  const auto& Sm = S.matrix();
  int vdet = val_or_inf(S.det(), p);
  double mu = std::pow(static_cast<double>(p),
                       (static_cast<double>(nb) * c0 - vdet) / 2.0);

  SBFunction out(p, dim);
  for (const auto& [key, terms] : groups) {
    const std::vector<int>& kv = key.sub_levels;
    // Output levels K_j: cells tile the dual lattice and phases are constant.
    std::vector<int> K(nb, -1000000);
    for (int j = 0; j < nb; ++j) {
      for (int i = 0; i < nb; ++i) {
        int vs = val_or_inf(Sm[i][j], p);
        if (vs < kValInfinity) K[j] = std::max<int>(K[j], c0 - kv[i] - vs);
      }
    }
    for (const SBTerm* t : terms) {
      std::vector<Rational> a(nb);
      for (int j = 0; j < nb; ++j) a[j] = t->center[coords[j]];
      std::vector<Rational> Sa = S.apply(a);
      for (int j = 0; j < nb; ++j) {
        int v = val_or_inf(Sa[j], p);
        if (v < kValInfinity) K[j] = std::max<int>(K[j], c0 - v);
      }
    }

    // Dual lattice {t : val((St)_i) >= c0 - k_i} = Sinv diag(p^{c0-k_i}) Z_p^nb,
    // rescaled by diag(p^{-K_j}) and triangularized for coset enumeration.
    std::vector<std::vector<Rational>> M(nb, std::vector<Rational>(nb));
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j)
        M[i][j] = S.inverse()[i][j] * pow_p(p, c0 - kv[j]) * pow_p(p, -K[i]);
    std::vector<int> dv;
    auto H = triangular_lattice_basis(M, p, dv);
    long total = 1;
    for (int j = 0; j < nb; ++j) {
      if (dv[j] > 0)
        throw std::logic_error("fourier_transform: dual cell level too coarse");
      for (int e = 0; e < -dv[j]; ++e) {
        total *= p;
        if (total > cell_budget)
          throw std::runtime_error("fourier_transform: dual cell budget exceeded");
      }
    }
    if (total * static_cast<long>(terms.size()) > 16 * cell_budget)
      throw std::runtime_error("fourier_transform: work budget exceeded");

    // The phase at t = sum_j x_j h_j splits over the integer digits x_j:
    // psi(<t, S a_i>) = prod_j z_ij^{x_j} with z_ij = psi(sum_r p^{K_r}
    // H[r][j] (S a_i)_r) (canonicalizing t shifts the phase by psi-trivial
    // amounts). Precompute complex power tables so the cell loop stays free
    // of exact arithmetic.
    size_t nt = terms.size();
    std::vector<long> span(nb);
    for (int j = 0; j < nb; ++j) {
      span[j] = 1;
      for (int e = 0; e < -dv[j]; ++e) span[j] *= p;
    }
    std::vector<Complex> base(nt);
    std::vector<std::vector<std::vector<Complex>>> tbl(
        nt, std::vector<std::vector<Complex>>(nb));
    for (size_t ti = 0; ti < nt; ++ti) {
      std::vector<Rational> a(nb);
      Rational vol(1);
      for (int j = 0; j < nb; ++j) {
        a[j] = terms[ti]->center[coords[j]];
        vol *= pow_p(p, -kv[j]);
      }
      std::vector<Rational> Sa = S.apply(a);
      base[ti] = terms[ti]->coeff * vol.get_d() * mu;
      for (int j = 0; j < nb; ++j) {
        Rational w(0);
        for (int r = 0; r < nb; ++r) w += pow_p(p, K[r]) * H[r][j] * Sa[r];
        Complex z = psi_eval(ctx, w);
        if (conjugate) z = std::conj(z);
        auto& col = tbl[ti][j];
        col.resize(span[j]);
        col[0] = Complex(1.0, 0.0);
        for (long x = 1; x < span[j]; ++x) col[x] = col[x - 1] * z;
      }
    }

    // Per-term suffix products over the digit odometer; only the layers at or
    // below the highest carried digit need recomputing each step.
    std::vector<std::vector<Complex>> suffix(
        nb + 1, std::vector<Complex>(nt, Complex(1.0, 0.0)));
    suffix[nb] = base;
    std::vector<long> x(nb, 0);
    std::vector<Rational> rep(nb), tvec(nb);
    const SBTerm* t0 = terms.front();
    int dirty = nb - 1;
    for (;;) {
      for (int j = dirty; j >= 0; --j)
        for (size_t ti = 0; ti < nt; ++ti)
          suffix[j][ti] = suffix[j + 1][ti] * tbl[ti][j][x[j]];
      Complex val(0.0, 0.0);
      for (size_t ti = 0; ti < nt; ++ti) val += suffix[0][ti];
      if (std::abs(val) > 1e-13 * (1.0 + std::abs(mu))) {
        for (int r = 0; r < nb; ++r) {
          rep[r] = 0;
          for (int j = 0; j < nb; ++j)
            if (x[j] != 0) rep[r] += Rational(x[j]) * H[r][j];
          tvec[r] = canonical_mod(rep[r] * pow_p(p, K[r]), p, K[r]);
        }
        std::vector<Rational> ctr = t0->center;
        std::vector<int> lev = t0->level;
        for (int j = 0; j < nb; ++j) {
          ctr[coords[j]] = tvec[j];
          lev[coords[j]] = K[j];
        }
        out.add_term(std::move(ctr), std::move(lev), val);
      }
      int j = 0;
      while (j < nb && ++x[j] == span[j]) x[j++] = 0;
      if (j == nb) break;
      dirty = j;
    }
  }
  out.merge_duplicates();
  return out;
}

SBFunction inverse_fourier_transform(const SBFunction& g, const GramPairing& S,
                                     const PAdicContext& ctx,
                                     const std::vector<int>& coords,
                                     long cell_budget) {
  return fourier_transform(g, S, ctx, coords, /*conjugate=*/true, cell_budget);
}

// ----------------------------------------------------------- zeta integral

namespace {

// Shell aggregates of quadratic characters are Gaussian rationals up to a
// factor sqrt(q): snap to c or c * u^{+-1}, preferring the rational branch.
// Denominators are bounded by p^level * (p-1) * coefficient denominators, so a
// tight cap keeps sqrt(q) itself from being "snapped" to a fraction.
UFrac snap_ufrac(Complex z, long p, double tol) {
  (void)tol;
  double rq = std::sqrt(static_cast<double>(p));
  // With denominators capped at 5*10^4, any false convergent of an irrational
  // sits at least ~2*10^-10 away, far above the 10^-12 acceptance band.
  for (int e : {0, 1, -1}) {
    Complex w = z * std::pow(rq, -e);
    auto re = snap_rational(w.real(), 1e-12 * std::max(1.0, std::abs(w.real())),
                            50000);
    auto im = snap_rational(w.imag(), 1e-12 * std::max(1.0, std::abs(w.imag())),
                            50000);
    if (re && im)
      return UFrac::from_qqi(QQi(*re, *im)) *
             (e == 0 ? UFrac(1L) : UFrac::u_power(e));
  }
  throw std::runtime_error("zeta_integral: shell aggregate is not exact");
}

}  // namespace

LaurentFraction zeta_integral(const SBFunction& f,
                              const std::function<int(const Rational&)>& eta,
                              int conductor, const PAdicContext& ctx) {
  if (f.dim() != 1)
    throw std::invalid_argument("zeta_integral: function must be one-dimensional");
  long p = ctx.p;
  bool ramified = conductor > 0;
  int K = f.max_level();
  int m_min = -f.support_norm_exp();
  Rational zeta1 = Rational(p) / Rational(p - 1);
  double tol = std::max(ctx.tolerance, 1e-9);

  LaurentFraction Z(0L);
  for (int m = m_min; m < K; ++m) {
    // Exact shell aggregate at the resolution where both f and eta are
    // constant: A_m = zeta(1) p^{-E} sum_{units c mod p^E} eta(c p^m) f(c p^m)
    // with E = max(K - m, conductor).
    int E = std::max(K - m, conductor);
    Complex acc(0.0, 0.0);
    long span = 1;
    for (int e = 0; e < E; ++e) span *= p;
    for (long c = 1; c < span; ++c) {
      if (c % p == 0) continue;
      Rational x = Rational(c) * pow_p(p, m);
      acc += static_cast<double>(eta(x)) * f.value_at({x});
    }
    Complex Am = acc * pow_p(p, -E).get_d() * zeta1.get_d();
    if (std::abs(Am) < 1e-13) continue;
    Z = Z + LaurentFraction(XPoly::monomial(snap_ufrac(Am, p, tol), m),
                            XPoly::one());
  }

  // Tail: f is constant f(0) on p^K Z_p. Unramified: geometric series
  // sum_{m>=K} f(0)(eta(p)X)^m; ramified: every shell vanishes.
  Complex f0 = f.value_at(std::vector<Rational>{Rational(0)});
  if (!ramified && std::abs(f0) > 1e-13) {
    int etap = eta(Rational(p));
    UFrac c0 = snap_ufrac(f0, p, tol);
    UFrac e(static_cast<long>(etap));
    // (eta X)^K / (1 - eta X)
    LaurentFraction numer(
        XPoly::monomial(c0 * (K % 2 == 0 ? UFrac(1L) : e), K), XPoly::one());
    LaurentFraction denom(
        XPoly::constant(UFrac(1L)) - XPoly::monomial(e, 1), XPoly::one());
    Z = Z + numer / denom;
  }
  return Z;
}

LaurentFraction zeta_integral(const SBFunction& f, UnitChar eta,
                              const PAdicContext& ctx) {
  long p = ctx.p;
  int sign = eta == UnitChar::Trivial ? 1 : -1;
  auto chr = [p, sign](const Rational& x) {
    return sign == 1 || valuation(x, p) % 2 == 0 ? 1 : -1;
  };
  return zeta_integral(f, chr, /*conductor=*/0, ctx);
}

// ------------------------------------------------------------ pv integral

const char* status_name(ShellStatus s) {
  switch (s) {
    case ShellStatus::ProvenVanishing: return "proven-vanishing";
    case ShellStatus::Stabilized: return "stabilized";
    case ShellStatus::Truncated: return "truncated";
  }
  return "?";
}

PvResult pv_integral(const std::function<ShellTerm(int)>& shell,
                     const TruncationPolicy& policy, double tol) {
  PvResult res;
  std::vector<double> deltas;
  std::vector<bool> exact;
  Complex sum(0.0, 0.0);
  auto window_quiet = [&](bool& all_exact) {
    if (static_cast<int>(deltas.size()) < policy.window) return false;
    all_exact = true;
    for (int w = 0; w < policy.window; ++w) {
      size_t i = deltas.size() - 1 - w;
      if (deltas[i] > tol) return false;
      all_exact = all_exact && exact[i];
    }
    return true;
  };
  for (int m = 0; m <= policy.max_shell; ++m) {
    ShellTerm t = shell(m);
    sum += t.value;
    res.shells_used = m + 1;
    if (t.provably_zero_beyond) {
      res.value = sum;
      res.status = ShellStatus::ProvenVanishing;
      return res;
    }
    deltas.push_back(std::abs(t.value));
    exact.push_back(t.exact_zero);
    // A quiet window of exact zeros keeps scanning: a vanishing proof may
    // still arrive before the budget runs out.
    bool all_exact = false;
    if (window_quiet(all_exact) && !all_exact) {
      res.value = sum;
      res.status = ShellStatus::Stabilized;
      return res;
    }
  }
  res.value = sum;
  bool all_exact = false;
  res.status = window_quiet(all_exact) ? ShellStatus::Stabilized
                                       : ShellStatus::Truncated;
  return res;
}

// ------------------------------------------------------ level-set integral

Rational Polynomial::eval(const std::vector<Rational>& x) const {
  Rational s(0);
  for (const auto& m : monos) {
    Rational t = m.coeff;
    for (size_t j = 0; j < m.exps.size(); ++j)
      for (int e = 0; e < m.exps[j]; ++e) t *= x[j];
    s += t;
  }
  return s;
}

namespace {

Complex level_set_estimator(const SBFunction& f,
                            const std::vector<Polynomial>& maps,
                            const std::vector<Rational>& target, int m,
                            const PAdicContext& ctx, long cell_budget,
                            long& visited) {
  long p = ctx.p;
  int d = f.dim();
  int r = static_cast<int>(maps.size());
  Complex acc(0.0, 0.0);
  for (const auto& t : f.terms()) {
    std::vector<int> L(d);
    std::vector<long> steps(d);
    long total = 1;
    Rational vol(1);
    for (int j = 0; j < d; ++j) {
      L[j] = std::max(t.level[j], m);
      long s = 1;
      for (int e = t.level[j]; e < L[j]; ++e) s *= p;
      steps[j] = s;
      total *= s;
      vol *= pow_p(p, -L[j]);
      if (total > cell_budget)
        throw std::runtime_error("level_set_integral: cell budget exceeded");
    }
    visited += total;
    double vd = vol.get_d();
    for (long c = 0; c < total; ++c) {
      long rest = c;
      std::vector<Rational> ctr(d);
      for (int j = 0; j < d; ++j) {
        long dig = rest % steps[j];
        rest /= steps[j];
        ctr[j] = t.center[j] + Rational(dig) * pow_p(p, t.level[j]);
      }
      bool on = true;
      for (int i = 0; i < r && on; ++i)
        on = val_or_inf(maps[i].eval(ctr) - target[i], p) >= m;
      if (on) acc += t.coeff * vd;
    }
  }
  double scale = 1.0;
  for (int i = 0; i < r; ++i) scale *= std::pow(static_cast<double>(p), m);
  return acc * scale;
}

}  // namespace

LevelSetResult level_set_integral(const SBFunction& f,
                                  const std::vector<Polynomial>& maps,
                                  const std::vector<Rational>& target,
                                  int refinement, const PAdicContext& ctx,
                                  long cell_budget) {
  if (static_cast<int>(maps.size()) >= f.dim())
    throw std::invalid_argument("level_set_integral: need r < d");
  LevelSetResult res;
  res.refinement = refinement;
  long visited = 0;
  res.coarse = level_set_estimator(f, maps, target, refinement, ctx,
                                   cell_budget, visited);
  res.value = level_set_estimator(f, maps, target, refinement + 1, ctx,
                                  cell_budget, visited);
  res.cells_visited = visited;
  res.discrepancy = std::abs(res.value - res.coarse);
  return res;
}

}  // namespace bk
