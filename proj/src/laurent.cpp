#include "bk/laurent.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace bk {

// ---------------------------------------------------------------- QQi

QQi QQi::inv() const {
  Rational n = re * re + im * im;
  if (n == 0) throw std::domain_error("QQi: division by zero");
  return {re / n, -im / n};
}

std::string QQi::str() const {
  if (im == 0) return re.get_str();
  std::ostringstream os;
  Rational a = im > 0 ? im : Rational(-im);
  os << "(" << re.get_str() << (im > 0 ? "+" : "-") << a.get_str() << "i)";
  return os.str();
}

// ---------------------------------------------------------------- UPoly

void UPoly::trim() {
  size_t a = 0;
  while (a < c_.size() && c_[a].is_zero()) ++a;
  size_t b = c_.size();
  while (b > a && c_[b - 1].is_zero()) --b;
  if (a > 0 || b < c_.size()) {
    c_ = std::vector<QQi>(c_.begin() + a, c_.begin() + b);
    low_ += static_cast<int>(a);
  }
  if (c_.empty()) low_ = 0;
}

UPoly UPoly::monomial(const QQi& c, int exp) {
  UPoly r;
  if (!c.is_zero()) {
    r.low_ = exp;
    r.c_ = {c};
  }
  return r;
}

QQi UPoly::coeff(int exp) const {
  int i = exp - low_;
  if (i < 0 || i >= static_cast<int>(c_.size())) return QQi();
  return c_[i];
}

UPoly UPoly::operator+(const UPoly& o) const {
  if (is_zero()) return o;
  if (o.is_zero()) return *this;
  int lo = std::min(low_, o.low_);
  int hi = std::max(high(), o.high());
  UPoly r;
  r.low_ = lo;
  r.c_.assign(hi - lo + 1, QQi());
  for (size_t i = 0; i < c_.size(); ++i) r.c_[low_ - lo + i] = r.c_[low_ - lo + i] + c_[i];
  for (size_t i = 0; i < o.c_.size(); ++i)
    r.c_[o.low_ - lo + i] = r.c_[o.low_ - lo + i] + o.c_[i];
  r.trim();
  return r;
}

UPoly UPoly::operator-() const {
  UPoly r = *this;
  for (auto& x : r.c_) x = -x;
  return r;
}

UPoly UPoly::operator-(const UPoly& o) const { return *this + (-o); }

UPoly UPoly::operator*(const UPoly& o) const {
  if (is_zero() || o.is_zero()) return UPoly();
  UPoly r;
  r.low_ = low_ + o.low_;
  r.c_.assign(c_.size() + o.c_.size() - 1, QQi());
  for (size_t i = 0; i < c_.size(); ++i)
    for (size_t j = 0; j < o.c_.size(); ++j)
      r.c_[i + j] = r.c_[i + j] + c_[i] * o.c_[j];
  r.trim();
  return r;
}

UPoly UPoly::shifted(int dexp) const {
  UPoly r = *this;
  if (!r.is_zero()) r.low_ += dexp;
  return r;
}

UPoly UPoly::fold_prime(long p) const {
  // Rewrite c * u^e with c = unit * p^v as unit * u^{e + 2v}: canonical form
  // once the semantic identity u^2 = q = p is imposed.
  UPoly r;
  for (size_t i = 0; i < c_.size(); ++i) {
    const QQi& c = c_[i];
    if (c.is_zero()) continue;
    int v = kValInfinity;
    if (c.re != 0) v = valuation(c.re, p);
    if (c.im != 0) v = std::min(v, valuation(c.im, p));
    Rational scale = pow_p(p, -v);
    r = r + monomial(QQi(c.re * scale, c.im * scale),
                     low_ + static_cast<int>(i) + 2 * v);
  }
  return r;
}

std::complex<double> UPoly::eval(std::complex<double> u) const {
  std::complex<double> s = 0.0;
  for (size_t i = 0; i < c_.size(); ++i)
    s += c_[i].to_complex() * std::pow(u, low_ + static_cast<int>(i));
  return s;
}

std::string UPoly::str() const {
  if (is_zero()) return "0";
  std::ostringstream os;
  bool first = true;
  for (size_t i = 0; i < c_.size(); ++i) {
    if (c_[i].is_zero()) continue;
    int e = low_ + static_cast<int>(i);
    if (!first) os << " + ";
    first = false;
    os << c_[i].str();
    if (e != 0) os << "*u^" << e;
  }
  return os.str();
}

void UPoly::divmod(const UPoly& a, const UPoly& b, UPoly& q, UPoly& r) {
  // Requires ordinary polynomials (low >= 0); exact field division steps.
  if (b.is_zero()) throw std::domain_error("UPoly: division by zero");
  if (a.low() < 0 || b.low() < 0)
    throw std::invalid_argument("UPoly::divmod needs ordinary polynomials");
  q = UPoly();
  r = a;
  QQi lead = b.c_.back();
  int db = b.high();
  while (!r.is_zero() && r.high() >= db) {
    QQi f = r.c_.back() / lead;
    int e = r.high() - db;
    UPoly t = UPoly::monomial(f, e);
    q = q + t;
    r = r - t * b;
  }
}

UPoly UPoly::gcd(UPoly a, UPoly b) {
  // Make ordinary (u-power units are invertible in the Laurent ring).
  if (!a.is_zero()) a.low_ = 0;
  if (!b.is_zero()) b.low_ = 0;
  while (!b.is_zero()) {
    UPoly q, r;
    divmod(a, b, q, r);
    a = b;
    b = r;
    if (!b.is_zero()) b.low_ = 0;  // strip u-power unit
  }
  if (a.is_zero()) return UPoly::one();
  // monic
  QQi lead = a.c_.back();
  UPoly m = a * UPoly::constant(lead.inv());
  return m;
}

// ---------------------------------------------------------------- UFrac

UFrac::UFrac(const UPoly& n, const UPoly& d) : num_(n), den_(d) { reduce(); }

void UFrac::reduce() {
  if (den_.is_zero()) throw std::domain_error("UFrac: zero denominator");
  if (num_.is_zero()) {
    den_ = UPoly::one();
    return;
  }
  // Shift denominator's u-power unit into the numerator.
  int dl = den_.low();
  den_ = den_.shifted(-dl);
  num_ = num_.shifted(-dl);
  // Cancel gcd of the ordinary parts.
  int nl = num_.low();
  UPoly nord = num_.shifted(-nl);
  UPoly g = UPoly::gcd(nord, den_);
  if (g.high() > 0) {
    UPoly q, r;
    UPoly::divmod(nord, g, q, r);
    nord = q;
    UPoly::divmod(den_, g, q, r);
    den_ = q;
  }
  // If the reduced denominator has a u-power factor, absorb it too.
  int dl2 = den_.low();
  den_ = den_.shifted(-dl2);
  nl -= dl2;
  // Normalize denominator monic; constant term may be zero only via u factor,
  // which was stripped, so den_(0) != 0 and den_ is ordinary monic.
  QQi lead = den_.coeffs().back();
  den_ = den_ * UPoly::constant(lead.inv());
  nord = nord * UPoly::constant(lead.inv());
  num_ = nord.shifted(nl);
}

UFrac UFrac::operator+(const UFrac& o) const {
  return UFrac(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
}
UFrac UFrac::operator-(const UFrac& o) const { return *this + (-o); }
UFrac UFrac::operator-() const {
  UFrac r = *this;
  r.num_ = -r.num_;
  return r;
}
UFrac UFrac::operator*(const UFrac& o) const {
  return UFrac(num_ * o.num_, den_ * o.den_);
}
UFrac UFrac::inv() const {
  if (is_zero()) throw std::domain_error("UFrac: inverse of zero");
  return UFrac(den_, num_);
}
UFrac UFrac::operator/(const UFrac& o) const { return *this * o.inv(); }

std::complex<double> UFrac::eval(std::complex<double> u) const {
  return num_.eval(u) / den_.eval(u);
}

std::string UFrac::str() const {
  if (den_ == UPoly::one()) return num_.str();
  return "(" + num_.str() + ")/(" + den_.str() + ")";
}

// ---------------------------------------------------------------- XPoly

void XPoly::trim() {
  size_t a = 0;
  while (a < c_.size() && c_[a].is_zero()) ++a;
  size_t b = c_.size();
  while (b > a && c_[b - 1].is_zero()) --b;
  if (a > 0 || b < c_.size()) {
    c_ = std::vector<UFrac>(c_.begin() + a, c_.begin() + b);
    low_ += static_cast<int>(a);
  }
  if (c_.empty()) low_ = 0;
}

XPoly XPoly::monomial(const UFrac& c, int exp) {
  XPoly r;
  if (!c.is_zero()) {
    r.low_ = exp;
    r.c_ = {c};
  }
  return r;
}

UFrac XPoly::coeff(int exp) const {
  int i = exp - low_;
  if (i < 0 || i >= static_cast<int>(c_.size())) return UFrac(0L);
  return c_[i];
}

XPoly XPoly::operator+(const XPoly& o) const {
  if (is_zero()) return o;
  if (o.is_zero()) return *this;
  int lo = std::min(low_, o.low_);
  int hi = std::max(high(), o.high());
  XPoly r;
  r.low_ = lo;
  r.c_.assign(hi - lo + 1, UFrac(0L));
  for (size_t i = 0; i < c_.size(); ++i) r.c_[low_ - lo + i] = r.c_[low_ - lo + i] + c_[i];
  for (size_t i = 0; i < o.c_.size(); ++i)
    r.c_[o.low_ - lo + i] = r.c_[o.low_ - lo + i] + o.c_[i];
  r.trim();
  return r;
}

XPoly XPoly::operator-() const {
  XPoly r = *this;
  for (auto& x : r.c_) x = -x;
  return r;
}
XPoly XPoly::operator-(const XPoly& o) const { return *this + (-o); }

XPoly XPoly::operator*(const XPoly& o) const {
  if (is_zero() || o.is_zero()) return XPoly();
  XPoly r;
  r.low_ = low_ + o.low_;
  r.c_.assign(c_.size() + o.c_.size() - 1, UFrac(0L));
  for (size_t i = 0; i < c_.size(); ++i)
    for (size_t j = 0; j < o.c_.size(); ++j)
      r.c_[i + j] = r.c_[i + j] + c_[i] * o.c_[j];
  r.trim();
  return r;
}

XPoly XPoly::shifted(int dexp) const {
  XPoly r = *this;
  if (!r.is_zero()) r.low_ += dexp;
  return r;
}

std::complex<double> XPoly::eval(std::complex<double> X, std::complex<double> u) const {
  std::complex<double> s = 0.0;
  for (size_t i = 0; i < c_.size(); ++i)
    s += c_[i].eval(u) * std::pow(X, low_ + static_cast<int>(i));
  return s;
}

std::string XPoly::str() const {
  if (is_zero()) return "0";
  std::ostringstream os;
  bool first = true;
  for (size_t i = 0; i < c_.size(); ++i) {
    if (c_[i].is_zero()) continue;
    int e = low_ + static_cast<int>(i);
    if (!first) os << " + ";
    first = false;
    os << "[" << c_[i].str() << "]";
    if (e != 0) os << "*X^" << e;
  }
  return os.str();
}

void XPoly::divmod(const XPoly& a, const XPoly& b, XPoly& q, XPoly& r) {
  if (b.is_zero()) throw std::domain_error("XPoly: division by zero");
  if (a.low() < 0 || b.low() < 0)
    throw std::invalid_argument("XPoly::divmod needs ordinary polynomials");
  q = XPoly();
  r = a;
  UFrac lead = b.c_.back();
  int db = b.high();
  while (!r.is_zero() && r.high() >= db) {
    UFrac f = r.c_.back() / lead;
    int e = r.high() - db;
    XPoly t = XPoly::monomial(f, e);
    q = q + t;
    r = r - t * b;
  }
}

XPoly XPoly::gcd(XPoly a, XPoly b) {
  if (!a.is_zero()) a.low_ = 0;
  if (!b.is_zero()) b.low_ = 0;
  while (!b.is_zero()) {
    XPoly q, r;
    divmod(a, b, q, r);
    a = b;
    b = r;
    if (!b.is_zero()) b.low_ = 0;
  }
  if (a.is_zero()) return XPoly::one();
  UFrac lead = a.c_.back();
  return a * XPoly::constant(lead.inv());
}

// ------------------------------------------------------ LaurentFraction

LaurentFraction::LaurentFraction(const XPoly& n, const XPoly& d)
    : num_(n), den_(d) {
  reduce();
}

void LaurentFraction::reduce() {
  if (den_.is_zero()) throw std::domain_error("LaurentFraction: zero denominator");
  if (num_.is_zero()) {
    den_ = XPoly::one();
    return;
  }
  int dl = den_.low();
  den_ = den_.shifted(-dl);
  num_ = num_.shifted(-dl);
  int nl = num_.low();
  XPoly nord = num_.shifted(-nl);
  XPoly g = XPoly::gcd(nord, den_);
  if (g.high() > 0) {
    XPoly q, r;
    XPoly::divmod(nord, g, q, r);
    nord = q;
    XPoly::divmod(den_, g, q, r);
    den_ = q;
  }
  int dl2 = den_.low();
  den_ = den_.shifted(-dl2);
  nl -= dl2;
  UFrac lead = den_.coeffs().back();
  den_ = den_ * XPoly::constant(lead.inv());
  nord = nord * XPoly::constant(lead.inv());
  num_ = nord.shifted(nl);
}

LaurentFraction LaurentFraction::operator+(const LaurentFraction& o) const {
  return LaurentFraction(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
}
LaurentFraction LaurentFraction::operator-(const LaurentFraction& o) const {
  return *this + (-o);
}
LaurentFraction LaurentFraction::operator-() const {
  LaurentFraction r = *this;
  r.num_ = -r.num_;
  return r;
}
LaurentFraction LaurentFraction::operator*(const LaurentFraction& o) const {
  return LaurentFraction(num_ * o.num_, den_ * o.den_);
}
LaurentFraction LaurentFraction::inv() const {
  if (is_zero()) throw std::domain_error("LaurentFraction: inverse of zero");
  return LaurentFraction(den_, num_);
}
LaurentFraction LaurentFraction::operator/(const LaurentFraction& o) const {
  return *this * o.inv();
}

LaurentFraction LaurentFraction::pow(int e) const {
  if (e == 0) return LaurentFraction(1L);
  LaurentFraction base = e > 0 ? *this : inv();
  int n = e > 0 ? e : -e;
  LaurentFraction r(1L);
  for (int i = 0; i < n; ++i) r = r * base;
  return r;
}

static XPoly substitute_xpoly(const XPoly& p, const UFrac& c) {
  // X^e -> c^e X^{-e}
  XPoly r;
  for (int e = p.low(); e <= p.high(); ++e) {
    UFrac a = p.coeff(e);
    if (a.is_zero()) continue;
    UFrac ce(1L);
    int n = e >= 0 ? e : -e;
    for (int i = 0; i < n; ++i) ce = ce * c;
    if (e < 0) ce = ce.inv();
    r = r + XPoly::monomial(a * ce, -e);
  }
  return r;
}

bool LaurentFraction::equals_at_prime(const LaurentFraction& o, long p) const {
  LaurentFraction d = *this - o;
  // Zero iff every numerator coefficient vanishes in Q(i)(sqrt p).
  for (int e = d.num_.low(); e <= d.num_.high(); ++e) {
    UFrac c = d.num_.coeff(e);
    if (!c.num().fold_prime(p).is_zero()) return false;
  }
  return true;
}

LaurentFraction LaurentFraction::substitute_X_inverse(const UFrac& c) const {
  return LaurentFraction(substitute_xpoly(num_, c), substitute_xpoly(den_, c));
}

static XPoly scale_xpoly(const XPoly& p, const UFrac& c) {
  // X^e -> c^e X^e
  XPoly r;
  for (int e = p.low(); e <= p.high(); ++e) {
    UFrac a = p.coeff(e);
    if (a.is_zero()) continue;
    UFrac ce(1L);
    int n = e >= 0 ? e : -e;
    for (int i = 0; i < n; ++i) ce = ce * c;
    if (e < 0) ce = ce.inv();
    r = r + XPoly::monomial(a * ce, e);
  }
  return r;
}

LaurentFraction LaurentFraction::substitute_X_scale(const UFrac& c) const {
  return LaurentFraction(scale_xpoly(num_, c), scale_xpoly(den_, c));
}

std::complex<double> LaurentFraction::eval(std::complex<double> X,
                                           std::complex<double> u) const {
  return num_.eval(X, u) / den_.eval(X, u);
}

std::complex<double> LaurentFraction::eval_at_s(std::complex<double> s0,
                                                double q) const {
  std::complex<double> X = std::pow(std::complex<double>(q, 0), -s0);
  return eval(X, std::sqrt(q));
}

std::string LaurentFraction::str() const {
  if (den_ == XPoly::one()) return num_.str();
  return "(" + num_.str() + ") / (" + den_.str() + ")";
}

}  // namespace bk
