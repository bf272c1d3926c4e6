// Finitely supported matrix-valued Fourier series on T^d and on the double
// torus 2T^d. A period-2 map stores integer indices that are read as
// half-frequencies, so period conversion is exact. Immutable by convention:
// every operation returns a fresh map.
#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>

#include "kamreduce/common.hpp"

namespace kamreduce {

// Norm selector: analytic strip half-width r, or C^k order k.
struct NormSpec {
  enum class Kind { Analytic, Differentiable };
  Kind kind = Kind::Analytic;
  double r = 0.0;
  int k = 0;

  static NormSpec analytic(double r) {
    if (!(r > 0)) throw ConfigError("NormSpec: analytic norm needs r > 0");
    return {Kind::Analytic, r, 0};
  }
  static NormSpec differentiable(int k) {
    if (k < 0) throw ConfigError("NormSpec: C^k norm needs k >= 0");
    return {Kind::Differentiable, 0.0, k};
  }
};

class TorusMap;
struct TorusMapTruncation;
struct TorusMapCollapse;

class TorusMap {
 public:
  using CoeffMap = std::map<ModeIndex, Matrix>;
  using Truncation = TorusMapTruncation;
  using Collapse = TorusMapCollapse;

  TorusMap() = default;
  TorusMap(int dim, int period, Target target)
      : dim_(dim), period_(period), target_(target) {
    if (dim < 1) throw ConfigError("TorusMap: dim >= 1 required");
    if (period != 1 && period != 2) throw ConfigError("TorusMap: period must be 1 or 2");
  }

  static TorusMap constant(int dim, Target target, const Matrix& a) {
    TorusMap f(dim, 1, target);
    f.set_mode(ModeIndex(dim, 0), a);
    return f;
  }
  static TorusMap zero(int dim, Target target) { return TorusMap(dim, 1, target); }
  static TorusMap identity(int dim, Target target) {
    return constant(dim, target, identity_matrix(target.n));
  }

  int dim() const { return dim_; }
  int period() const { return period_; }
  const Target& target() const { return target_; }
  int n() const { return target_.n; }
  const CoeffMap& coeffs() const { return coeffs_; }
  bool empty() const { return coeffs_.empty(); }
  size_t support_size() const { return coeffs_.size(); }

  void set_target(Target t) {
    if (t.n != target_.n && !coeffs_.empty())
      throw ConfigError("TorusMap::set_target: size mismatch");
    target_ = t;
  }

  // Stores (replaces) one coefficient; exact zeros are dropped.
  void set_mode(const ModeIndex& m, const Matrix& coeff) {
    check_mode(m, coeff);
    if (coeff.isZero(0.0))
      coeffs_.erase(m);
    else
      coeffs_[m] = coeff;
  }

  void add_mode(const ModeIndex& m, const Matrix& coeff) {
    check_mode(m, coeff);
    auto it = coeffs_.find(m);
    if (it == coeffs_.end())
      coeffs_[m] = coeff;
    else {
      it->second += coeff;
      if (it->second.isZero(0.0)) coeffs_.erase(it);
    }
  }

  // coeff * cos(2*pi <m,theta>/period): real coefficient pair at +-m.
  void add_cos(const ModeIndex& m, const Matrix& coeff) {
    add_mode(m, 0.5 * coeff);
    add_mode(negate(m), 0.5 * coeff);
  }
  // coeff * sin(2*pi <m,theta>/period)
  void add_sin(const ModeIndex& m, const Matrix& coeff) {
    const Complex half_over_i(0.0, -0.5);
    add_mode(m, half_over_i * coeff);
    add_mode(negate(m), -half_over_i * coeff);
  }

  Matrix coefficient(const ModeIndex& m) const {
    auto it = coeffs_.find(m);
    return it == coeffs_.end() ? zero_matrix(n()) : it->second;
  }

  Matrix mean() const { return coefficient(ModeIndex(dim_, 0)); }

  // Trigonometric sum at a real point.
  Matrix eval(std::span<const double> theta) const {
    Matrix acc = zero_matrix(n());
    for (const auto& [m, c] : coeffs_) {
      double phase = 0;
      for (int i = 0; i < dim_; ++i) phase += m[i] * theta[i];
      phase *= two_pi / period_;
      acc += std::polar(1.0, phase) * c;
    }
    return acc;
  }
  Matrix eval(std::initializer_list<double> theta) const {
    return eval(std::span<const double>(theta.begin(), theta.size()));
  }

  // Derivative along the flow direction: mode m picks up (2*pi*i/period)<m,omega>.
  TorusMap derive_omega(const FrequencyVector& omega) const {
    require_dim(omega.dim());
    TorusMap out(dim_, period_, derived_target());
    for (const auto& [m, c] : coeffs_) {
      Complex factor(0.0, two_pi / period_ * omega.dot(m));
      if (factor != Complex(0, 0)) out.coeffs_[m] = factor * c;
    }
    return out;
  }

  // Partial derivative of multi-index beta (spectral, exact).
  TorusMap derive_partial(std::span<const int> beta) const {
    TorusMap out(dim_, period_, derived_target());
    for (const auto& [m, c] : coeffs_) {
      Complex factor(1.0, 0.0);
      for (int i = 0; i < dim_; ++i)
        for (int b = 0; b < beta[i]; ++b) factor *= Complex(0.0, two_pi / period_ * m[i]);
      if (factor != Complex(0, 0)) out.coeffs_[m] = factor * c;
    }
    return out;
  }

  // Weighted-l1 coefficient majorant sum ||F_hat(m)|| e^{2 pi r |m|_1 / period}.
  // Upper-bounds the strip sup, so smallness checks made with it are
  // conservative.
  double analytic_norm(double r, ModeNorm mode_norm = ModeNorm::L1) const {
    if (!(r > 0)) throw ConfigError("analytic_norm: r > 0 required");
    double s = 0;
    for (const auto& [m, c] : coeffs_)
      s += op_norm(c) * std::exp(two_pi * r * mode_abs(m, mode_norm) / period_);
    return s;
  }

  // l1 sum of coefficient norms (= analytic norm at r -> 0+).
  double coeff_l1_norm() const {
    double s = 0;
    for (const auto& [m, c] : coeffs_) s += op_norm(c);
    return s;
  }

  // Keeps exactly the modes with |m| <= N; the complementary tail is returned
  // alongside so callers can report its norm.
  TorusMapTruncation truncate(double N, ModeNorm mode_norm = ModeNorm::L1) const;

  TorusMap scaled(Complex s) const {
    TorusMap out(dim_, period_, target_);
    if (s == Complex(0, 0)) return out;
    for (const auto& [m, c] : coeffs_) out.coeffs_[m] = s * c;
    return out;
  }

  TorusMap plus(const TorusMap& other) const {
    require_compatible(other);
    if (period_ != other.period_) {
      TorusMap a = to_period2();
      TorusMap b = other.to_period2();
      return a.plus(b);
    }
    TorusMap out = *this;
    for (const auto& [m, c] : other.coeffs_) out.add_mode(m, c);
    return out;
  }
  TorusMap minus(const TorusMap& other) const { return plus(other.scaled(-1.0)); }

  TorusMap plus_constant(const Matrix& a) const {
    TorusMap out = *this;
    out.add_mode(ModeIndex(dim_, 0), a);
    return out;
  }

  // Exact coefficient-wise multiplication by a constant matrix.
  TorusMap left_multiplied(const Matrix& b) const {
    TorusMap out(dim_, period_, Target::gl(n(), target_.real));
    for (const auto& [m, c] : coeffs_) {
      Matrix v = b * c;
      if (!v.isZero(0.0)) out.coeffs_[m] = std::move(v);
    }
    return out;
  }
  TorusMap right_multiplied(const Matrix& b) const {
    TorusMap out(dim_, period_, Target::gl(n(), target_.real));
    for (const auto& [m, c] : coeffs_) {
      Matrix v = c * b;
      if (!v.isZero(0.0)) out.coeffs_[m] = std::move(v);
    }
    return out;
  }

  bool is_identity(double tol = 0.0) const {
    if (coeffs_.size() != 1) return coeffs_.empty() && false;
    const auto& [m, c] = *coeffs_.begin();
    if (mode_l1(m) != 0) return false;
    return (c - identity_matrix(n())).cwiseAbs().maxCoeff() <= tol;
  }

  // Exact embedding into the double torus: mode indices double.
  TorusMap to_period2() const {
    if (period_ == 2) return *this;
    TorusMap out(dim_, 2, target_);
    for (const auto& [m, c] : coeffs_) {
      ModeIndex m2 = m;
      for (int& mi : m2) mi *= 2;
      out.coeffs_[std::move(m2)] = c;
    }
    return out;
  }

  // Projects a double-torus map onto its 1-periodic part (even coset). The
  // dropped odd-coset mass is reported; for maps that are structurally
  // 1-periodic it is floating-point dust.
  TorusMapCollapse collapse_to_period1() const;

  // Largest deviation from the real-form symmetry F_hat(-m) = conj(F_hat(m)).
  double reality_defect() const {
    double worst = 0;
    for (const auto& [m, c] : coeffs_) {
      Matrix mirror = coefficient(negate(m));
      worst = std::max(worst, op_norm(c - mirror.conjugate()));
    }
    return worst;
  }

  // Projects onto the real form (averages each +-m pair over the union of
  // their supports). No-op for complex targets.
  TorusMap symmetrized() const {
    if (!target_.real) return *this;
    TorusMap out(dim_, period_, target_);
    for (const auto& [m, c] : coeffs_) {
      Matrix avg = 0.5 * (c + coefficient(negate(m)).conjugate());
      if (!avg.isZero(0.0)) out.coeffs_[m] = avg;
      ModeIndex neg = negate(m);
      if (coeffs_.find(neg) == coeffs_.end()) {
        Matrix mirror = avg.conjugate();
        if (!mirror.isZero(0.0)) out.coeffs_[std::move(neg)] = std::move(mirror);
      }
    }
    return out;
  }

  TorusMap pruned(double floor) const {
    TorusMap out(dim_, period_, target_);
    for (const auto& [m, c] : coeffs_)
      if (op_norm(c) > floor) out.coeffs_[m] = c;
    return out;
  }

  long band_l1() const {
    long b = 0;
    for (const auto& [m, c] : coeffs_) b = std::max(b, mode_l1(m));
    return b;
  }
  int band_axis(int axis) const {
    int b = 0;
    for (const auto& [m, c] : coeffs_) b = std::max(b, std::abs(m[axis]));
    return b;
  }

  bool identical_coefficients(const TorusMap& other) const {
    if (dim_ != other.dim_ || period_ != other.period_) return false;
    if (coeffs_.size() != other.coeffs_.size()) return false;
    auto it = other.coeffs_.begin();
    for (auto jt = coeffs_.begin(); jt != coeffs_.end(); ++jt, ++it) {
      if (jt->first != it->first) return false;
      if ((jt->second - it->second).cwiseAbs().maxCoeff() != 0.0) return false;
    }
    return true;
  }

  // -- serialization: structured text, exact binary round-trip ------------

  void write(std::ostream& os) const {
    os << "torusmap dim " << dim_ << " period " << period_ << " target "
       << target_.name() << " n " << n() << " modes " << coeffs_.size() << "\n";
    os.precision(17);
    for (const auto& [m, c] : coeffs_) {
      for (int i = 0; i < dim_; ++i) os << m[i] << " ";
      for (int r = 0; r < n(); ++r)
        for (int col = 0; col < n(); ++col)
          os << c(r, col).real() << " " << c(r, col).imag()
             << ((r == n() - 1 && col == n() - 1) ? "" : " ");
      os << "\n";
    }
  }

  static TorusMap read(std::istream& is) {
    std::string kw, tag;
    int dim, period, n;
    size_t modes;
    is >> kw;
    if (kw != "torusmap") throw ConfigError("TorusMap::read: bad header");
    is >> kw >> dim >> kw >> period >> kw >> tag >> kw >> n >> kw >> modes;
    if (!is) throw ConfigError("TorusMap::read: truncated header");
    Target t = Target::parse(tag);
    t.n = n;
    TorusMap out(dim, period, t);
    for (size_t j = 0; j < modes; ++j) {
      ModeIndex m(dim);
      for (int i = 0; i < dim; ++i) is >> m[i];
      Matrix c(n, n);
      for (int r = 0; r < n; ++r)
        for (int col = 0; col < n; ++col) {
          double re, im;
          is >> re >> im;
          c(r, col) = Complex(re, im);
        }
      if (!is) throw ConfigError("TorusMap::read: truncated coefficients");
      out.coeffs_[std::move(m)] = std::move(c);
    }
    return out;
  }

  std::string to_string() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }
  static TorusMap from_string(const std::string& s) {
    std::istringstream is(s);
    return read(is);
  }

  static ModeIndex negate(const ModeIndex& m) {
    ModeIndex out = m;
    for (int& v : out) v = -v;
    return out;
  }

 private:
  Target derived_target() const {
    Target t = target_;
    t.group = false;  // derivatives live in the algebra side
    return t;
  }

  void check_mode(const ModeIndex& m, const Matrix& coeff) const {
    if (static_cast<int>(m.size()) != dim_)
      throw ConfigError("TorusMap: mode dimension mismatch");
    if (coeff.rows() != n() || coeff.cols() != n())
      throw ConfigError("TorusMap: coefficient size mismatch");
  }
  void require_dim(int d) const {
    if (d != dim_) throw ConfigError("TorusMap: dimension mismatch");
  }
  void require_compatible(const TorusMap& other) const {
    require_dim(other.dim_);
    if (n() != other.n()) throw ConfigError("TorusMap: size mismatch");
  }

  int dim_ = 1;
  int period_ = 1;
  Target target_ = Target::sl2R();
  CoeffMap coeffs_;
};

struct TorusMapTruncation {
  TorusMap kept;
  TorusMap tail;
};

struct TorusMapCollapse {
  TorusMap map;           // period-1 content
  double odd_coset_norm;  // l1 mass sitting on genuinely 2-periodic modes
};

inline TorusMapTruncation TorusMap::truncate(double N, ModeNorm mode_norm) const {
  if (N < 0) throw ConfigError("truncate: N >= 0 required");
  TorusMapTruncation t{TorusMap(dim_, period_, target_),
                       TorusMap(dim_, period_, target_)};
  for (const auto& [m, c] : coeffs_) {
    if (mode_abs(m, mode_norm) <= N)
      t.kept.coeffs_[m] = c;
    else
      t.tail.coeffs_[m] = c;
  }
  return t;
}

inline TorusMapCollapse TorusMap::collapse_to_period1() const {
  if (period_ == 1) return {*this, 0.0};
  TorusMapCollapse out{TorusMap(dim_, 1, target_), 0.0};
  for (const auto& [m, c] : coeffs_) {
    bool even = std::all_of(m.begin(), m.end(), [](int v) { return v % 2 == 0; });
    if (even) {
      ModeIndex half = m;
      for (int& mi : half) mi /= 2;
      out.map.coeffs_[std::move(half)] = c;
    } else {
      out.odd_coset_norm += op_norm(c);
    }
  }
  return out;
}

// norm(map, spec) for the analytic kind; the C^k kind needs grid machinery
// and lives in grid_algebra.hpp.
inline double analytic_norm(const TorusMap& f, double r,
                            ModeNorm mode_norm = ModeNorm::L1) {
  return f.analytic_norm(r, mode_norm);
}

}  // namespace kamreduce
