// Shared basics: mode indices, frequency vectors, target tags, matrix helpers,
// and the error types thrown across the library.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kamreduce {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

using Matrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

// A Fourier mode on T^d (or, for period-2 maps, on the double torus,
// where the stored integers are half-frequencies).
using ModeIndex = std::vector<int>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct SingularMapError : Error {
  using Error::Error;
};
struct ResonantFrequencyError : Error {
  using Error::Error;
};
struct GateError : Error {
  using Error::Error;
};
struct ParabolicConstantError : Error {
  using Error::Error;
};
struct StepSizeError : Error {
  using Error::Error;
};

// Which norm |m| means in small-divisor bounds. The l1 choice is the default
// everywhere; sup is kept as a sensitivity knob.
enum class ModeNorm { L1, Sup };

inline double mode_abs(std::span<const int> m, ModeNorm which = ModeNorm::L1) {
  if (which == ModeNorm::L1) {
    long s = 0;
    for (int mi : m) s += std::abs(static_cast<long>(mi));
    return static_cast<double>(s);
  }
  long s = 0;
  for (int mi : m) s = std::max(s, std::abs(static_cast<long>(mi)));
  return static_cast<double>(s);
}

inline long mode_l1(std::span<const int> m) {
  long s = 0;
  for (int mi : m) s += std::abs(static_cast<long>(mi));
  return s;
}

// Rationally independent generators of the torus translation flow; entries in
// radians-per-unit-time after the 2*pi convention of the flow theta + t*omega.
struct FrequencyVector {
  std::vector<double> entries;

  FrequencyVector() = default;
  explicit FrequencyVector(std::vector<double> e) : entries(std::move(e)) {
    if (entries.empty()) throw ConfigError("FrequencyVector: d >= 1 required");
    for (double x : entries)
      if (!std::isfinite(x)) throw ConfigError("FrequencyVector: entries must be finite");
  }

  int dim() const { return static_cast<int>(entries.size()); }

  double dot(std::span<const int> m) const {
    double s = 0;
    for (size_t i = 0; i < entries.size(); ++i) s += entries[i] * m[i];
    return s;
  }
};

inline double golden_mean() { return (std::sqrt(5.0) - 1.0) / 2.0; }

// Golden-mean frequency pair (1, (sqrt(5)-1)/2), the standard test frequency.
inline FrequencyVector golden_frequency() {
  return FrequencyVector({1.0, golden_mean()});
}

// Value-space tag for a map: matrix size plus real-form / group / trace-or-det
// structure. Arithmetic is tag-agnostic; the tag drives reality bookkeeping
// and validation only.
struct Target {
  int n = 2;
  bool real = true;     // real form: F_hat(-m) = conj(F_hat(m))
  bool group = false;   // group-valued (multiplicative) vs algebra-valued
  bool special = true;  // sl/SL: trace-free resp. det 1

  static Target sl2R() { return {2, true, false, true}; }
  static Target SL2R() { return {2, true, true, true}; }
  static Target gl(int n, bool real = false) { return {n, real, false, false}; }
  static Target GL(int n, bool real = false) { return {n, real, true, false}; }
  static Target scalar() { return {1, true, false, false}; }

  std::string name() const {
    std::string base;
    if (special)
      base = group ? "SL" : "sl";
    else
      base = group ? "GL" : "gl";
    return base + "(" + std::to_string(n) + "," + (real ? "R" : "C") + ")";
  }

  static Target parse(const std::string& s) {
    auto l = s.find('(');
    auto c = s.find(',');
    auto r = s.find(')');
    if (l == std::string::npos || c == std::string::npos || r == std::string::npos)
      throw ConfigError("Target::parse: bad tag '" + s + "'");
    Target t;
    std::string base = s.substr(0, l);
    if (base == "SL" || base == "sl")
      t.special = true;
    else if (base == "GL" || base == "gl")
      t.special = false;
    else
      throw ConfigError("Target::parse: unknown base '" + base + "'");
    t.group = (base == "SL" || base == "GL");
    t.n = std::stoi(s.substr(l + 1, c - l - 1));
    std::string field = s.substr(c + 1, r - c - 1);
    t.real = (field == "R");
    return t;
  }

  bool operator==(const Target&) const = default;
};

// Operator (spectral) norm. Closed form for n <= 2, SVD otherwise.
inline double op_norm(const Matrix& a) {
  const auto rows = a.rows();
  if (rows == 1) return std::abs(a(0, 0));
  if (rows == 2 && a.cols() == 2) {
    double f = a.squaredNorm();
    double g = std::norm(a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0));
    double disc = std::max(0.0, f * f - 4.0 * g);
    return std::sqrt(0.5 * (f + std::sqrt(disc)));
  }
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

inline Matrix zero_matrix(int n) { return Matrix::Zero(n, n); }
inline Matrix identity_matrix(int n) { return Matrix::Identity(n, n); }

// Signed fibered rotation number of the constant system X' = BX for real
// trace-free 2x2 B: sqrt(det B) with the orientation of the winding, 0 in the
// hyperbolic/parabolic case.
inline double rotation_of_constant(const Matrix& b) {
  if (b.rows() != 2) throw Error("rotation_of_constant: 2x2 expected");
  double det = (b(0, 0) * b(1, 1) - b(0, 1) * b(1, 0)).real();
  if (det <= 0.0) return 0.0;
  double alpha = std::sqrt(det);
  double c = b(1, 0).real();
  return c >= 0 ? alpha : -alpha;
}

inline std::string format_mode(std::span<const int> m) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << m[i];
  os << ")";
  return os.str();
}

}  // namespace kamreduce
