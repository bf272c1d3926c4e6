// Arithmetic conditions: frequency Diophantine margins, the second Melnikov
// condition on matrix spectra, and classification of rotation numbers against
// DC_omega(tau) and the frequency module. All verdicts are finite-scan
// certificates up to the recorded mode bound, never number-theoretic proofs.
#pragma once

#include <Eigen/Eigenvalues>
#include <functional>
#include <optional>

#include "kamreduce/common.hpp"

namespace kamreduce {

struct DiophantineParams {
  double kappa = 0.25;
  double tau = 1.0;
  ModeNorm mode_norm = ModeNorm::L1;

  DiophantineParams() = default;
  DiophantineParams(double kappa_, double tau_, ModeNorm mn = ModeNorm::L1)
      : kappa(kappa_), tau(tau_), mode_norm(mn) {
    if (!(kappa > 0 && kappa < 1)) throw ConfigError("DiophantineParams: 0 < kappa < 1");
    if (!(tau >= 1.0)) throw ConfigError("DiophantineParams: tau >= max(1, d-1)");
  }
};

// A resonant mode. When `half` is set the integers are modes of the double
// torus, i.e. the index represents m/2 in (1/2)Z^d.
struct ResonanceIndex {
  ModeIndex m;
  bool half = false;

  long l1() const { return mode_l1(m); }
  double inner(const FrequencyVector& omega) const {
    return omega.dot(m) * (half ? 0.5 : 1.0);
  }
  std::string to_string() const {
    return format_mode(m) + (half ? "/2" : "");
  }
};

namespace detail {

// (l1, lex) candidate priority used for every tie-break in this module.
inline bool mode_before(const ModeIndex& a, const ModeIndex& b) {
  long la = mode_l1(a), lb = mode_l1(b);
  if (la != lb) return la < lb;
  return a < b;
}

// Visits every m in Z^d with 0 < |m|_1 <= N in lexicographic order.
inline void scan_modes_l1(int d, long N, const std::function<void(const ModeIndex&)>& fn) {
  if (d == 2) {
    ModeIndex m(2);
    for (long m1 = -N; m1 <= N; ++m1) {
      long rest = N - std::abs(m1);
      m[0] = static_cast<int>(m1);
      for (long m2 = -rest; m2 <= rest; ++m2) {
        if (m1 == 0 && m2 == 0) continue;
        m[1] = static_cast<int>(m2);
        fn(m);
      }
    }
    return;
  }
  ModeIndex m(d, 0);
  std::function<void(int, long)> walk = [&](int axis, long budget) {
    if (axis == d - 1) {
      for (long v = -budget; v <= budget; ++v) {
        m[axis] = static_cast<int>(v);
        bool zero = std::all_of(m.begin(), m.end(), [](int x) { return x == 0; });
        if (!zero) fn(m);
      }
      return;
    }
    for (long v = -budget; v <= budget; ++v) {
      m[axis] = static_cast<int>(v);
      walk(axis + 1, budget - std::abs(v));
    }
    m[axis] = 0;
  };
  walk(0, N);
}

}  // namespace detail

struct FrequencyMargin {
  double kappa;       // min over the scan of |<m,omega>| * |m|^tau
  ModeIndex offender; // the minimizing mode
  long scan_bound;
};

// Brute-force Diophantine margin of omega up to |m|_1 <= N_max. Throws when
// an exact (to 1e-14) rational relation is hit.
inline FrequencyMargin frequency_dc_margin(const FrequencyVector& omega, double tau,
                                           long N_max,
                                           ModeNorm mode_norm = ModeNorm::L1) {
  if (N_max < 1) throw ConfigError("frequency_dc_margin: N_max >= 1");
  FrequencyMargin best{std::numeric_limits<double>::infinity(), {}, N_max};
  detail::scan_modes_l1(omega.dim(), N_max, [&](const ModeIndex& m) {
    double inner = std::abs(omega.dot(m));
    if (inner < 1e-14)
      throw ResonantFrequencyError("frequency_dc_margin: resonant frequency at m = " +
                                   format_mode(m));
    double margin = inner * std::pow(mode_abs(m, mode_norm), tau);
    if (margin < best.kappa ||
        (margin == best.kappa && detail::mode_before(m, best.offender))) {
      best.kappa = margin;
      best.offender = m;
    }
  });
  return best;
}

// Second Melnikov condition on the spectrum of A up to order N: returns the
// violating mode of smallest |m|_1 (lexicographic tie-break), or nothing when
// the spectrum is DC^N_omega(kappa', tau). Depends on A through its
// eigenvalues only.
inline std::optional<ResonanceIndex> melnikov_violation(
    const Matrix& a, const FrequencyVector& omega, double kappa_prime, double tau,
    long N, ModeNorm mode_norm = ModeNorm::L1) {
  if (N < 0) throw ConfigError("melnikov_violation: N >= 0");
  if (N == 0) return std::nullopt;
  Eigen::ComplexEigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  std::vector<double> imag;
  for (int i = 0; i < a.rows(); ++i) imag.push_back(es.eigenvalues()(i).imag());

  std::optional<ModeIndex> best;
  detail::scan_modes_l1(omega.dim(), N, [&](const ModeIndex& m) {
    if (best && !detail::mode_before(m, *best)) return;
    double gap = kappa_prime / std::pow(mode_abs(m, mode_norm), tau);
    double shift = two_pi * omega.dot(m);
    for (size_t j = 0; j < imag.size(); ++j)
      for (size_t k = 0; k < imag.size(); ++k)
        if (std::abs(imag[j] - imag[k] - shift) < gap) {
          best = m;
          return;
        }
  });
  if (!best) return std::nullopt;
  return ResonanceIndex{*best, false};
}

struct RotationClassifyOptions {
  double tol = 1e-9;          // M_omega membership tolerance, scaled by |m|_1
  double kappa_floor = 1e-12; // below this the diophantine verdict is withheld
  ModeNorm mode_norm = ModeNorm::L1;
};

struct RotationClassification {
  enum class Verdict { Diophantine, Rational, Undetermined };
  Verdict verdict = Verdict::Undetermined;
  double kappa_prime = 0.0;  // diophantine witness margin
  ModeIndex witness;         // rational witness (includes m = 0)
  double residual = 0.0;     // |z - 2 pi <witness, omega>|
  long scan_bound = 0;
  double tau = 0.0;

  bool is_rational() const { return verdict == Verdict::Rational; }
  bool is_diophantine() const { return verdict == Verdict::Diophantine; }
  std::string verdict_name() const {
    switch (verdict) {
      case Verdict::Diophantine: return "diophantine";
      case Verdict::Rational: return "rational";
      default: return "undetermined";
    }
  }
};

// Classifies z against the frequency module (rational witness of smallest
// |m|_1) or DC_omega(tau) with the scanned margin as kappa'.
inline RotationClassification classify_rotation_number(
    double z, const FrequencyVector& omega, double tau, long N_max,
    const RotationClassifyOptions& opt = {}) {
  if (N_max < 1) throw ConfigError("classify_rotation_number: N_max >= 1");
  if (!(opt.tol > 0)) throw ConfigError("classify_rotation_number: tol > 0");
  RotationClassification out;
  out.scan_bound = N_max;
  out.tau = tau;

  const int d = omega.dim();
  std::optional<ModeIndex> rational;
  double rational_residual = 0;
  double kappa_min = std::numeric_limits<double>::infinity();

  if (std::abs(z) <= opt.tol) {  // m = 0 is a member of the module
    rational = ModeIndex(d, 0);
    rational_residual = std::abs(z);
  }
  detail::scan_modes_l1(d, N_max, [&](const ModeIndex& m) {
    double l1 = mode_abs(m, opt.mode_norm);
    double diff = std::abs(z - two_pi * omega.dot(m));
    if (diff <= opt.tol * std::max(1.0, l1) &&
        (!rational || detail::mode_before(m, *rational))) {
      rational = m;
      rational_residual = diff;
    }
    kappa_min = std::min(kappa_min, diff * std::pow(l1, tau));
  });

  if (rational) {
    out.verdict = RotationClassification::Verdict::Rational;
    out.witness = *rational;
    out.residual = rational_residual;
    return out;
  }
  if (kappa_min > opt.kappa_floor) {
    out.verdict = RotationClassification::Verdict::Diophantine;
    out.kappa_prime = kappa_min;
    return out;
  }
  out.verdict = RotationClassification::Verdict::Undetermined;
  out.kappa_prime = kappa_min;
  return out;
}

}  // namespace kamreduce
