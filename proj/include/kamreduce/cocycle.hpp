// Direct dynamics of X' = (A + F(theta + t omega)) X: RK4 integration with
// group renormalization, fibered rotation number by continuous argument
// tracking, Lyapunov exponent, and the conjugation-residual overloads for
// whole systems.
#pragma once

#include "kamreduce/grid_algebra.hpp"

namespace kamreduce {

// Constant part + perturbation + frequency; realizes the perturbative system.
struct CocycleSystem {
  Matrix A;
  TorusMap F;  // period 1
  FrequencyVector omega;

  CocycleSystem(Matrix a, TorusMap f, FrequencyVector w)
      : A(std::move(a)), F(std::move(f)), omega(std::move(w)) {
    if (F.period() != 1) throw ConfigError("CocycleSystem: F must be 1-periodic");
    if (A.rows() != F.n()) throw ConfigError("CocycleSystem: size mismatch");
    if (omega.dim() != F.dim()) throw ConfigError("CocycleSystem: dim mismatch");
  }

  int n() const { return F.n(); }
  int dim() const { return F.dim(); }
  bool real_form() const { return F.target().real; }

  TorusMap to_map() const { return F.plus_constant(A); }

  struct Validation {
    double trace_defect;    // grid sup |tr(A + F)| for trace-free targets
    double reality_defect;  // coefficient symmetry defect
    bool ok(double tol = 1e-12) const {
      return trace_defect <= tol && reality_defect <= tol;
    }
  };

  Validation validate() const {
    Validation v{0.0, F.reality_defect()};
    if (F.target().special && !F.target().group) {
      TorusMap total = to_map();
      std::vector<int> band(dim()), keep(dim(), 0);
      for (int i = 0; i < dim(); ++i) band[i] = total.band_axis(i);
      GridData g = eval_on_grid(total, grid_sizes_for(band, keep, 4));
      for (const auto& val : g.values)
        v.trace_defect = std::max(v.trace_defect, std::abs(val.trace()));
    }
    return v;
  }
};

namespace detail {

// Precomputed evaluator for the real 2x2 coefficient A + F(theta0 + t omega).
struct RealCoeffPlan {
  Eigen::Matrix2d c0;
  struct Term {
    double phase0, rate;
    Eigen::Matrix2d cr, ci;
  };
  std::vector<Term> terms;

  RealCoeffPlan(const CocycleSystem& sys, std::span<const double> theta0) {
    c0 = sys.A.real();
    const double w = two_pi / sys.F.period();
    for (const auto& [m, c] : sys.F.coeffs()) {
      bool zero = std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
      if (zero) {
        c0 += c.real();
        continue;
      }
      // keep one representative per +-m pair (reality pairs them up)
      auto nz = std::find_if(m.begin(), m.end(), [](int v) { return v != 0; });
      if (*nz < 0) continue;
      double p0 = 0, rate = 0;
      for (size_t i = 0; i < m.size(); ++i) {
        p0 += m[i] * theta0[i];
        rate += m[i] * sys.omega.entries[i];
      }
      terms.push_back({w * p0, w * rate, 2.0 * c.real(), -2.0 * c.imag()});
    }
  }

  Eigen::Matrix2d operator()(double t) const {
    Eigen::Matrix2d acc = c0;
    for (const auto& term : terms) {
      double phi = term.phase0 + term.rate * t;
      acc += std::cos(phi) * term.cr + std::sin(phi) * term.ci;
    }
    return acc;
  }
};

// Generic complex coefficient evaluator for any n.
struct ComplexCoeffPlan {
  Matrix c0;
  struct Term {
    double phase0, rate;
    Matrix c;
  };
  std::vector<Term> terms;

  ComplexCoeffPlan(const CocycleSystem& sys, std::span<const double> theta0) {
    c0 = sys.A;
    const double w = two_pi / sys.F.period();
    for (const auto& [m, c] : sys.F.coeffs()) {
      double p0 = 0, rate = 0;
      for (size_t i = 0; i < m.size(); ++i) {
        p0 += m[i] * theta0[i];
        rate += m[i] * sys.omega.entries[i];
      }
      if (rate == 0 && p0 == 0)
        c0 += c;
      else
        terms.push_back({w * p0, w * rate, c});
    }
  }

  Matrix operator()(double t) const {
    Matrix acc = c0;
    for (const auto& term : terms)
      acc += std::polar(1.0, term.phase0 + term.rate * t) * term.c;
    return acc;
  }
};

template <typename Mat, typename Coeff>
inline Mat rk4_step(const Coeff& coeff, double t, double h, const Mat& x) {
  Mat k1 = coeff(t) * x;
  Mat k2 = coeff(t + 0.5 * h) * (x + 0.5 * h * k1);
  Mat k3 = coeff(t + 0.5 * h) * (x + 0.5 * h * k2);
  Mat k4 = coeff(t + h) * (x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

struct IntegrateOptions {
  bool renormalize_det = true;    // divide by sqrt(det) each step (SL(2,R) gate)
  int error_check_interval = 64;  // step-doubling sanity check cadence; 0 = off
  double step_tol = 1e-5;         // relative local error triggering StepSizeError
};

struct IntegrationResult {
  Matrix X;
  double raw_det_drift = 0.0;      // |prod det - 1| had we not renormalized
  double max_step_det_err = 0.0;   // worst per-step |det - 1| before renorm
  long steps = 0;
};

// Fundamental solution X^T(theta0). Classical RK4; for real trace-free 2x2
// systems the determinant is pushed back to 1 every step and the raw drift is
// reported.
inline IntegrationResult integrate(const CocycleSystem& sys,
                                   std::span<const double> theta0, double T, double h,
                                   const IntegrateOptions& opt = {}) {
  if (!(h > 0)) throw ConfigError("integrate: h > 0 required");
  if (!std::isfinite(T) || T < 0) throw ConfigError("integrate: T >= 0 finite required");
  const long n_steps = static_cast<long>(std::ceil(T / h - 1e-12));
  IntegrationResult out;
  out.steps = n_steps;
  int fail_streak = 0;
  double log_det_acc = 0.0;

  const bool fast = (sys.n() == 2 && sys.real_form());
  if (fast) {
    detail::RealCoeffPlan coeff(sys, theta0);
    Eigen::Matrix2d x = Eigen::Matrix2d::Identity();
    double t = 0;
    for (long s = 0; s < n_steps; ++s) {
      double hs = std::min(h, T - t);
      Eigen::Matrix2d xn = detail::rk4_step(coeff, t, hs, x);
      if (opt.error_check_interval > 0 && s % opt.error_check_interval == 0) {
        Eigen::Matrix2d half = detail::rk4_step(coeff, t, 0.5 * hs, x);
        half = detail::rk4_step(coeff, t + 0.5 * hs, 0.5 * hs, half);
        double err = (xn - half).norm() / (1.0 + half.norm());
        fail_streak = err > opt.step_tol ? fail_streak + 1 : 0;
        if (fail_streak >= 3)
          throw StepSizeError("integrate: local error persistently above tolerance");
      }
      double det = xn.determinant();
      out.max_step_det_err = std::max(out.max_step_det_err, std::abs(det - 1.0));
      if (opt.renormalize_det && det > 0) {
        log_det_acc += std::log(det);
        xn /= std::sqrt(det);
      }
      x = xn;
      t += hs;
    }
    out.X = x.cast<Complex>();
  } else {
    detail::ComplexCoeffPlan coeff(sys, theta0);
    Matrix x = identity_matrix(sys.n());
    double t = 0;
    for (long s = 0; s < n_steps; ++s) {
      double hs = std::min(h, T - t);
      Matrix xn = detail::rk4_step(coeff, t, hs, x);
      if (opt.renormalize_det && sys.F.target().special && sys.n() == 2) {
        Complex det = xn(0, 0) * xn(1, 1) - xn(0, 1) * xn(1, 0);
        log_det_acc += std::log(std::abs(det));
        xn /= std::sqrt(det);
      }
      x = xn;
      t += hs;
    }
    out.X = x;
  }
  out.raw_det_drift = std::abs(std::expm1(log_det_acc));
  return out;
}

inline IntegrationResult integrate(const CocycleSystem& sys, double T, double h,
                                   const IntegrateOptions& opt = {}) {
  std::vector<double> theta0(sys.dim(), 0.0);
  return integrate(sys, theta0, T, h, opt);
}

// Fibered rotation number estimate: continuous lift of the argument of
// X^t(theta0) phi0 divided by T, with the spread of the last three dyadic
// window averages as a (heuristic) error bracket.
struct RotationEstimate {
  double value = 0.0;
  double T = 0.0;
  double error_bound = 0.0;
  double lyapunov = 0.0;  // from the same renormalized trajectory
};

struct TraceRow {
  double t, arg_lift, log_growth;
};

struct RotationOptions {
  long trace_stride = 0;  // record every k-th step when > 0
  std::vector<TraceRow>* trace = nullptr;
};

inline RotationEstimate rotation_number(const CocycleSystem& sys, double T, double h,
                                        std::span<const double> theta0,
                                        std::span<const double> phi0,
                                        const RotationOptions& opt = {}) {
  if (!(h > 0) || !(T > 0)) throw ConfigError("rotation_number: T, h > 0 required");
  if (!(sys.n() == 2 && sys.real_form()))
    throw ConfigError("rotation_number: defined for real 2x2 systems");
  double norm_phi = std::hypot(phi0[0], phi0[1]);
  if (norm_phi == 0) throw ConfigError("rotation_number: phi0 != 0 required");

  detail::RealCoeffPlan coeff(sys, theta0);
  Eigen::Vector2d v(phi0[0] / norm_phi, phi0[1] / norm_phi);
  double t = 0, lift = 0, log_acc = 0;
  double integral = 0;  // trapezoid integral of the lift

  // checkpoints at k T/8 for the window averages of the lift
  double mark_t[8] = {0}, mark_lift[8] = {0}, mark_int[8] = {0};
  int next_mark = 1;

  auto advance = [&](double hs) {
    // keep the per-step rotation below pi/2 by local subdivision
    int parts = 1;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Eigen::Vector2d w = v;
      double dlift = 0, dlog = 0;
      bool ok = true;
      double hp = hs / parts;
      for (int p = 0; p < parts; ++p) {
        Eigen::Vector2d wn = detail::rk4_step(coeff, t + p * hp, hp, w);
        double cross = w.x() * wn.y() - w.y() * wn.x();
        double dot = w.x() * wn.x() + w.y() * wn.y();
        double dang = std::atan2(cross, dot);
        if (std::abs(dang) >= 0.5 * pi * 0.98) {
          ok = false;
          break;
        }
        dlift += dang;
        double g = wn.norm();
        dlog += std::log(g);
        w = wn / g;
      }
      if (ok) {
        v = w;
        integral += hs * (lift + 0.5 * dlift);
        lift += dlift;
        log_acc += dlog;
        return;
      }
      parts *= 2;
    }
    throw StepSizeError("rotation_number: per-step rotation could not be bounded");
  };

  long step_count = 0;
  while (t < T - 1e-12) {
    double hs = std::min(h, T - t);
    advance(hs);
    t += hs;
    ++step_count;
    while (next_mark < 8 && t >= next_mark * T / 8.0 - 1e-12) {
      mark_t[next_mark] = t;
      mark_lift[next_mark] = lift;
      mark_int[next_mark] = integral;
      ++next_mark;
    }
    if (opt.trace && opt.trace_stride > 0 && step_count % opt.trace_stride == 0)
      opt.trace->push_back({t, lift, log_acc});
  }

  // Averaged estimator: with L(t) = rho t + bounded(t), the lift means over
  // [u,v] and [v,w] differ by rho (w - u)/2 up to window averages of the
  // bounded part, which decay like 1/window. This kills the O(1/T)
  // phase-oscillation bias of the plain lift(T)/T.
  mark_t[0] = 0;
  mark_lift[0] = 0;
  mark_int[0] = 0;
  const double t_end = t, i_end = integral;
  auto segment_mean = [&](double ta, double ia, double tb, double ib) {
    return (ib - ia) / (tb - ta);
  };
  auto paired = [&](int u, int v, double tw, double iw) {
    double m1 = segment_mean(mark_t[u], mark_int[u], mark_t[v], mark_int[v]);
    double m2 = segment_mean(mark_t[v], mark_int[v], tw, iw);
    return 2.0 * (m2 - m1) / (tw - mark_t[u]);
  };
  RotationEstimate est;
  est.T = T;
  est.value = paired(0, 4, t_end, i_end);
  est.lyapunov = log_acc / t_end;
  double w1 = paired(0, 2, mark_t[4], mark_int[4]);
  double w2 = paired(2, 4, mark_t[6], mark_int[6]);
  double w3 = paired(4, 6, t_end, i_end);
  double lo = std::min({w1, w2, w3}), hi = std::max({w1, w2, w3});
  est.error_bound = std::max(hi - lo, 1e-14 * (1.0 + std::abs(est.value)));
  return est;
}

inline RotationEstimate rotation_number(const CocycleSystem& sys, double T, double h,
                                        const RotationOptions& opt = {}) {
  std::vector<double> theta0(sys.dim(), 0.0);
  double phi0[2] = {1.0, 0.0};
  return rotation_number(sys, T, h, theta0, std::span<const double>(phi0, 2), opt);
}

// (1/T) log ||X^T||, propagating the whole frame with scalar renormalization
// so the operator norm (not a single direction's growth) is measured.
inline double lyapunov_exponent(const CocycleSystem& sys, double T, double h) {
  if (sys.n() == 2 && sys.real_form()) {
    std::vector<double> theta0(sys.dim(), 0.0);
    detail::RealCoeffPlan coeff(sys, theta0);
    Eigen::Matrix2d x = Eigen::Matrix2d::Identity();
    double t = 0, acc = 0;
    while (t < T - 1e-12) {
      double hs = std::min(h, T - t);
      x = detail::rk4_step(coeff, t, hs, x);
      double g = x.norm();  // Frobenius renormalization keeps conditioning
      acc += std::log(g);
      x /= g;
      t += hs;
    }
    return (acc + std::log(op_norm(x.cast<Complex>()))) / t;
  }
  IntegrationResult r = integrate(sys, T, h, {.renormalize_det = false});
  return std::log(op_norm(r.X)) / T;
}

// Transports a coefficient map through a conjugation: Z^{-1}(L Z - d_omega Z),
// the exact "new system" under X = Z Y. Aliasing from the pointwise algebra is
// accumulated into the result's residual field.
inline PointwiseResult conjugate_coefficient(const TorusMap& lhs, const TorusMap& z,
                                             const FrequencyVector& omega,
                                             const PointwiseConfig& cfg = {}) {
  PointwiseResult lz = pw_multiply(lhs, z, cfg);
  TorusMap numer = lz.map.minus(z.derive_omega(omega));
  PointwiseResult zinv = pw_invert(z, cfg);
  PointwiseResult out = pw_multiply(zinv.map, numer, cfg);
  out.aliasing_residual =
      std::max({out.aliasing_residual, lz.aliasing_residual, zinv.aliasing_residual});
  return out;
}

inline double conjugation_residual(const TorusMap& z, const CocycleSystem& lhs,
                                   const TorusMap& rhs,
                                   std::optional<int> grid_override = std::nullopt) {
  return conjugation_residual(z, lhs.to_map(), rhs, lhs.omega, grid_override);
}

inline double conjugation_residual(const TorusMap& z, const TorusMap& lhs,
                                   const Matrix& rhs_const, const FrequencyVector& omega,
                                   std::optional<int> grid_override = std::nullopt) {
  TorusMap rhs = TorusMap::constant(lhs.dim(), lhs.target(), rhs_const);
  return conjugation_residual(z, lhs, rhs, omega, grid_override);
}

}  // namespace kamreduce
