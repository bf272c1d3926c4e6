// One inductive step of the reduction scheme: conjugate the perturbation into
// the constant frame, truncate, gate the constant's spectrum (second Melnikov
// condition), remove at most one resonance by a double-torus rotation, solve
// the linearized (homological) equation mode by mode, exponentiate, and
// assemble the new pair by exact grid algebra. Quantitative conclusions whose
// constants are not desk-verifiable are logged as measured-vs-form
// diagnostics, never silently assumed.
#pragma once

#include "kamreduce/cocycle.hpp"
#include "kamreduce/diophantine.hpp"

namespace kamreduce {

enum class GateMode { Paper, Practical, Off };

inline std::string gate_mode_name(GateMode g) {
  switch (g) {
    case GateMode::Paper: return "paper";
    case GateMode::Practical: return "practical";
    default: return "off";
  }
}

struct StepParams {
  double r = 0.5;        // input strip
  double r_out = 1.0 / 3.0;  // output strip r'' in (0, r)
  int n = 2;
  DiophantineParams dioph;
  double C = 0.5;  // scheme constant of the paper gate ("one can assume C <= 1/2")
  int D = 10;      // existential exponent; configurable
  GateMode gate = GateMode::Practical;
  double practical_gate_factor = 1e-3;  // practical gate: eps < factor * (r - r'')
  // Melnikov threshold actually applied: max(kappa'', window_factor * sqrt(eps)).
  // The paper's kappa'' is astronomically small at desk scale; sqrt(eps) is the
  // scale at which removal keeps ||A'|| <= kappa'' + sqrt(eps).
  double resonance_window_factor = 1.0;
  double reducibility_tol = 1e-9;  // input residual gate for (A_bar, Psi, A)
  bool validate_input = true;
  PointwiseConfig pw;

  void check() const {
    if (!(r > 0 && r <= 0.5)) throw ConfigError("StepParams: 0 < r <= 1/2");
    if (!(r_out > 0 && r_out < r)) throw ConfigError("StepParams: 0 < r'' < r");
  }
  bool paper_strip_range() const { return r_out >= 95.0 / 96.0 * r; }
};

struct StepConstants {
  double N;       // truncation order |log eps| / (2 pi r)
  double R;       // 80^4 (n(n-1)/2 + 1)^2 / (r - r'')^8
  double kappa2;  // kappa / (n (8 R^{n(n-1)/2+1} N)^tau)
};

inline StepConstants step_constants(double r, double r_out, double eps, int n,
                                    const DiophantineParams& dioph) {
  if (!(eps > 0)) throw ConfigError("step_constants: eps > 0 required");
  StepConstants c{};
  c.N = std::abs(std::log(eps)) / (two_pi * r);
  const double e = 0.5 * n * (n - 1) + 1;
  c.R = std::pow(80.0, 4) * e * e / std::pow(r - r_out, 8);
  // evaluated in logs: R^e N is astronomically large for tight strips
  double log_k2 = std::log(dioph.kappa) - std::log(static_cast<double>(n)) -
                  dioph.tau * (std::log(8.0) + e * std::log(c.R) + std::log(c.N));
  c.kappa2 = std::exp(log_k2);
  return c;
}

// ---------------------------------------------------------------------------

struct HomologicalSolution {
  TorusMap z;          // solves d_omega Z - [A, Z] = G - remainder, exactly
  TorusMap remainder;  // content on modes declared resonant (and any mean)
  std::vector<ResonanceIndex> resonant_modes;
  double min_divisor = std::numeric_limits<double>::infinity();
};

// Mode-by-mode direct solve of the linearized conjugation equation. A mode is
// declared resonant when the smallest singular value of
// (2 pi i <m,omega> I - ad_A) falls below kappa_thresh / (2 |m|^tau); those
// modes are skipped and their content returned untouched. Resonance is data,
// not failure.
inline HomologicalSolution solve_homological(const Matrix& a, const TorusMap& g,
                                             const FrequencyVector& omega,
                                             double kappa_thresh, double tau,
                                             ModeNorm mode_norm = ModeNorm::L1) {
  const int n = static_cast<int>(a.rows());
  HomologicalSolution out{TorusMap(g.dim(), g.period(), g.target()),
                          TorusMap(g.dim(), g.period(), g.target()),
                          {}};
  Matrix ad = Matrix::Zero(n * n, n * n);  // vec(AX - XA), column-major vec
  Matrix id = identity_matrix(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          // (I (x) A - A^T (x) I)
          Complex v = (j == l ? a(i, k) : Complex(0, 0)) -
                      (i == k ? a(l, j) : Complex(0, 0));
          ad(j * n + i, l * n + k) += v;
        }

  for (const auto& [m, c] : g.coeffs()) {
    if (mode_l1(m) == 0) {  // zero mean expected; stays in the remainder
      out.remainder.set_mode(m, c);
      continue;
    }
    double nu = two_pi / g.period() * omega.dot(m);
    Matrix op = Complex(0, nu) * Matrix::Identity(n * n, n * n) - ad;
    Eigen::JacobiSVD<Matrix> svd(op, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double smin = svd.singularValues()(n * n - 1);
    out.min_divisor = std::min(out.min_divisor, smin);
    double bar = kappa_thresh / (2.0 * std::pow(mode_abs(m, mode_norm), tau));
    if (smin < bar) {
      out.remainder.set_mode(m, c);
      out.resonant_modes.push_back(ResonanceIndex{m, g.period() == 2});
      continue;
    }
    Eigen::Map<const Matrix> rhs_vec(c.data(), n * n, 1);
    Matrix sol = svd.solve(rhs_vec);
    Matrix zc(n, n);
    for (int col = 0; col < n; ++col)
      for (int row = 0; row < n; ++row) zc(row, col) = sol(col * n + row, 0);
    out.z.set_mode(m, zc);
  }
  if (g.target().real) out.z = out.z.symmetrized();
  return out;
}

// ---------------------------------------------------------------------------

struct ResonanceRemoval {
  TorusMap rotation;       // Phi(theta) = exp(pi <m,theta> J_A), period 2
  Matrix a_shifted;        // A - pi <m,omega> J_A
  ResonanceIndex tracked;  // half-integer index M (orientation-adjusted)
  double rotation_shift;   // 2 pi <M, omega> = rho(A) - rho(A_shift), exact
  double alpha;            // |Im spectrum| of A
};

// Pre-conjugation killing the resonance at mode m: rotate by the half-angle
// winding in A's real eigenframe. Requires an elliptic (diagonalizable,
// nonreal spectrum) trace-free real constant; the parabolic case has no
// recipe here and is refused.
inline ResonanceRemoval remove_resonance(const Matrix& a, const ModeIndex& m,
                                         const FrequencyVector& omega) {
  const int n = static_cast<int>(a.rows());
  if (n != 2) throw ConfigError("remove_resonance: 2x2 constants only");
  const int d = static_cast<int>(m.size());

  if (mode_l1(m) == 0) {
    TorusMap id(d, 2, Target::SL2R());
    id.set_mode(ModeIndex(d, 0), identity_matrix(2));
    return {id, a, ResonanceIndex{ModeIndex(d, 0), true}, 0.0, 0.0};
  }

  double tr = std::abs(a.trace());
  double scale = std::max(1.0, op_norm(a));
  if (tr > 1e-9 * scale)
    throw ConfigError("remove_resonance: trace-free constant expected");
  Complex detc = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  double det = detc.real();
  if (det <= 1e-14 * scale * scale)
    throw ParabolicConstantError(
        "remove_resonance: constant is not elliptic (parabolic/hyperbolic case "
        "has no rotation frame)");
  double alpha = std::sqrt(det);
  Matrix j_a = a / alpha;  // unit rotation generator in A's real eigenframe

  double angle_rate = pi * omega.dot(m);
  Matrix a_shift = a - angle_rate * j_a;

  // Phi = cos(pi<m,theta>) I + sin(pi<m,theta>) J_A, half-frequency modes +-m
  TorusMap phi(d, 2, Target::SL2R());
  Matrix id2 = identity_matrix(2);
  const Complex i_unit(0, 1);
  phi.set_mode(m, 0.5 * (id2 - i_unit * j_a));
  phi.set_mode(TorusMap::negate(m), 0.5 * (id2 + i_unit * j_a));

  // rho(A) = sign(A_21) alpha; the tracked index absorbs the orientation so
  // that rho(A) - rho(A_shift) = 2 pi <M, omega> exactly.
  double orient = j_a(1, 0).real() >= 0 ? 1.0 : -1.0;
  ModeIndex m_eff = m;
  if (orient < 0)
    for (int& v : m_eff) v = -v;
  double shift = orient * angle_rate;
  return {phi, a_shift, ResonanceIndex{m_eff, true}, shift, alpha};
}

// ---------------------------------------------------------------------------

// Measured-vs-form diagnostics for the conclusions whose constants are
// existential (logged, not hard-failed).
struct StepBounds {
  double contraction_exponent;  // log eps' / log eps (form: in [R^{n^2}, 100])
  double psi_norm, psi_norm_form;        // |Psi'|_{r''} vs (1/eps')^{(r-r'')/4}
  double a_norm, a_norm_form;            // ||A'|| vs ||A|| + |log eps| (r-r'')^{-D}
  double z_dist, z_dist_form;            // |Z'-Id|_{r''} vs the stated form
  bool psi_ok, a_ok, z_ok;
};

struct StepDiagnostics {
  double eps_in = 0;               // |F_bar|_r
  StepConstants constants{};       // paper N, R, kappa''
  double kappa_eff = 0;            // threshold actually applied
  bool paper_strip_range = true;   // r'' in [95r/96, r)
  GateMode gate = GateMode::Practical;
  bool gate_passed = true;
  bool melnikov_clean = true;      // no violation found
  double truncation_tail = 0;      // |G - T_N G|_{r''}
  double odd_coset_mass = 0;       // worst 2-periodic leak in 1-periodic slots
  double aliasing = 0;             // worst pointwise-algebra residual
  double input_residual = 0;       // conjugation residual of (A_bar, Psi, A)
  double exact_conjugacy_residual = 0;  // d_omega Z' vs (A_bar+F_bar, A_bar'+F_bar')
  double homological_min_divisor = 0;
  size_t skipped_resonant_modes = 0;
  double rotation_residual = std::numeric_limits<double>::quiet_NaN();
  StepBounds bounds{};
};

struct KamStepResult {
  TorusMap z;        // Z' in C^omega(T^d, G)
  TorusMap a_bar;    // A_bar' (1-periodic, reducible to a_const by psi)
  TorusMap f_bar;    // F_bar' (1-periodic)
  TorusMap psi;      // Psi' on the double torus
  Matrix a_const;    // A'
  double eps_out;    // |F_bar'|_{r''}
  std::optional<ResonanceIndex> resonance;  // M in (1/2)Z^d when removed
  double rotation_shift;  // 2 pi <M, omega> (0 when no resonance)
  double rotation_shift_bound;  // sqrt(eps): bound on the ledger residual
  StepDiagnostics diag;
};

namespace detail {

inline TorusMap conjugate_by(const TorusMap& g, const TorusMap& q,
                             const PointwiseConfig& cfg, double* aliasing) {
  // q^{-1} g q for group-valued q
  PointwiseResult qi = pw_invert(q, cfg);
  PointwiseResult gq = pw_multiply(g, q, cfg);
  PointwiseResult out = pw_multiply(qi.map, gq.map, cfg);
  if (aliasing)
    *aliasing = std::max({*aliasing, qi.aliasing_residual, gq.aliasing_residual,
                          out.aliasing_residual});
  return out.map;
}

inline Matrix structured_mean(const TorusMap& g) {
  Matrix m = g.mean();
  if (g.target().real) m = m.real().cast<Complex>();
  if (g.target().special && g.n() > 0) {
    Complex tr = m.trace() / static_cast<double>(g.n());
    m -= tr * identity_matrix(g.n());
  }
  return m;
}

}  // namespace detail

// One full step. Input: (A_bar + F_bar) on strip r with A_bar reducible to A
// by Psi. Output contract: d_omega Z' = (A_bar+F_bar) Z' - Z' (A_bar'+F_bar')
// holds to grid accuracy by construction, A_bar' is reducible to A' by Psi',
// and either no resonance was met (then Psi' == Psi coefficient for
// coefficient) or ||A'|| <= kappa'' + sqrt(eps).
inline KamStepResult kam_step(const TorusMap& a_bar, const TorusMap& f_bar,
                              const TorusMap& psi, const Matrix& a_const,
                              const FrequencyVector& omega, const StepParams& params) {
  params.check();
  const int d = f_bar.dim();
  const int n = f_bar.n();
  const PointwiseConfig& pw = params.pw;

  KamStepResult res{f_bar, a_bar, f_bar, psi, a_const, 0.0, std::nullopt, 0.0, 0.0, {}};
  StepDiagnostics& diag = res.diag;
  diag.gate = params.gate;
  diag.paper_strip_range = params.paper_strip_range();

  const double eps = f_bar.analytic_norm(params.r, params.dioph.mode_norm);
  diag.eps_in = eps;

  if (eps < 1e-300) {  // nothing to do
    res.z = TorusMap::identity(d, Target{n, f_bar.target().real, true,
                                         f_bar.target().special});
    res.f_bar = TorusMap::zero(d, f_bar.target());
    res.eps_out = 0.0;
    diag.gate_passed = true;
    return res;
  }

  if (params.validate_input) {
    diag.input_residual =
        conjugation_residual(psi, a_bar, a_const, omega);
    if (diag.input_residual > params.reducibility_tol)
      throw ConfigError("kam_step: input pair fails the reducibility check");
  }

  // smallness gate
  const double dr = params.r - params.r_out;
  switch (params.gate) {
    case GateMode::Paper: {
      double bound = params.C * std::pow(dr, params.D) /
                     std::pow(op_norm(a_const) + 1.0, params.D);
      diag.gate_passed = eps <= bound;
      break;
    }
    case GateMode::Practical:
      diag.gate_passed = eps < params.practical_gate_factor * dr;
      break;
    case GateMode::Off:
      diag.gate_passed = true;
      break;
  }
  if (!diag.gate_passed)
    throw GateError("kam_step: smallness gate failed (" + gate_mode_name(params.gate) +
                    ", eps = " + std::to_string(eps) + ")");

  diag.constants = step_constants(params.r, params.r_out, eps, n, params.dioph);
  const double sqrt_eps = std::sqrt(eps);
  diag.kappa_eff =
      std::max(diag.constants.kappa2, params.resonance_window_factor * sqrt_eps);

  // 1. perturbation in the constant frame (1-periodic by the structure of Psi)
  const bool psi_trivial = psi.is_identity();
  TorusMap g_full = f_bar;
  if (!psi_trivial) {
    TorusMap conj = detail::conjugate_by(f_bar.to_period2(), psi, pw, &diag.aliasing);
    auto collapsed = conj.collapse_to_period1();
    diag.odd_coset_mass = std::max(diag.odd_coset_mass, collapsed.odd_coset_norm);
    g_full = collapsed.map;
    g_full.set_target(f_bar.target());
  }

  // 2. truncation at N
  auto trunc = g_full.truncate(diag.constants.N, params.dioph.mode_norm);
  if (!trunc.tail.empty())
    diag.truncation_tail = trunc.tail.analytic_norm(params.r_out, params.dioph.mode_norm);

  // 3. first constant update by the mean
  Matrix mean1 = detail::structured_mean(trunc.kept);
  Matrix a1 = a_const + mean1;
  TorusMap g0 = trunc.kept.minus(TorusMap::constant(d, trunc.kept.target(), mean1));

  // 4. Melnikov gate on the updated constant, one removal at most
  long n_scan = std::max<long>(1, static_cast<long>(std::floor(diag.constants.N)));
  auto violation = melnikov_violation(a1, omega, diag.kappa_eff, params.dioph.tau,
                                      n_scan, params.dioph.mode_norm);
  diag.melnikov_clean = !violation.has_value();

  TorusMap psi_out = psi;
  Matrix a2 = a1;
  TorusMap g1 = g0;
  if (violation) {
    ModeIndex m = violation->m;
    if (omega.dot(m) < 0) m = TorusMap::negate(m);  // match the +alpha pairing
    ResonanceRemoval rem = remove_resonance(a1, m, omega);
    a2 = rem.a_shifted;
    res.resonance = rem.tracked;
    res.rotation_shift = rem.rotation_shift;
    PointwiseResult prod = pw_multiply(psi, rem.rotation, pw);
    diag.aliasing = std::max(diag.aliasing, prod.aliasing_residual);
    psi_out = prod.map;
    TorusMap conj = detail::conjugate_by(g0.to_period2(), rem.rotation, pw,
                                         &diag.aliasing);
    auto collapsed = conj.collapse_to_period1();
    diag.odd_coset_mass = std::max(diag.odd_coset_mass, collapsed.odd_coset_norm);
    g1 = collapsed.map;
    g1.set_target(g0.target());
  }

  // 5. second mean update (the removal shifts content onto the zero mode)
  Matrix mean2 = detail::structured_mean(g1);
  Matrix a_new = a2 + mean2;
  TorusMap g2 = g1.minus(TorusMap::constant(d, g1.target(), mean2));

  // 6. homological solve and exponential
  HomologicalSolution hom = solve_homological(a_new, g2, omega, diag.kappa_eff,
                                              params.dioph.tau, params.dioph.mode_norm);
  diag.homological_min_divisor = hom.min_divisor;
  diag.skipped_resonant_modes = hom.resonant_modes.size();
  PointwiseResult expz = pw_exponentiate(hom.z, pw);
  diag.aliasing = std::max(diag.aliasing, expz.aliasing_residual);
  TorusMap e = expz.map;

  // 7. transport back to the outer frame: Z' = Psi' E Psi'^{-1} (1-periodic)
  TorusMap z_out = e;
  if (!psi_out.is_identity()) {
    // conjugate_by(e, q) gives q^{-1} e q, so conjugate by Psi'^{-1}
    PointwiseResult qi = pw_invert(psi_out, pw);
    diag.aliasing = std::max(diag.aliasing, qi.aliasing_residual);
    TorusMap back = detail::conjugate_by(e.to_period2(), qi.map, pw, &diag.aliasing);
    auto collapsed = back.collapse_to_period1();
    diag.odd_coset_mass = std::max(diag.odd_coset_mass, collapsed.odd_coset_norm);
    z_out = collapsed.map;
    z_out.set_target(Target{n, f_bar.target().real, true, f_bar.target().special});
  }

  // 8. new reducible part A_bar' = (d_omega Psi' + Psi' A') Psi'^{-1}
  TorusMap a_bar_out;
  if (psi_out.is_identity()) {
    a_bar_out = TorusMap::constant(d, a_bar.target(), a_new);
  } else {
    TorusMap numer = psi_out.derive_omega(omega).plus(psi_out.right_multiplied(a_new));
    PointwiseResult qi = pw_invert(psi_out, pw);
    PointwiseResult prod = pw_multiply(numer, qi.map, pw);
    diag.aliasing = std::max({diag.aliasing, qi.aliasing_residual,
                              prod.aliasing_residual});
    auto collapsed = prod.map.collapse_to_period1();
    diag.odd_coset_mass = std::max(diag.odd_coset_mass, collapsed.odd_coset_norm);
    a_bar_out = collapsed.map;
    a_bar_out.set_target(a_bar.target());
  }

  // 9. exact assembly of the new perturbation on the grid
  TorusMap lhs = a_bar.plus(f_bar);
  PointwiseResult transported = conjugate_coefficient(lhs, z_out, omega, pw);
  diag.aliasing = std::max(diag.aliasing, transported.aliasing_residual);
  TorusMap f_out = transported.map.minus(a_bar_out);
  if (f_out.target().real) f_out = f_out.symmetrized();
  f_out.set_target(f_bar.target());
  f_out = f_out.pruned(pw.prune_floor);

  res.z = z_out;
  res.a_bar = a_bar_out;
  res.f_bar = f_out;
  res.psi = psi_out;
  res.a_const = a_new;
  res.eps_out = f_out.analytic_norm(params.r_out, params.dioph.mode_norm);
  res.rotation_shift_bound = sqrt_eps;

  // 10. diagnostics: exact-conjugacy residual and measured-vs-form bounds
  diag.exact_conjugacy_residual =
      conjugation_residual(z_out, lhs, a_bar_out.plus(f_out), omega);
  if (n == 2 && f_bar.target().real) {
    double rho_in = rotation_of_constant(a_const);
    double rho_out = rotation_of_constant(a_new);
    diag.rotation_residual = std::abs(rho_in - rho_out - res.rotation_shift);
  }

  StepBounds& b = diag.bounds;
  b.contraction_exponent =
      res.eps_out > 0 ? std::log(res.eps_out) / std::log(eps) : std::numeric_limits<double>::infinity();
  double eps_out_clamped = std::max(res.eps_out, 1e-300);
  b.psi_norm = psi_out.analytic_norm(params.r_out, params.dioph.mode_norm);
  b.psi_norm_form = std::pow(1.0 / eps_out_clamped, 0.25 * dr);
  b.psi_ok = b.psi_norm <= b.psi_norm_form;
  b.a_norm = op_norm(a_new);
  b.a_norm_form = op_norm(a_const) + std::abs(std::log(eps)) * std::pow(1.0 / dr, params.D);
  b.a_ok = b.a_norm <= b.a_norm_form;
  TorusMap z_dist = z_out.minus(TorusMap::identity(d, z_out.target()));
  b.z_dist = z_dist.empty() ? 0.0 : z_dist.analytic_norm(params.r_out, params.dioph.mode_norm);
  b.z_dist_form = 1.0 / params.C *
                  std::pow((1.0 + op_norm(a_const)) * std::abs(std::log(eps)) / dr,
                           params.D) *
                  std::pow(eps, 1.0 - 4.0 * dr);
  b.z_ok = b.z_dist <= b.z_dist_form;

  return res;
}

}  // namespace kamreduce
