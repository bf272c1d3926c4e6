// The full iteration: analytic-approximation sequence feeding repeated KAM
// steps on the shrinking strips r_j = 1/(j+1), with schedule arithmetic,
// resonance bookkeeping (M_j, N_j, R_j, kappa_j), convergence monitoring and
// the finite-horizon reducibility verdict.
#pragma once

#include "kamreduce/kam_step.hpp"
#include "kamreduce/smoothing.hpp"

namespace kamreduce {

// Closed-form schedule of the iteration (the j-th entries of the classical
// bookkeeping). kappa_j is evaluated in logs; it underflows gracefully.
struct Schedule {
  int k = 40;
  double C = 0.5;
  int D = 10;
  DiophantineParams dioph;

  double eps_prime(int j) const { return C * std::pow(static_cast<double>(j), -k); }
  double log_eps_prime(int j) const { return std::log(C) - k * std::log(j); }
  double alpha(int j) const { return 4.0 / (static_cast<double>(j) * (j + 1)); }
  double r(int j) const { return 1.0 / (j + 1); }
  double R(int j) const {
    double base = static_cast<double>(j + 1) * (j + 2);
    return 4.0 * std::pow(base, 8) * std::pow(80.0, 4);
  }
  double N(int j) const {
    return (j + 1) / two_pi * std::abs(log_eps_prime(j));
  }
  double kappa_j(int j) const {
    double log_k = std::log(dioph.kappa) - std::log(2.0) -
                   dioph.tau * (std::log(8.0) + 2.0 * std::log(R(j)) + std::log(N(j)));
    return std::exp(log_k);
  }
  double kappa_partial_sum(int j_max) const {
    double s = 0;
    for (int j = 1; j <= j_max; ++j) s += kappa_j(j);
    return s;
  }
};

// Direct scan of the numerical lemma bound
//   C [j(j+1)|log eps_j|]^D eps_j^{1-4/(j(j+1))} <= 1/(j+1)^2,  eps_j = 1/j^k.
// Returns the first violating j, or nothing when it holds through j_max.
inline std::optional<long> lemma_num_check(double C, int D, int k, long j_max) {
  if (j_max < 2) throw ConfigError("lemma_num_check: j_max >= 2");
  for (long j = 2; j <= j_max; ++j) {
    double log_j = std::log(static_cast<double>(j));
    double abs_log_eps = k * log_j;
    double alpha = 4.0 / (static_cast<double>(j) * (j + 1));
    double lhs = std::log(C) + D * std::log(j * (j + 1.0) * abs_log_eps) -
                 k * (1.0 - alpha) * log_j;
    double rhs = -2.0 * std::log(j + 1.0);
    if (lhs > rhs) return j;
  }
  return std::nullopt;
}

// Smallest k making the lemma bound hold through j_max (linear search).
inline std::optional<int> lemma_k1_search(double C, int D, long j_max, int k_max = 2000) {
  for (int k = 1; k <= k_max; ++k)
    if (!lemma_num_check(C, D, k, j_max)) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

enum class RunMode { Paper, Adaptive };
inline std::string run_mode_name(RunMode m) {
  return m == RunMode::Paper ? "paper" : "adaptive";
}

struct DriverOptions {
  RunMode mode = RunMode::Adaptive;
  int j_max = 10;
  double target = 1e-12;  // stop once |F_bar_j|_{r_j} falls below
  int k = 10;             // declared regularity of the input data
  double C = 0.5;
  int D = 10;
  DiophantineParams dioph;
  SmoothingKernel kernel;
  PointwiseConfig pw;
  double resonance_window_factor = 1.0;
  double reducibility_tol = 1e-9;
  bool rho_ledger = true;  // integrate rho(A+F) for the closure check
  double rho_T = 4000.0;
  double rho_h = 2.5e-3;
  long classify_N = 2000;
  RotationClassifyOptions classify;
  long dc_certificate_N = 64;  // frequency margin certified at least this far
};

struct StepRecord {
  int j = 0;                 // step label: state j-1 -> state j+... (first step is j=2)
  double r_in = 0, r_out = 0;
  double eps_tilde = 0;      // |Zbar^{-1}(F_j - F_{j-1}) Zbar + F_bar|_{r_in}
  double eps_out = 0;        // |F_bar'|_{r_out}
  double N = 0, R = 0, kappa_step = 0, kappa_eff = 0;
  std::optional<ResonanceIndex> M;  // half-integer resonance index, when any
  double rotation_shift = 0;        // 2 pi <M, omega>
  double rho_before = 0, rho_after = 0;  // closed-form rho of the constants
  double ledger_residual = 0;            // |rho(A_j) - rho(A_{j+1}) - shift|
  bool ledger_ok_kappa = false;          // residual <= kappa_step (paper-sense)
  bool ledger_ok_sqrt = false;           // residual <= sqrt(eps_tilde)
  double cauchy_gauge = 0;   // ||Zbar_new - Zbar_old||_{k'}
  double conjugacy_residual = 0;
  double telescoped_residual = 0;  // d_omega Zbar vs (A + F_j, A_bar + F_bar)
  double aliasing = 0;
  double odd_coset = 0;
  bool gate_passed = true;
  std::string gate;
  StepBounds bounds{};
};

struct AlmostReducibilityReport {
  enum class Verdict { Reducible, AlmostReducible, GateFailed };
  Verdict verdict = Verdict::AlmostReducible;
  int gate_failed_j = 0;
  bool psi_stabilized = false;  // M_j = 0 for all j beyond the last resonance
  bool target_reached = false;
  int last_resonance_j = 0;     // 0 when no resonance ever occurred

  // final-j approximants (true limits are not finitely representable)
  TorusMap z_infinity;   // Zbar at the final step (1-periodic)
  TorusMap a_bar_infinity;  // A_bar + F_bar at the final step
  TorusMap psi_final;    // accumulated 2-periodic reducing rotation frame
  Matrix a_final;        // constant A_j at the final step
  Matrix b_constant;     // verdict Reducible: the constant limit candidate
  TorusMap z_reducing;   // verdict Reducible: Zbar * Psi (2-periodic)

  int k = 0, k_loss = 0;       // k' = max(0, k - 3D - 2)
  RunMode mode = RunMode::Adaptive;
  double final_residual = 0;   // d_omega Z vs (A + F, A_bar_infinity)
  double frequency_margin = 0;
  long frequency_margin_scan = 0;

  // rotation ledger
  double rotation_sum = 0;          // 2 pi sum <M_l, omega>
  double rho_input = 0;             // integrated rho(A+F), when enabled
  double rho_input_error = 0;
  double rho_final_constant = 0;    // closed-form rho(A_final)
  double ledger_closure = 0;        // |rho(A+F) - rho(A_final) - rotation_sum|
  double ledger_closure_budget = 0; // sum sqrt(eps~) + sum kappa + rho error
  bool rho_ledger_computed = false;

  std::vector<StepRecord> steps;

  std::string verdict_name() const {
    switch (verdict) {
      case Verdict::Reducible: return "reducible";
      case Verdict::AlmostReducible: return "almost_reducible";
      default: return "gate_failed";
    }
  }

  std::string convergence_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "j,eps_tilde,eps_out,cauchy_gauge,M,kappa_step\n";
    for (const auto& s : steps)
      os << s.j << "," << s.eps_tilde << "," << s.eps_out << "," << s.cauchy_gauge
         << "," << (s.M ? s.M->to_string() : "0") << "," << s.kappa_step << "\n";
    return os.str();
  }
};

// Runs the iteration j = 2, 3, ... from (A, F): build the analytic
// approximants F_j, form the induction input, call the step on the strip pair
// (1/j, 1/(j+1)), accumulate Zbar and the bookkeeping, stop at the horizon or
// once the target is reached.
inline AlmostReducibilityReport almost_reduce(const Matrix& a, const TorusMap& f,
                                              const FrequencyVector& omega, int k,
                                              const DriverOptions& opts = {}) {
  const int d = f.dim();
  AlmostReducibilityReport rep;
  rep.k = k;
  rep.k_loss = std::max(0, k - 3 * opts.D - 2);
  rep.mode = opts.mode;

  // frequency certificate up to at least the configured bound; extended lazily
  long margin_scan = opts.dc_certificate_N;
  FrequencyMargin margin = frequency_dc_margin(omega, opts.dioph.tau, margin_scan,
                                               opts.dioph.mode_norm);
  if (margin.kappa < opts.dioph.kappa)
    throw ConfigError("almost_reduce: configured kappa exceeds the scanned margin " +
                      std::to_string(margin.kappa));
  rep.frequency_margin = margin.kappa;
  rep.frequency_margin_scan = margin_scan;

  // state_1: Psi = Id, A_1 = A, A_bar = const A, F_bar = 0, Zbar = Id, F_1 = 0
  Target alg = f.target();
  Target grp{alg.n, alg.real, true, alg.special};
  TorusMap psi = TorusMap::identity(d, grp).to_period2();
  TorusMap a_bar = TorusMap::constant(d, alg, a);
  TorusMap f_bar = TorusMap::zero(d, alg);
  TorusMap z_bar = TorusMap::identity(d, grp);
  Matrix a_cur = a;
  TorusMap f_prev = TorusMap::zero(d, alg);  // F_1 := 0 starts the telescoping

  const double f_ck = ck_norm(f, k);
  double sum_sqrt_eps = 0, sum_kappa = 0;

  bool stopped_by_gate = false;
  for (int j = 2; j <= opts.j_max; ++j) {
    StepRecord rec;
    rec.j = j;
    rec.r_in = 1.0 / j;
    rec.r_out = 1.0 / (j + 1);

    TorusMap f_j = zehnder_sequence(f, j, opts.kernel);
    TorusMap diff = f_j.minus(f_prev);
    TorusMap input;
    double aliasing = 0;
    if (z_bar.is_identity()) {
      input = diff.plus(f_bar);
    } else {
      TorusMap moved = detail::conjugate_by(diff, z_bar, opts.pw, &aliasing);
      input = moved.plus(f_bar);
    }
    input.set_target(alg);
    rec.eps_tilde = input.empty() ? 0.0
                                  : input.analytic_norm(rec.r_in, opts.dioph.mode_norm);
    rec.aliasing = aliasing;

    // paper first-step gate: |F_2|_{1/2} <= eps'_2 = C / 2^k
    if (opts.mode == RunMode::Paper && j == 2) {
      double gate2 = opts.C * std::pow(2.0, -k);
      if (rec.eps_tilde > gate2) {
        rep.verdict = AlmostReducibilityReport::Verdict::GateFailed;
        rep.gate_failed_j = j;
        rec.gate_passed = false;
        rec.gate = "paper-first-step";
        rep.steps.push_back(rec);
        stopped_by_gate = true;
        break;
      }
    }

    StepParams params;
    params.r = rec.r_in;
    params.r_out = rec.r_out;
    params.n = alg.n;
    params.dioph = opts.dioph;
    params.C = opts.C;
    params.D = opts.D;
    params.gate = opts.mode == RunMode::Paper ? GateMode::Paper : GateMode::Practical;
    params.resonance_window_factor = opts.resonance_window_factor;
    params.reducibility_tol = opts.reducibility_tol;
    params.pw = opts.pw;
    rec.gate = gate_mode_name(params.gate);

    KamStepResult step;
    try {
      step = kam_step(a_bar, input, psi, a_cur, omega, params);
    } catch (const GateError&) {
      rep.verdict = AlmostReducibilityReport::Verdict::GateFailed;
      rep.gate_failed_j = j;
      rec.gate_passed = false;
      rep.steps.push_back(rec);
      stopped_by_gate = true;
      break;
    }

    // ensure the frequency certificate covers this step's truncation order
    long need = static_cast<long>(std::ceil(step.diag.constants.N));
    if (need > margin_scan) {
      margin_scan = need;
      margin = frequency_dc_margin(omega, opts.dioph.tau, margin_scan,
                                   opts.dioph.mode_norm);
      if (margin.kappa < opts.dioph.kappa)
        throw ConfigError("almost_reduce: kappa certificate fails at N = " +
                          std::to_string(need));
      rep.frequency_margin = std::min(rep.frequency_margin, margin.kappa);
      rep.frequency_margin_scan = margin_scan;
    }

    TorusMap z_bar_new =
        z_bar.is_identity() ? step.z : pw_multiply(z_bar, step.z, opts.pw).map;
    TorusMap z_diff = z_bar_new.minus(z_bar);
    rec.cauchy_gauge = z_diff.empty() ? 0.0 : ck_norm(z_diff, rep.k_loss);

    rec.eps_out = step.eps_out;
    rec.N = step.diag.constants.N;
    rec.R = step.diag.constants.R;
    rec.kappa_step = step.diag.constants.kappa2;
    rec.kappa_eff = step.diag.kappa_eff;
    rec.M = step.resonance;
    rec.rotation_shift = step.rotation_shift;
    rec.rho_before = rotation_of_constant(a_cur);
    rec.rho_after = rotation_of_constant(step.a_const);
    rec.ledger_residual =
        std::abs(rec.rho_before - rec.rho_after - step.rotation_shift);
    rec.ledger_ok_kappa = rec.ledger_residual <= rec.kappa_step;
    rec.ledger_ok_sqrt = rec.ledger_residual <= step.rotation_shift_bound;
    rec.conjugacy_residual = step.diag.exact_conjugacy_residual;
    rec.aliasing = std::max(rec.aliasing, step.diag.aliasing);
    rec.odd_coset = step.diag.odd_coset_mass;
    rec.bounds = step.diag.bounds;

    sum_sqrt_eps += std::sqrt(std::max(rec.eps_tilde, 0.0));
    sum_kappa += rec.kappa_step;
    if (step.resonance && step.resonance->l1() > 0) {
      rep.last_resonance_j = j;
      rep.rotation_sum += step.rotation_shift;
    }

    // telescoped identity: d_omega Zbar = (A + F_j) Zbar - Zbar (A_bar + F_bar)
    a_bar = step.a_bar;
    f_bar = step.f_bar;
    psi = step.psi;
    a_cur = step.a_const;
    z_bar = z_bar_new;
    f_prev = f_j;
    rec.telescoped_residual = conjugation_residual(
        z_bar, TorusMap::constant(d, alg, a).plus(f_j), a_bar.plus(f_bar), omega);
    rep.steps.push_back(rec);

    // stop at the target, but always demonstrate one resonance-free step
    // after a removal so the stabilization claim is observed, not assumed
    bool resonant_now = step.resonance && step.resonance->l1() > 0;
    if (step.eps_out <= opts.target && !resonant_now) break;
  }

  rep.z_infinity = z_bar;
  rep.a_bar_infinity = a_bar.plus(f_bar);
  rep.psi_final = psi;
  rep.a_final = a_cur;
  rep.target_reached =
      !rep.steps.empty() && !stopped_by_gate && rep.steps.back().eps_out <= opts.target;
  rep.psi_stabilized =
      !stopped_by_gate &&
      (rep.last_resonance_j == 0 ||
       (!rep.steps.empty() && rep.last_resonance_j < rep.steps.back().j));

  if (!stopped_by_gate) {
    rep.verdict = (rep.target_reached && rep.psi_stabilized)
                      ? AlmostReducibilityReport::Verdict::Reducible
                      : AlmostReducibilityReport::Verdict::AlmostReducible;
  }

  rep.final_residual = conjugation_residual(
      z_bar, TorusMap::constant(d, alg, a).plus(f), rep.a_bar_infinity, omega);

  if (rep.verdict == AlmostReducibilityReport::Verdict::Reducible) {
    rep.b_constant = a_cur;
    rep.z_reducing = pw_multiply(z_bar.to_period2(), psi, opts.pw).map;
  }

  // rotation ledger closure against the integrated rotation number
  rep.rho_final_constant = rotation_of_constant(a_cur);
  if (opts.rho_ledger && alg.n == 2 && alg.real) {
    CocycleSystem sys(a, f, omega);
    RotationEstimate est = rotation_number(sys, opts.rho_T, opts.rho_h);
    rep.rho_input = est.value;
    rep.rho_input_error = est.error_bound;
    rep.ledger_closure =
        std::abs(rep.rho_input - rep.rho_final_constant - rep.rotation_sum);
    rep.ledger_closure_budget = sum_sqrt_eps + sum_kappa + est.error_bound + 10.0 / opts.rho_T;
    rep.rho_ledger_computed = true;
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct VerdictRecord {
  AlmostReducibilityReport::Verdict verdict;
  bool psi_stabilized = false;
  Matrix b_constant;
  TorusMap z_reducing;
  RotationClassification rho_class;
  // Reducibility prediction from the rotation-number classification
  // (DC or rational rho => reducible), judged at the numeric horizon.
  enum class Prop41 { Confirmed, Violated, Undetermined, NoPrediction };
  Prop41 prop41 = Prop41::NoPrediction;
  bool consistency_flag = false;  // resonances persisted yet rho DC-certified

  std::string prop41_name() const {
    switch (prop41) {
      case Prop41::Confirmed: return "confirmed";
      case Prop41::Violated: return "violated";
      case Prop41::Undetermined: return "undetermined";
      default: return "no-prediction";
    }
  }
};

// Cross-annotates a finished run with the arithmetic classification of its
// rotation number.
inline VerdictRecord reducibility_verdict(const AlmostReducibilityReport& rep,
                                          const RotationClassification& cls) {
  VerdictRecord v{rep.verdict, rep.psi_stabilized, rep.b_constant, rep.z_reducing,
                  cls};
  bool predicted = cls.is_rational() || cls.is_diophantine();
  if (!predicted) {
    v.prop41 = VerdictRecord::Prop41::NoPrediction;
    return v;
  }
  if (rep.verdict == AlmostReducibilityReport::Verdict::Reducible) {
    v.prop41 = VerdictRecord::Prop41::Confirmed;
    return v;
  }
  // still resonating at the end of the horizon contradicts the prediction
  bool tail_resonant = false;
  if (!rep.steps.empty() && rep.last_resonance_j > 0) {
    int horizon = rep.steps.back().j;
    tail_resonant = rep.last_resonance_j >= horizon - (rep.steps.size() / 4);
  }
  if (cls.is_diophantine() && tail_resonant) {
    v.prop41 = VerdictRecord::Prop41::Violated;
    v.consistency_flag = true;
  } else {
    v.prop41 = VerdictRecord::Prop41::Undetermined;
  }
  return v;
}

}  // namespace kamreduce
