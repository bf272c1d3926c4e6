// Configuration parsing (JSON), command orchestration and report emission.
// Fixed config + seed produce byte-identical outputs: reports carry the full
// resolved configuration and no volatile fields.
#pragma once

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "kamreduce/schrodinger.hpp"

namespace kamreduce {

using Json = nlohmann::ordered_json;

// -- parsing helpers --------------------------------------------------------

inline FrequencyVector parse_frequency(const Json& j) {
  std::vector<double> entries;
  for (const auto& e : j) {
    if (e.is_string()) {
      std::string s = e.get<std::string>();
      if (s == "golden")
        entries.push_back(golden_mean());
      else
        throw ConfigError("omega: unknown named constant '" + s + "'");
    } else {
      entries.push_back(e.get<double>());
    }
  }
  return FrequencyVector(entries);
}

inline Matrix parse_matrix(const Json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows ? static_cast<int>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const auto& e = j[r][c];
      if (e.is_array())
        m(r, c) = Complex(e[0].get<double>(), e[1].get<double>());
      else
        m(r, c) = e.get<double>();
    }
  return m;
}

inline TorusMap parse_torus_map(const Json& j) {
  int dim = j.at("dim").get<int>();
  int period = j.value("period", 1);
  Target target = Target::parse(j.value("target", std::string("sl(2,R)")));
  TorusMap f(dim, period, target);
  if (j.contains("cos_modes"))
    for (const auto& e : j["cos_modes"])
      f.add_cos(e.at("m").get<ModeIndex>(), parse_matrix(e.at("coeff")));
  if (j.contains("sin_modes"))
    for (const auto& e : j["sin_modes"])
      f.add_sin(e.at("m").get<ModeIndex>(), parse_matrix(e.at("coeff")));
  if (j.contains("modes"))
    for (const auto& e : j["modes"]) {
      Matrix re = parse_matrix(e.at("re"));
      Matrix im = e.contains("im") ? parse_matrix(e.at("im"))
                                   : Matrix(Matrix::Zero(re.rows(), re.cols()));
      f.add_mode(e.at("m").get<ModeIndex>(),
                 re + Complex(0, 1) * im);
    }
  if (j.contains("scale_analytic")) {
    double r = j["scale_analytic"].at("r").get<double>();
    double to = j["scale_analytic"].at("to").get<double>();
    double cur = f.analytic_norm(r);
    if (cur > 0) f = f.scaled(to / cur);
  }
  if (target.real) f = f.symmetrized();
  return f;
}

inline DiophantineParams parse_dioph(const Json& j, int dim) {
  DiophantineParams p;
  p.kappa = j.value("kappa", 0.25);
  p.tau = j.value("tau", std::max(1.0, dim - 1.0));
  p.mode_norm = j.value("mode_norm", std::string("l1")) == "sup" ? ModeNorm::Sup
                                                                 : ModeNorm::L1;
  return DiophantineParams(p.kappa, p.tau, p.mode_norm);
}

inline DriverOptions parse_driver(const Json& root, int dim) {
  DriverOptions o;
  if (root.contains("dioph")) o.dioph = parse_dioph(root["dioph"], dim);
  if (root.contains("driver")) {
    const Json& j = root["driver"];
    o.mode = j.value("mode", std::string("adaptive")) == "paper" ? RunMode::Paper
                                                                 : RunMode::Adaptive;
    o.j_max = j.value("jmax", o.j_max);
    o.target = j.value("target", o.target);
    o.k = j.value("k", o.k);
    o.C = j.value("C", o.C);
    o.D = j.value("D", o.D);
    o.kernel.c_band = j.value("c_band", o.kernel.c_band);
    o.resonance_window_factor = j.value("resonance_window", o.resonance_window_factor);
    o.rho_ledger = j.value("rho_ledger", o.rho_ledger);
    o.rho_T = j.value("rho_T", o.rho_T);
    o.rho_h = j.value("rho_h", o.rho_h);
    o.pw.band_cap = j.value("band_cap", o.pw.band_cap);
  }
  return o;
}

// -- report serialization ---------------------------------------------------

inline Json to_json(const RotationClassification& c) {
  Json j;
  j["verdict"] = c.verdict_name();
  j["scan_bound"] = c.scan_bound;
  j["tau"] = c.tau;
  if (c.is_rational()) {
    j["witness"] = c.witness;
    j["residual"] = c.residual;
  } else {
    j["kappa_prime"] = c.kappa_prime;
  }
  return j;
}

inline Json to_json(const StepRecord& s) {
  Json j;
  j["j"] = s.j;
  j["r_in"] = s.r_in;
  j["r_out"] = s.r_out;
  j["eps_tilde"] = s.eps_tilde;
  j["eps_out"] = s.eps_out;
  j["N"] = s.N;
  j["R"] = s.R;
  j["kappa_step"] = s.kappa_step;
  j["kappa_eff"] = s.kappa_eff;
  j["M"] = s.M ? s.M->to_string() : "0";
  j["rotation_shift"] = s.rotation_shift;
  j["rho_before"] = s.rho_before;
  j["rho_after"] = s.rho_after;
  j["ledger_residual"] = s.ledger_residual;
  j["ledger_ok_sqrt_eps"] = s.ledger_ok_sqrt;
  j["ledger_ok_kappa"] = s.ledger_ok_kappa;
  j["cauchy_gauge"] = s.cauchy_gauge;
  j["conjugacy_residual"] = s.conjugacy_residual;
  j["telescoped_residual"] = s.telescoped_residual;
  j["aliasing"] = s.aliasing;
  j["odd_coset"] = s.odd_coset;
  j["gate"] = s.gate;
  j["gate_passed"] = s.gate_passed;
  Json b;
  b["contraction_exponent"] = s.bounds.contraction_exponent;
  b["psi_norm"] = s.bounds.psi_norm;
  b["psi_norm_form"] = s.bounds.psi_norm_form;
  b["psi_ok"] = s.bounds.psi_ok;
  b["a_norm"] = s.bounds.a_norm;
  b["a_norm_form"] = s.bounds.a_norm_form;
  b["a_ok"] = s.bounds.a_ok;
  b["z_dist"] = s.bounds.z_dist;
  b["z_dist_form"] = s.bounds.z_dist_form;
  b["z_ok"] = s.bounds.z_ok;
  j["bounds"] = b;
  return j;
}

inline Json to_json(const AlmostReducibilityReport& r) {
  Json j;
  j["verdict"] = r.verdict_name();
  if (r.verdict == AlmostReducibilityReport::Verdict::GateFailed)
    j["gate_failed_j"] = r.gate_failed_j;
  j["mode"] = run_mode_name(r.mode);
  j["psi_stabilized"] = r.psi_stabilized;
  j["target_reached"] = r.target_reached;
  j["last_resonance_j"] = r.last_resonance_j;
  j["k"] = r.k;
  j["k_loss"] = r.k_loss;
  j["final_residual"] = r.final_residual;
  j["frequency_margin"] = r.frequency_margin;
  j["frequency_margin_scan"] = r.frequency_margin_scan;
  j["rotation_sum"] = r.rotation_sum;
  j["rho_final_constant"] = r.rho_final_constant;
  if (r.rho_ledger_computed) {
    j["rho_input"] = r.rho_input;
    j["rho_input_error"] = r.rho_input_error;
    j["ledger_closure"] = r.ledger_closure;
    j["ledger_closure_budget"] = r.ledger_closure_budget;
  }
  j["steps"] = Json::array();
  for (const auto& s : r.steps) j["steps"].push_back(to_json(s));
  return j;
}

// -- run configuration ------------------------------------------------------

struct RunConfig {
  std::string command;
  std::filesystem::path out_dir = ".";
  std::string emit = "both";  // json | csv | both
  uint64_t seed = 0;
  Json root;

  static RunConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    RunConfig cfg;
    try {
      in >> cfg.root;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    cfg.command = cfg.root.value("command", std::string());
    cfg.emit = cfg.root.value("emit", std::string("both"));
    cfg.seed = cfg.root.value("seed", uint64_t{0});
    return cfg;
  }

  bool want_json() const { return emit == "json" || emit == "both"; }
  bool want_csv() const { return emit == "csv" || emit == "both"; }
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& contents) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << contents;
}

struct ParsedSystem {
  Matrix a;
  TorusMap f;
  FrequencyVector omega;
  std::optional<SchrodingerSystem> schrodinger;
};

inline ParsedSystem parse_system(const Json& root) {
  FrequencyVector omega = parse_frequency(root.at("omega"));
  if (root.contains("schrodinger")) {
    const Json& s = root["schrodinger"];
    TorusMap v = parse_torus_map(s.at("V"));
    double lambda = s.at("lambda").get<double>();
    SchrodingerSystem sys = build_cocycle(v, lambda, omega);
    return {sys.A, sys.F, omega, sys};
  }
  const Json& s = root.at("system");
  Matrix a = parse_matrix(s.at("A"));
  TorusMap f = parse_torus_map(s.at("F"));
  return {a, f, omega, std::nullopt};
}

}  // namespace detail

// Executes one configured run; returns the process exit status. Verdicts such
// as almost_reducible or gate_failed are data, not errors.
inline int run_config(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  Json report;
  report["command"] = cfg.command;
  report["seed"] = cfg.seed;
  report["config"] = cfg.root;

  if (cfg.command == "reduce") {
    auto sys = detail::parse_system(cfg.root);
    DriverOptions opts = parse_driver(cfg.root, sys.f.dim());
    auto rep = almost_reduce(sys.a, sys.f, sys.omega, opts.k, opts);
    RotationClassification cls;
    if (rep.rho_ledger_computed)
      cls = classify_rotation_number(rep.rho_input, sys.omega, opts.dioph.tau,
                                     opts.classify_N, opts.classify);
    VerdictRecord verdict = reducibility_verdict(rep, cls);
    report["reduction"] = to_json(rep);
    report["rho_classification"] = to_json(cls);
    report["prop_annotation"] = verdict.prop41_name();
    report["consistency_flag"] = verdict.consistency_flag;
    if (cfg.want_csv())
      detail::write_file(cfg.out_dir / "convergence.csv", rep.convergence_csv());
  } else if (cfg.command == "rotnum") {
    auto sys = detail::parse_system(cfg.root);
    const Json& r = cfg.root.value("rotnum", Json::object());
    double T = r.value("T", 1e4), h = r.value("h", 2e-3);
    CocycleSystem c(sys.a, sys.f, sys.omega);
    std::vector<TraceRow> trace;
    RotationOptions ropt;
    long stride = r.value("trace_stride", 0);
    if (stride > 0) {
      ropt.trace_stride = stride;
      ropt.trace = &trace;
    }
    RotationEstimate est = rotation_number(c, T, h, ropt);
    report["rotnum"] = {{"T", T},
                        {"h", h},
                        {"rho", est.value},
                        {"error_bound", est.error_bound},
                        {"lyapunov", est.lyapunov}};
    if (cfg.want_csv()) {
      std::ostringstream os;
      os.precision(12);
      os << "T,h,rho,error_bound,lyapunov\n"
         << T << "," << h << "," << est.value << "," << est.error_bound << ","
         << est.lyapunov << "\n";
      detail::write_file(cfg.out_dir / "rotnum.csv", os.str());
      if (stride > 0) {
        std::ostringstream ts;
        ts.precision(12);
        ts << "t,arg_lift,log_growth\n";
        for (const auto& row : trace)
          ts << row.t << "," << row.arg_lift << "," << row.log_growth << "\n";
        detail::write_file(cfg.out_dir / "trace.csv", ts.str());
      }
    }
  } else if (cfg.command == "sweep") {
    FrequencyVector omega = parse_frequency(cfg.root.at("omega"));
    const Json& s = cfg.root.at("schrodinger");
    TorusMap v = parse_torus_map(s.at("V"));
    const Json& w = cfg.root.value("sweep", Json::object());
    double lo = w.value("lambda_min", 0.0), hi = w.value("lambda_max", 3.0);
    int points = w.value("points", 200);
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i)
      grid[i] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
    SweepOptions so;
    so.T = w.value("T", so.T);
    so.h = w.value("h", so.h);
    so.with_reduction = w.value("with_reduction", false);
    so.plateau_drho = w.value("plateau_drho", so.plateau_drho);
    so.le_floor = w.value("le_floor", so.le_floor);
    so.label_N_max = w.value("label_Nmax", so.label_N_max);
    so.label_tol = w.value("label_tol", so.label_tol);
    so.schrodinger.driver = parse_driver(cfg.root, v.dim());
    auto table = sweep(v, grid, omega, so);
    Json rows = Json::array();
    for (const auto& row : table.rows)
      rows.push_back({{"lambda", row.lambda},
                      {"rho", row.rho},
                      {"rho_error", row.rho_error},
                      {"lyapunov", row.lyapunov},
                      {"rho_class", row.rho_class},
                      {"verdict", row.verdict},
                      {"gap_label", row.gap_label}});
    report["sweep"] = {{"rows", rows}, {"plateaus", table.plateaus.size()}};
    if (cfg.want_csv())
      detail::write_file(cfg.out_dir / "sweep.csv", table.to_csv());
  } else if (cfg.command == "smooth-test") {
    TorusMap f = parse_torus_map(cfg.root.at("system").at("F"));
    const Json& s = cfg.root.value("smooth", Json::object());
    int k = s.value("k", 10), J = s.value("J", 40);
    SmoothingKernel kernel;
    kernel.c_band = s.value("c_band", kernel.c_band);
    SuiteReport rep = suite_report(f, k, J, kernel);
    Json rows = Json::array();
    for (const auto& r : rep.rows)
      rows.push_back({{"j", r.j},
                      {"ck_dist", r.ck_dist},
                      {"strip_norm", r.strip_norm},
                      {"step_norm", r.step_norm},
                      {"c_strip", r.c_strip},
                      {"c_step", r.c_step}});
    report["suite"] = {{"k", k}, {"f_ck_norm", rep.f_ck_norm}, {"rows", rows}};
    if (cfg.want_csv()) detail::write_file(cfg.out_dir / "suite.csv", rep.to_csv());
  } else if (cfg.command == "lemma-check") {
    const Json& l = cfg.root.value("lemma", Json::object());
    double C = l.value("C", 0.5);
    int D = l.value("D", 10), k = l.value("k", 200);
    long jmax = l.value("jmax", 10000L);
    auto violation = lemma_num_check(C, D, k, jmax);
    report["lemma"] = {{"C", C},
                       {"D", D},
                       {"k", k},
                       {"jmax", jmax},
                       {"holds", !violation.has_value()}};
    if (violation) report["lemma"]["first_violation"] = *violation;
    if (l.value("search_k1", false)) {
      auto k1 = lemma_k1_search(C, D, jmax);
      report["lemma"]["k1"] = k1 ? Json(*k1) : Json(nullptr);
    }
  } else if (cfg.command == "step-probe") {
    auto sys = detail::parse_system(cfg.root);
    const Json& s = cfg.root.value("step", Json::object());
    StepParams params;
    params.r = s.value("r", 0.5);
    params.r_out = s.value("r_out", 1.0 / 3.0);
    params.n = sys.f.n();
    params.dioph = cfg.root.contains("dioph")
                       ? parse_dioph(cfg.root["dioph"], sys.f.dim())
                       : DiophantineParams{};
    std::string gate = s.value("gate", std::string("practical"));
    params.gate = gate == "paper"   ? GateMode::Paper
                  : gate == "off"   ? GateMode::Off
                                    : GateMode::Practical;
    Target alg = sys.f.target();
    TorusMap a_bar = TorusMap::constant(sys.f.dim(), alg, sys.a);
    TorusMap psi =
        TorusMap::identity(sys.f.dim(), Target{alg.n, alg.real, true, alg.special})
            .to_period2();
    auto step = kam_step(a_bar, sys.f, psi, sys.a, sys.omega, params);
    report["step"] = {
        {"eps_in", step.diag.eps_in},
        {"eps_out", step.eps_out},
        {"N", step.diag.constants.N},
        {"R", step.diag.constants.R},
        {"kappa2", step.diag.constants.kappa2},
        {"kappa_eff", step.diag.kappa_eff},
        {"gate", gate_mode_name(step.diag.gate)},
        {"paper_strip_range", step.diag.paper_strip_range},
        {"resonance", step.resonance ? step.resonance->to_string() : "none"},
        {"rotation_shift", step.rotation_shift},
        {"conjugacy_residual", step.diag.exact_conjugacy_residual},
        {"aliasing", step.diag.aliasing},
        {"contraction_exponent", step.diag.bounds.contraction_exponent}};
  } else {
    throw ConfigError("unknown command '" + cfg.command + "'");
  }

  if (cfg.want_json())
    detail::write_file(cfg.out_dir / "report.json", report.dump(2) + "\n");
  return 0;
}

}  // namespace kamreduce
