// Continuous Schrodinger cocycles from a potential and an energy: both energy
// regimes of the change of variables, reduction runs with rotation-number
// classification, and energy sweeps with plateau detection for gap labels.
#pragma once

#include "kamreduce/driver.hpp"
#include "kamreduce/worker_pool.hpp"

namespace kamreduce {

struct SchrodingerSystem {
  enum class Regime { Inside, Outside };

  TorusMap V;  // scalar potential (n = 1, real)
  double lambda = 0.0;
  FrequencyVector omega;
  Regime regime = Regime::Inside;
  bool fallback_inside = false;  // lambda < -2: printed transform is not real
  Matrix A;
  TorusMap F;

  CocycleSystem cocycle() const { return CocycleSystem(A, F, omega); }
};

// Builds the regime-appropriate trace-free system. Inside (|lambda| <= 2):
// A = [[0,-lambda],[1,0]], F = [[0,V],[0,0]]. Outside (lambda > 2): the
// constant rotation [[0,-sqrt(l)],[sqrt(l),0]] with the rank-one V-coupling
// spread over all four entries. For lambda < -2 the printed transform takes a
// real square root of a negative number, so the inside form is used with a
// warning flag.
inline SchrodingerSystem build_cocycle(const TorusMap& v, double lambda,
                                       const FrequencyVector& omega) {
  if (v.n() != 1) throw ConfigError("build_cocycle: V must be scalar");
  if (v.period() != 1) throw ConfigError("build_cocycle: V must be 1-periodic");
  SchrodingerSystem sys{v, lambda, omega};
  const int d = v.dim();
  sys.regime = std::abs(lambda) > 2.0 ? SchrodingerSystem::Regime::Outside
                                      : SchrodingerSystem::Regime::Inside;
  bool use_outside = lambda > 2.0;
  if (sys.regime == SchrodingerSystem::Regime::Outside && lambda < 0)
    sys.fallback_inside = true;

  sys.A = zero_matrix(2);
  sys.F = TorusMap(d, 1, Target::sl2R());
  if (use_outside) {
    double root = std::sqrt(lambda);
    sys.A(0, 1) = -root;
    sys.A(1, 0) = root;
    for (const auto& [m, c] : v.coeffs()) {
      Matrix f(2, 2);
      Complex w = c(0, 0) / (2.0 * root);
      f << -w, w, -w, w;
      sys.F.set_mode(m, f);
    }
  } else {
    sys.A(0, 1) = -lambda;
    sys.A(1, 0) = 1.0;
    for (const auto& [m, c] : v.coeffs()) {
      Matrix f = zero_matrix(2);
      f(0, 1) = c(0, 0);
      sys.F.set_mode(m, f);
    }
  }
  return sys;
}

struct SchrodingerReport {
  SchrodingerSystem system;
  AlmostReducibilityReport reduction;
  RotationEstimate rho;            // measured on the inside form
  RotationEstimate rho_transformed;  // outside form, when applicable
  bool regimes_agree = true;       // |rho - rho_transformed| within brackets
  RotationClassification rho_class;
  VerdictRecord verdict;
};

struct SchrodingerOptions {
  DriverOptions driver;
  double rho_T = 1e4;
  double rho_h = 5e-3;
  long classify_N = 2000;
  RotationClassifyOptions classify;
};

// Builds the cocycle, runs the reduction, classifies rho(A_lambda + F) and
// annotates the reducibility prediction. rho is invariant under the constant
// change of variables; when the outside form is used both values are measured
// and compared.
inline SchrodingerReport reduce_schrodinger(const TorusMap& v, double lambda,
                                            const FrequencyVector& omega, int k,
                                            const SchrodingerOptions& opts = {}) {
  SchrodingerReport rep{build_cocycle(v, lambda, omega)};
  rep.reduction =
      almost_reduce(rep.system.A, rep.system.F, omega, k, opts.driver);

  // rho of the untransformed system (the physical label)
  SchrodingerSystem inside = rep.system;
  if (rep.system.regime == SchrodingerSystem::Regime::Outside &&
      !rep.system.fallback_inside) {
    TorusMap f_in(v.dim(), 1, Target::sl2R());
    for (const auto& [m, c] : v.coeffs()) {
      Matrix f = zero_matrix(2);
      f(0, 1) = c(0, 0);
      f_in.set_mode(m, f);
    }
    Matrix a_in = zero_matrix(2);
    a_in(0, 1) = -lambda;
    a_in(1, 0) = 1.0;
    CocycleSystem sys_in(a_in, f_in, omega);
    rep.rho = rotation_number(sys_in, opts.rho_T, opts.rho_h);
    rep.rho_transformed = rotation_number(rep.system.cocycle(), opts.rho_T, opts.rho_h);
    rep.regimes_agree =
        std::abs(rep.rho.value - rep.rho_transformed.value) <=
        10.0 * (rep.rho.error_bound + rep.rho_transformed.error_bound) + 1e-6;
  } else {
    rep.rho = rotation_number(rep.system.cocycle(), opts.rho_T, opts.rho_h);
    rep.rho_transformed = rep.rho;
  }

  rep.rho_class = classify_rotation_number(rep.rho.value, omega,
                                           opts.driver.dioph.tau, opts.classify_N,
                                           opts.classify);
  rep.verdict = reducibility_verdict(rep.reduction, rep.rho_class);
  return rep;
}

// ---------------------------------------------------------------------------

struct SweepRow {
  double lambda = 0;
  double rho = 0;
  double rho_error = 0;
  double lyapunov = 0;
  std::string rho_class;    // arithmetic classification of rho
  std::string verdict;      // reduction verdict when enabled, "-" otherwise
  std::string gap_label;    // half-module witness of a detected plateau, or ""
};

struct SweepOptions {
  double T = 1e4;
  double h = 5e-3;
  bool with_reduction = false;
  int k = 10;
  SchrodingerOptions schrodinger;
  long classify_N = 50;
  RotationClassifyOptions classify;
  double plateau_drho = 1e-6;  // three consecutive |drho| below this
  double le_floor = 1e-5;      // plateau must carry positive Lyapunov exponent
  long label_N_max = 20;
  double label_tol = 1e-4;
  int threads = 0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  struct Plateau {
    size_t first, last;   // row range
    double value;         // mean rho over the run
    ModeIndex witness;    // |rho - pi <m,omega>| <= tol
    bool labelled = false;
  };
  std::vector<Plateau> plateaus;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "lambda,rho,rho_error,lyapunov,rho_class,verdict,gap_label\n";
    for (const auto& r : rows)
      os << r.lambda << "," << r.rho << "," << r.rho_error << "," << r.lyapunov
         << "," << r.rho_class << "," << r.verdict << "," << r.gap_label << "\n";
    return os.str();
  }
};

// Plateau detection over a finished table: maximal runs of at least three
// consecutive points with |drho| below tolerance and Lyapunov exponent above
// the floor; each plateau is matched against the half frequency module
// {pi <m, omega>} up to the label bound.
inline void detect_plateaus(SweepTable& table, const FrequencyVector& omega,
                            const SweepOptions& opts) {
  const auto& rows = table.rows;
  size_t i = 0;
  while (i + 1 < rows.size()) {
    size_t j = i;
    while (j + 1 < rows.size() &&
           std::abs(rows[j + 1].rho - rows[j].rho) < opts.plateau_drho)
      ++j;
    if (j - i + 1 >= 3) {
      double le_mean = 0, value = 0;
      for (size_t p = i; p <= j; ++p) {
        le_mean += rows[p].lyapunov;
        value += rows[p].rho;
      }
      le_mean /= (j - i + 1);
      value /= (j - i + 1);
      if (le_mean > opts.le_floor) {
        SweepTable::Plateau pl{i, j, value, {}, false};
        double best = std::numeric_limits<double>::infinity();
        detail::scan_modes_l1(omega.dim(), opts.label_N_max, [&](const ModeIndex& m) {
          double diff = std::abs(value - pi * omega.dot(m));
          if (diff < best) {
            best = diff;
            pl.witness = m;
          }
        });
        double diff0 = std::abs(value);
        if (diff0 < best) {
          best = diff0;
          pl.witness = ModeIndex(omega.dim(), 0);
        }
        pl.labelled = best <= opts.label_tol;
        table.plateaus.push_back(pl);
      }
    }
    i = j + 1;
  }
  for (const auto& pl : table.plateaus) {
    if (!pl.labelled) continue;
    std::string label = format_mode(pl.witness) + "/2";
    for (size_t p = pl.first; p <= pl.last; ++p) table.rows[p].gap_label = label;
  }
}

// Independent per-energy rows (parallel), then plateau labelling.
inline SweepTable sweep(const TorusMap& v, std::span<const double> lambda_grid,
                        const FrequencyVector& omega, const SweepOptions& opts = {}) {
  SweepTable table;
  table.rows.resize(lambda_grid.size());
  parallel_for_index(
      lambda_grid.size(),
      [&](size_t i) {
        double lambda = lambda_grid[i];
        SweepRow row;
        row.lambda = lambda;
        SchrodingerSystem sys = build_cocycle(v, lambda, omega);
        CocycleSystem c = sys.cocycle();
        RotationEstimate est = rotation_number(c, opts.T, opts.h);
        row.rho = est.value;
        row.rho_error = est.error_bound;
        row.lyapunov = est.lyapunov;
        auto cls = classify_rotation_number(row.rho, omega,
                                            opts.schrodinger.driver.dioph.tau,
                                            opts.classify_N, opts.classify);
        row.rho_class = cls.verdict_name();
        if (opts.with_reduction) {
          auto rep = reduce_schrodinger(v, lambda, omega, opts.k, opts.schrodinger);
          row.verdict = rep.reduction.verdict_name();
        } else {
          row.verdict = "-";
        }
        table.rows[i] = std::move(row);
      },
      opts.threads);
  detect_plateaus(table, omega, opts);
  return table;
}

}  // namespace kamreduce
