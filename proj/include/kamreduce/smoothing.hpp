// Analytic-approximation sequence for C^k data: a smooth band-limited Fourier
// multiplier (exactly a convolution with an analytic kernel on our finite
// Fourier data) producing maps analytic on strips of width 1/j. The operator
// is a fixed multiplier: it never sees the declared regularity k.
#pragma once

#include "kamreduce/grid_algebra.hpp"

namespace kamreduce {

// Smooth radial cutoff u: 1 on [0,1/2], 0 on [1,inf), C^inf monotone bridge
// in between, with the band schedule N_band(j) = c_band * j.
struct SmoothingKernel {
  double c_band = 8.0;

  double cutoff(double x) const {
    if (x <= 0.5) return 1.0;
    if (x >= 1.0) return 0.0;
    auto psi = [](double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; };
    double a = psi(2.0 * (1.0 - x));
    double b = psi(2.0 * (x - 0.5));
    return a / (a + b);
  }

  double band(int j) const { return c_band * j; }
};

// j-th member of the approximation sequence: F_hat(m) scaled by
// u(|m|_1 / N_band(j)). Identical output whatever regularity the caller
// declares for F.
inline TorusMap zehnder_sequence(const TorusMap& f, int j,
                                 const SmoothingKernel& kernel = {}) {
  if (j < 1) throw ConfigError("zehnder_sequence: j >= 1 required");
  const double nb = kernel.band(j);
  TorusMap out(f.dim(), f.period(), f.target());
  for (const auto& [m, c] : f.coeffs()) {
    double u = kernel.cutoff(static_cast<double>(mode_l1(m)) / nb);
    if (u > 0.0) out.set_mode(m, u * c);
  }
  return out;
}

// Per-j table of the three sequence bounds plus the implied constants.
struct SuiteReport {
  struct Row {
    int j;
    double ck_dist;     // ||F_j - F||_k
    double strip_norm;  // |F_j|_{1/j}
    double step_norm;   // |F_{j+1} - F_j|_{1/(j+1)}
    double c_strip;     // strip_norm / ||F||_k
    double c_step;      // step_norm * j^k / ||F||_k
  };
  int k = 0;
  double f_ck_norm = 0.0;
  std::vector<Row> rows;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "j,ck_dist,strip_norm,step_norm,c_strip,c_step\n";
    for (const auto& r : rows)
      os << r.j << "," << r.ck_dist << "," << r.strip_norm << "," << r.step_norm
         << "," << r.c_strip << "," << r.c_step << "\n";
    return os.str();
  }
};

inline SuiteReport suite_report(const TorusMap& f, int k, int J,
                                const SmoothingKernel& kernel = {}) {
  if (J < 2) throw ConfigError("suite_report: J >= 2 required");
  SuiteReport rep;
  rep.k = k;
  rep.f_ck_norm = ck_norm(f, k);
  TorusMap fj = zehnder_sequence(f, 2, kernel);
  for (int j = 2; j <= J; ++j) {
    TorusMap fj1 = zehnder_sequence(f, j + 1, kernel);
    SuiteReport::Row row;
    row.j = j;
    row.ck_dist = ck_norm(fj.minus(f), k);
    row.strip_norm = fj.empty() ? 0.0 : fj.analytic_norm(1.0 / j);
    TorusMap diff = fj1.minus(fj);
    row.step_norm = diff.empty() ? 0.0 : diff.analytic_norm(1.0 / (j + 1));
    double denom = rep.f_ck_norm > 0 ? rep.f_ck_norm : 1.0;
    row.c_strip = row.strip_norm / denom;
    row.c_step = row.step_norm * std::pow(static_cast<double>(j), k) / denom;
    rep.rows.push_back(row);
    fj = std::move(fj1);
  }
  return rep;
}

}  // namespace kamreduce
