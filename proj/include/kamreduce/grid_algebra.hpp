// Uniform-grid evaluation of torus maps (zero-padded FFT), pointwise algebra
// with band control and a measured aliasing residual, spectral C^k norms, and
// the conjugation-residual metric used to accept every conjugation produced
// by the library.
#pragma once

#include <fftw3.h>

#include <functional>
#include <mutex>
#include <optional>
#include <unsupported/Eigen/MatrixFunctions>

#include "kamreduce/torus_map.hpp"

namespace kamreduce {

struct PointwiseConfig {
  int band_cap = 512;        // hard cap on result modes, per axis and in l1
  int oversample = 4;        // grid >= oversample * combined band, per axis
  int unary_band_pad = 4;    // invert/exp keep modes up to 2*band + pad
  double invert_det_floor = 1e-10;
  double prune_floor = 1e-300;
  // Coefficients below rel_prune * (grid value scale) are transform noise,
  // not content; keeping them would poison weighted norms at high modes.
  double rel_prune = 1e-16;
  int residual_samples = 3;  // off-grid probes for the aliasing report
};

namespace detail {

inline void fft_inplace(std::vector<Complex>& data, const std::vector<int>& sizes,
                        int sign) {
  static std::mutex plan_mutex;
  auto* raw = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan = fftw_plan_dft(static_cast<int>(sizes.size()), sizes.data(), raw, raw,
                         sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    fftw_destroy_plan(plan);
  }
}

inline int next_fast_size(int n) {
  n = std::max(n, 1);
  for (;; ++n) {
    int m = n;
    for (int p : {2, 3, 5, 7})
      while (m % p == 0) m /= p;
    if (m == 1) return n;
  }
}

inline size_t flat_index(const std::vector<int>& idx, const std::vector<int>& sizes) {
  size_t f = 0;
  for (size_t i = 0; i < sizes.size(); ++i) f = f * sizes[i] + idx[i];
  return f;
}

inline size_t total_size(const std::vector<int>& sizes) {
  size_t t = 1;
  for (int s : sizes) t *= s;
  return t;
}

}  // namespace detail

// Uniform samples of a matrix map over [0, period)^d, row-major over axes.
struct GridData {
  std::vector<int> sizes;
  int period = 1;
  int n = 2;
  std::vector<Matrix> values;

  size_t total() const { return detail::total_size(sizes); }
};

// Grid large enough to recover modes up to `band` per axis alias-free, with
// the configured oversampling relative to `combined_band`.
inline std::vector<int> grid_sizes_for(std::span<const int> combined_band,
                                       std::span<const int> keep_band,
                                       int oversample) {
  std::vector<int> sizes(combined_band.size());
  for (size_t i = 0; i < sizes.size(); ++i) {
    int need = std::max(oversample * combined_band[i], 2 * keep_band[i] + 2);
    sizes[i] = detail::next_fast_size(std::max(need, 1));
  }
  return sizes;
}

// Evaluates the trigonometric sum on the full grid via zero-padded backward
// FFT, one transform per matrix entry. Exact when sizes >= 2*band+1.
inline GridData eval_on_grid(const TorusMap& f, const std::vector<int>& sizes) {
  const int d = f.dim();
  const int n = f.n();
  GridData g{sizes, f.period(), n, {}};
  const size_t total = g.total();
  g.values.assign(total, zero_matrix(n));
  std::vector<Complex> buf(total);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      std::fill(buf.begin(), buf.end(), Complex(0, 0));
      for (const auto& [m, coef] : f.coeffs()) {
        std::vector<int> idx(d);
        for (int i = 0; i < d; ++i) idx[i] = ((m[i] % sizes[i]) + sizes[i]) % sizes[i];
        buf[detail::flat_index(idx, sizes)] += coef(r, c);
      }
      detail::fft_inplace(buf, sizes, FFTW_BACKWARD);
      for (size_t p = 0; p < total; ++p) g.values[p](r, c) = buf[p];
    }
  return g;
}

// Forward transform back to coefficients, keeping |m_i| <= band[i] and
// |m|_1 <= l1_cap. Real targets are symmetrized to scrub fp asymmetry, and
// coefficients below the transform noise floor are dropped.
inline TorusMap map_from_grid(const GridData& g, Target target,
                              std::span<const int> band, long l1_cap,
                              double abs_floor, double rel_floor = 0.0) {
  const int d = static_cast<int>(g.sizes.size());
  TorusMap out(d, g.period, target);
  const size_t total = g.total();
  double value_scale = 0.0;
  for (const auto& v : g.values) value_scale = std::max(value_scale, op_norm(v));
  const double prune_floor = std::max(abs_floor, rel_floor * value_scale);
  std::vector<Complex> buf(total);
  std::vector<std::vector<Complex>> spectra(static_cast<size_t>(g.n) * g.n);
  for (int r = 0; r < g.n; ++r)
    for (int c = 0; c < g.n; ++c) {
      for (size_t p = 0; p < total; ++p) buf[p] = g.values[p](r, c);
      detail::fft_inplace(buf, g.sizes, FFTW_FORWARD);
      spectra[r * g.n + c] = buf;
    }
  const double scale = 1.0 / static_cast<double>(total);
  std::vector<int> m(d, 0);
  std::function<void(int)> walk = [&](int axis) {
    if (axis == d) {
      if (mode_l1(m) > l1_cap) return;
      std::vector<int> idx(d);
      for (int i = 0; i < d; ++i) idx[i] = ((m[i] % g.sizes[i]) + g.sizes[i]) % g.sizes[i];
      size_t f = detail::flat_index(idx, g.sizes);
      Matrix coef(g.n, g.n);
      for (int r = 0; r < g.n; ++r)
        for (int c = 0; c < g.n; ++c) coef(r, c) = spectra[r * g.n + c][f] * scale;
      if (op_norm(coef) > prune_floor) out.set_mode(m, coef);
      return;
    }
    int b = std::min(band[axis], (g.sizes[axis] - 1) / 2);
    for (m[axis] = -b; m[axis] <= b; ++m[axis]) walk(axis + 1);
  };
  walk(0);
  return target.real ? out.symmetrized() : out;
}

enum class PointwiseOp { Add, Multiply, Invert, Exponentiate };

struct PointwiseResult {
  TorusMap map;
  double aliasing_residual = 0.0;  // off-grid mismatch of the banded result
};

namespace detail {

inline Matrix point_op(PointwiseOp op, const Matrix& a, const Matrix* b,
                       double det_floor) {
  switch (op) {
    case PointwiseOp::Add:
      return a + *b;
    case PointwiseOp::Multiply:
      return a * *b;
    case PointwiseOp::Invert: {
      if (std::abs(a.determinant()) < det_floor)
        throw SingularMapError("pointwise invert: |det| < floor at a grid node");
      return a.inverse();
    }
    case PointwiseOp::Exponentiate:
      return a.exp();
  }
  throw Error("point_op: unreachable");
}

inline std::vector<double> probe_point(int d, int period, int which) {
  // deterministic irrational offsets, off every sampling lattice
  std::vector<double> theta(d);
  const double phi = 0.6180339887498949;
  for (int i = 0; i < d; ++i) {
    double x = std::fmod(0.2718281828 + phi * (which + 1) * (i + 1.37), 1.0);
    theta[i] = period * x;
  }
  return theta;
}

}  // namespace detail

// Grid-backed pointwise algebra. Inputs of mixed period are promoted to the
// double torus first (exact). The result band follows the spec policy: sum of
// input bands for products, 2*band + pad for the unary ops, both capped.
inline PointwiseResult pointwise(const TorusMap& a_in,
                                 const std::optional<TorusMap>& b_in, PointwiseOp op,
                                 const PointwiseConfig& cfg = {}) {
  if (op == PointwiseOp::Add || op == PointwiseOp::Multiply) {
    if (!b_in) throw ConfigError("pointwise: binary op needs two maps");
  } else if (b_in) {
    throw ConfigError("pointwise: unary op takes one map");
  }

  if (op == PointwiseOp::Add) return {a_in.plus(*b_in), 0.0};  // exact in coefficients

  TorusMap a = a_in;
  std::optional<TorusMap> b = b_in;
  if (b && a.period() != b->period()) {
    a = a.to_period2();
    b = b->to_period2();
  }
  const int d = a.dim();

  std::vector<int> band_a(d), band_out(d), combined(d);
  for (int i = 0; i < d; ++i) band_a[i] = a.band_axis(i);
  long l1_out = 0;
  Target target;
  if (op == PointwiseOp::Multiply) {
    for (int i = 0; i < d; ++i) {
      combined[i] = band_a[i] + b->band_axis(i);
      band_out[i] = std::min(combined[i], cfg.band_cap);
    }
    l1_out = std::min<long>(a.band_l1() + b->band_l1(), cfg.band_cap);
    const Target &ta = a.target(), &tb = b->target();
    target = Target{ta.n, ta.real && tb.real, ta.group && tb.group,
                    ta.special && tb.special && ta.group && tb.group};
  } else {
    for (int i = 0; i < d; ++i) {
      combined[i] = band_a[i];
      band_out[i] = std::min(2 * band_a[i] + cfg.unary_band_pad, cfg.band_cap);
    }
    l1_out = std::min<long>(2 * a.band_l1() + cfg.unary_band_pad, cfg.band_cap);
    const Target& ta = a.target();
    if (op == PointwiseOp::Invert)
      target = ta;
    else  // exp: algebra -> group, trace-free -> det 1
      target = Target{ta.n, ta.real, true, ta.special};
  }

  auto sizes = grid_sizes_for(combined, band_out, cfg.oversample);
  GridData ga = eval_on_grid(a, sizes);
  std::optional<GridData> gb;
  if (b) gb = eval_on_grid(*b, sizes);

  GridData gr{sizes, a.period(), a.n(), {}};
  gr.values.resize(ga.total());
  for (size_t p = 0; p < ga.total(); ++p)
    gr.values[p] =
        detail::point_op(op, ga.values[p], gb ? &gb->values[p] : nullptr,
                         cfg.invert_det_floor);

  PointwiseResult res{
      map_from_grid(gr, target, band_out, l1_out, cfg.prune_floor, cfg.rel_prune),
      0.0};

  for (int s = 0; s < cfg.residual_samples; ++s) {
    auto theta = detail::probe_point(d, a.period(), s);
    Matrix lhs = res.map.eval(theta);
    Matrix va = a.eval(theta);
    Matrix rhs;
    if (op == PointwiseOp::Multiply)
      rhs = va * b->eval(theta);
    else if (op == PointwiseOp::Invert)
      rhs = va.inverse();
    else
      rhs = va.exp();
    res.aliasing_residual = std::max(res.aliasing_residual, op_norm(lhs - rhs));
  }
  return res;
}

inline PointwiseResult pw_multiply(const TorusMap& a, const TorusMap& b,
                                   const PointwiseConfig& cfg = {}) {
  return pointwise(a, b, PointwiseOp::Multiply, cfg);
}
inline PointwiseResult pw_invert(const TorusMap& a, const PointwiseConfig& cfg = {}) {
  return pointwise(a, std::nullopt, PointwiseOp::Invert, cfg);
}
inline PointwiseResult pw_exponentiate(const TorusMap& a,
                                       const PointwiseConfig& cfg = {}) {
  return pointwise(a, std::nullopt, PointwiseOp::Exponentiate, cfg);
}

// Sup of the operator norm over the map's natural grid (4x band per axis).
inline double grid_sup_norm(const TorusMap& f, int oversample = 4) {
  const int d = f.dim();
  std::vector<int> band(d), keep(d, 0);
  for (int i = 0; i < d; ++i) band[i] = f.band_axis(i);
  auto sizes = grid_sizes_for(band, keep, oversample);
  GridData g = eval_on_grid(f, sizes);
  double s = 0;
  for (const auto& v : g.values) s = std::max(s, op_norm(v));
  return s;
}

// C^k norm: max over multi-indices |beta| <= k of the grid sup of the
// spectral beta-partial. Equivalent to the differential norm up to a
// dimension constant.
inline double ck_norm(const TorusMap& f, int k, int oversample = 4) {
  if (k < 0) throw ConfigError("ck_norm: k >= 0 required");
  const int d = f.dim();
  double worst = 0;
  std::vector<int> beta(d, 0);
  std::function<void(int, int)> walk = [&](int axis, int budget) {
    if (axis == d) {
      worst = std::max(worst, grid_sup_norm(f.derive_partial(beta), oversample));
      return;
    }
    for (int b = 0; b <= budget; ++b) {
      beta[axis] = b;
      walk(axis + 1, budget - b);
    }
    beta[axis] = 0;
  };
  walk(0, k);
  return worst;
}

inline double norm(const TorusMap& f, const NormSpec& spec,
                   ModeNorm mode_norm = ModeNorm::L1) {
  if (spec.kind == NormSpec::Kind::Analytic) return f.analytic_norm(spec.r, mode_norm);
  return ck_norm(f, spec.k);
}

// Grid sup of || d_omega Z - (L Z - Z R) ||: the acceptance metric for every
// conjugation produced anywhere in the library. Optional fixed grid size
// (per axis) overrides the band-derived choice.
inline double conjugation_residual(const TorusMap& z_in, const TorusMap& lhs_in,
                                   const TorusMap& rhs_in, const FrequencyVector& omega,
                                   std::optional<int> grid_override = std::nullopt) {
  TorusMap z = z_in, lhs = lhs_in, rhs = rhs_in;
  int period = std::max({z.period(), lhs.period(), rhs.period()});
  if (period == 2) {
    z = z.to_period2();
    lhs = lhs.to_period2();
    rhs = rhs.to_period2();
  }
  const int d = z.dim();
  TorusMap dz = z.derive_omega(omega);
  std::vector<int> band(d), keep(d, 0);
  for (int i = 0; i < d; ++i)
    band[i] = z.band_axis(i) + std::max(lhs.band_axis(i), rhs.band_axis(i));
  std::vector<int> sizes;
  if (grid_override) {
    sizes.assign(d, *grid_override);
  } else {
    sizes = grid_sizes_for(band, keep, 4);
  }
  GridData gz = eval_on_grid(z, sizes);
  GridData gdz = eval_on_grid(dz, sizes);
  GridData gl = eval_on_grid(lhs, sizes);
  GridData gr = eval_on_grid(rhs, sizes);
  double worst = 0;
  for (size_t p = 0; p < gz.total(); ++p) {
    Matrix r = gdz.values[p] - (gl.values[p] * gz.values[p] - gz.values[p] * gr.values[p]);
    worst = std::max(worst, op_norm(r));
  }
  return worst;
}

}  // namespace kamreduce
