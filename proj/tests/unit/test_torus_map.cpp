#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "kamreduce/grid_algebra.hpp"

using namespace kamreduce;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int n, bool complex_entries = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      m(r, c) = Complex(u(rng), complex_entries ? u(rng) : 0.0);
  return m;
}

TorusMap random_map(std::mt19937_64& rng, int dim, int modes, int band,
                    Target target = Target::gl(2)) {
  std::uniform_int_distribution<int> mi(-band, band);
  TorusMap f(dim, 1, target);
  for (int i = 0; i < modes; ++i) {
    ModeIndex m(dim);
    for (int& v : m) v = mi(rng);
    f.add_mode(m, 0.3 * random_matrix(rng, target.n));
  }
  if (target.real) f = f.symmetrized();
  return f;
}

// independent term-by-term oracle, no shared code with TorusMap::eval
Matrix eval_oracle(const TorusMap& f, std::span<const double> theta) {
  Matrix acc = Matrix::Zero(f.n(), f.n());
  for (const auto& [m, c] : f.coeffs()) {
    double phase = 0;
    for (size_t i = 0; i < m.size(); ++i) phase += m[i] * theta[i];
    phase *= 2.0 * std::numbers::pi / f.period();
    acc += (std::cos(phase) + Complex(0, 1) * std::sin(phase)) * c;
  }
  return acc;
}

Matrix e12() {
  Matrix e = Matrix::Zero(2, 2);
  e(0, 1) = 1.0;
  return e;
}

}  // namespace

TEST_CASE("eval: empty map is zero") {
  TorusMap f(2, 1, Target::sl2R());
  CHECK(op_norm(f.eval({0.37, 0.11})) == 0.0);
}

TEST_CASE("eval: cosine pair reproduces the matrix at theta = 0") {
  std::mt19937_64 rng(7);
  Matrix e = random_matrix(rng, 2, false);
  TorusMap f(2, 1, Target::gl(2, true));
  f.add_cos({1, 0}, e);
  CHECK(op_norm(f.eval({0.0, 0.0}) - e) < 1e-15);
  // and cos(2 pi 0.25) = 0 at theta_1 = 1/4
  CHECK(op_norm(f.eval({0.25, 0.9})) < 1e-15);
}

TEST_CASE("eval: 20 random modes match the summation oracle") {
  std::mt19937_64 rng(42);
  TorusMap f = random_map(rng, 2, 20, 6);
  std::vector<double> theta{0.3, 0.7};
  CHECK(op_norm(f.eval(theta) - eval_oracle(f, theta)) < 1e-13);
}

TEST_CASE("eval: real targets give real values") {
  std::mt19937_64 rng(3);
  TorusMap f = random_map(rng, 2, 12, 4, Target::sl2R());
  Matrix v = f.eval({0.123, 0.456});
  CHECK(v.imag().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("derive_omega: constants die") {
  TorusMap f = TorusMap::constant(2, Target::sl2R(), e12() - e12().transpose());
  CHECK(f.derive_omega(golden_frequency()).empty());
}

TEST_CASE("derive_omega: cosine derivative against finite differences") {
  Matrix e = e12() + e12().transpose();
  TorusMap f(2, 1, Target::gl(2, true));
  f.add_cos({1, 0}, e);
  FrequencyVector omega = golden_frequency();
  TorusMap df = f.derive_omega(omega);

  // closed form: -2 pi sin(2 pi theta_1) E (omega_1 = 1)
  TorusMap expect(2, 1, Target::gl(2, true));
  expect.add_sin({1, 0}, -two_pi * e);
  for (const auto& [m, c] : expect.coeffs())
    CHECK(op_norm(df.coefficient(m) - c) < 1e-14);

  const double h = 1e-5;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> theta{0.05 + 0.09 * i, 0.31 + 0.07 * i};
    std::vector<double> tp = theta, tm = theta;
    for (int a = 0; a < 2; ++a) {
      tp[a] += h * omega.entries[a];
      tm[a] -= h * omega.entries[a];
    }
    Matrix fd = (f.eval(tp) - f.eval(tm)) / (2.0 * h);
    CHECK(op_norm(df.eval(theta) - fd) < 1e-8);
  }
}

TEST_CASE("derive_omega: period-2 single mode picks up i pi omega_1") {
  Matrix e = e12();
  TorusMap f(2, 2, Target::gl(2));
  f.set_mode({1, 0}, e);  // e^{i pi theta_1}
  FrequencyVector omega = golden_frequency();
  TorusMap df = f.derive_omega(omega);
  CHECK(op_norm(df.coefficient({1, 0}) - Complex(0, pi) * e) < 1e-15);

  const double h = 1e-5;
  std::vector<double> theta{0.4, 1.3};
  std::vector<double> tp = theta, tm = theta;
  for (int a = 0; a < 2; ++a) {
    tp[a] += h * omega.entries[a];
    tm[a] -= h * omega.entries[a];
  }
  Matrix fd = (f.eval(tp) - f.eval(tm)) / (2.0 * h);
  CHECK(op_norm(df.eval(theta) - fd) < 1e-8);
}

TEST_CASE("norm: zero map") {
  TorusMap f(2, 1, Target::sl2R());
  CHECK(f.analytic_norm(0.3) == 0.0);
  CHECK(ck_norm(f, 3) == 0.0);
}

TEST_CASE("norm: cosine majorant is e^{2 pi r}") {
  Matrix e = Matrix::Zero(2, 2);
  e(0, 1) = 1.0;  // ||E|| = 1
  TorusMap f(2, 1, Target::gl(2, true));
  f.add_cos({1, 0}, e);
  for (double r : {0.1, 0.37, 0.5})
    CHECK(f.analytic_norm(r) == Catch::Approx(std::exp(two_pi * r)).epsilon(1e-12));
}

TEST_CASE("norm: C^k of a constant is its operator norm") {
  std::mt19937_64 rng(11);
  Matrix a = random_matrix(rng, 2);
  TorusMap f = TorusMap::constant(2, Target::gl(2), a);
  CHECK(ck_norm(f, 7) == Catch::Approx(op_norm(a)).epsilon(1e-12));
}

TEST_CASE("norm: C^k of a cosine matches the closed form (2 pi)^k") {
  Matrix e = e12();
  TorusMap f(1, 1, Target::gl(2, true));
  f.add_cos({1}, e);
  // max over k' <= k of sup |d^{k'} cos(2 pi t)| = (2 pi)^k
  CHECK(ck_norm(f, 4) == Catch::Approx(std::pow(two_pi, 4)).epsilon(1e-10));
}

TEST_CASE("truncate: N = 0 keeps the mean only") {
  std::mt19937_64 rng(5);
  TorusMap f = random_map(rng, 2, 10, 4);
  Matrix mean = f.mean();
  auto t = f.truncate(0);
  CHECK(t.kept.support_size() <= 1);
  CHECK(op_norm(t.kept.mean() - mean) == 0.0);
}

TEST_CASE("truncate: N beyond the support is a no-op") {
  std::mt19937_64 rng(6);
  TorusMap f = random_map(rng, 2, 10, 4);
  auto t = f.truncate(1000);
  CHECK(t.kept.identical_coefficients(f));
  CHECK(t.tail.empty());
}

TEST_CASE("truncate: geometric tail norm equals the direct sum") {
  const double r = 0.25, r_out = 0.15;
  const int band = 12, N = 5;
  TorusMap f(1, 1, Target::gl(1, true));
  Matrix one = Matrix::Identity(1, 1);
  for (int m = 1; m <= band; ++m)
    f.add_cos({m}, 2.0 * std::exp(-two_pi * r * m) * one);
  auto t = f.truncate(N);
  // direct tail summation oracle
  double oracle = 0;
  for (int m = N + 1; m <= band; ++m)
    oracle += 2.0 * std::exp(-two_pi * r * m) * std::exp(two_pi * r_out * m);
  CHECK(t.tail.analytic_norm(r_out) == Catch::Approx(oracle).epsilon(1e-12));
  double bound = 0;  // sum_{|m|>N} e^{-2 pi (r - r') |m|}, both signs
  for (int m = N + 1; m <= band; ++m) bound += 2.0 * std::exp(-two_pi * (r - r_out) * m);
  CHECK(t.tail.analytic_norm(r_out) <= bound + 1e-12);
}

TEST_CASE("derive_omega commutes with truncate exactly") {
  std::mt19937_64 rng(8);
  TorusMap f = random_map(rng, 2, 15, 5);
  FrequencyVector omega = golden_frequency();
  TorusMap a = f.truncate(3).kept.derive_omega(omega);
  TorusMap b = f.derive_omega(omega).truncate(3).kept;
  CHECK(a.identical_coefficients(b));
}

TEST_CASE("pointwise: multiply by the inverse gives the identity") {
  std::mt19937_64 rng(9);
  // wider unary bands so the represented inverse carries the full tail
  PointwiseConfig cfg;
  cfg.unary_band_pad = 16;
  TorusMap s = random_map(rng, 2, 6, 2, Target::sl2R()).scaled(0.05);
  TorusMap z = pw_exponentiate(s, cfg).map;
  auto zi = pw_invert(z, cfg);
  auto prod = pw_multiply(z, zi.map, cfg);
  TorusMap dist = prod.map.minus(TorusMap::identity(2, prod.map.target()));
  CHECK(dist.analytic_norm(0.02) < 1e-10);
  CHECK(prod.aliasing_residual < 1e-10);
}

TEST_CASE("pointwise: exp of the zero map is the constant identity") {
  TorusMap z(2, 1, Target::sl2R());
  TorusMap e = pw_exponentiate(z).map;
  CHECK(e.is_identity(1e-14));
}

TEST_CASE("pointwise: exp of a constant nilpotent truncates to Id + E12") {
  TorusMap nil = TorusMap::constant(2, Target::gl(2, true), e12());
  TorusMap e = pw_exponentiate(nil).map;
  CHECK(op_norm(e.mean() - (Matrix::Identity(2, 2) + e12())) < 1e-13);
  CHECK(e.support_size() == 1);
}

TEST_CASE("pointwise: add dispatch is exact in coefficients") {
  std::mt19937_64 rng(10);
  TorusMap a = random_map(rng, 2, 8, 3);
  TorusMap b = random_map(rng, 2, 8, 3);
  auto sum = pointwise(a, b, PointwiseOp::Add);
  CHECK(sum.aliasing_residual == 0.0);
  CHECK(sum.map.identical_coefficients(a.plus(b)));
}

TEST_CASE("reality is preserved through the grid algebra") {
  std::mt19937_64 rng(12);
  TorusMap a = random_map(rng, 2, 8, 3, Target::sl2R());
  TorusMap b = random_map(rng, 2, 8, 3, Target::sl2R());
  CHECK(a.reality_defect() <= 1e-15);
  CHECK(pw_multiply(a, b).map.reality_defect() <= 1e-12);
  CHECK(pw_exponentiate(a.scaled(0.1)).map.reality_defect() <= 1e-12);
  TorusMap z = pw_exponentiate(a.scaled(0.1)).map;
  CHECK(pw_invert(z).map.reality_defect() <= 1e-12);
}

TEST_CASE("norm algebra: submultiplicativity up to the grid budget") {
  std::mt19937_64 rng(13);
  const double r = 0.05;
  for (int trial = 0; trial < 5; ++trial) {
    TorusMap a = random_map(rng, 2, 6, 3);
    TorusMap b = random_map(rng, 2, 6, 3);
    double lhs = pw_multiply(a, b).map.analytic_norm(r);
    double rhs = a.analytic_norm(r) * b.analytic_norm(r);
    CHECK(lhs <= rhs + 1e-9);
  }
}

TEST_CASE("eval of the truncation converges: tail majorant dominates grid error") {
  // synthetic geometric decay
  TorusMap f(2, 1, Target::gl(1, true));
  Matrix one = Matrix::Identity(1, 1);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  for (int m1 = -8; m1 <= 8; ++m1)
    for (int m2 = -8; m2 <= 8; ++m2) {
      if (!m1 && !m2) continue;
      ModeIndex m{m1, m2};
      f.add_mode(m, u(rng) * std::exp(-0.8 * mode_l1(m)) * one);
    }
  f = f.symmetrized();
  for (int N : {2, 4, 6}) {
    auto t = f.truncate(N);
    double tail_bound = t.tail.analytic_norm(1e-9);  // l1 majorant of the tail
    double grid_err = 0;
    for (int g = 0; g < 25; ++g) {
      std::vector<double> theta{g / 25.0, std::fmod(0.37 * g, 1.0)};
      grid_err = std::max(grid_err, op_norm(f.eval(theta) - t.kept.eval(theta)));
    }
    CHECK(grid_err <= tail_bound * (1 + 1e-12));
  }
}

TEST_CASE("serialization: exact round-trip") {
  std::mt19937_64 rng(15);
  TorusMap f = random_map(rng, 3, 12, 3, Target::gl(2));
  f.add_mode({1, -2, 0}, (1.0 / 3.0) * random_matrix(rng, 2));
  std::string text = f.to_string();
  TorusMap g = TorusMap::from_string(text);
  CHECK(g.dim() == f.dim());
  CHECK(g.period() == f.period());
  CHECK(g.target() == f.target());
  CHECK(g.identical_coefficients(f));
  // and the round trip is a fixed point of serialization
  CHECK(g.to_string() == text);
}

TEST_CASE("period conversion is exact both ways") {
  std::mt19937_64 rng(16);
  TorusMap f = random_map(rng, 2, 10, 4);
  TorusMap doubled = f.to_period2();
  CHECK(doubled.period() == 2);
  auto back = doubled.collapse_to_period1();
  CHECK(back.odd_coset_norm == 0.0);
  CHECK(back.map.identical_coefficients(f));
  // values agree pointwise
  std::vector<double> theta{0.21, 0.68};
  CHECK(op_norm(f.eval(theta) - doubled.eval(theta)) < 1e-13);
}

TEST_CASE("invert throws on singular grid points") {
  TorusMap f(1, 1, Target::gl(2, true));
  // (1 - cos(2 pi t)) Id vanishes at the grid node t = 0
  f.add_mode({0}, Matrix(Matrix::Identity(2, 2)));
  f.add_cos({1}, Matrix(-Matrix::Identity(2, 2)));
  CHECK_THROWS_AS(pw_invert(f), SingularMapError);
}
