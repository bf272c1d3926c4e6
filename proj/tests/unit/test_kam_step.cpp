#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "kamreduce/kam_step.hpp"

using namespace kamreduce;

namespace {

Matrix rot(double beta) {
  Matrix a(2, 2);
  a << 0, -beta, beta, 0;
  return a;
}

Matrix e12() {
  Matrix e = Matrix::Zero(2, 2);
  e(0, 1) = 1;
  return e;
}

TorusMap one_mode_perturbation(double eps, double r) {
  Matrix e(2, 2);
  e << 0.3, 1.0, 0.7, -0.3;
  TorusMap f(2, 1, Target::sl2R());
  f.add_cos({1, 0}, e);
  return f.scaled(eps / f.analytic_norm(r)).symmetrized();
}

TorusMap identity_psi() { return TorusMap::identity(2, Target::SL2R()).to_period2(); }

StepParams default_params() {
  StepParams p;
  p.r = 0.5;
  p.r_out = 1.0 / 3.0;
  return p;
}

}  // namespace

TEST_CASE("step constants: N at the calibration point") {
  DiophantineParams dioph(0.25, 1.0);
  auto c = step_constants(0.5, 1.0 / 3.0, std::exp(-pi), 2, dioph);
  CHECK(c.N == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("step constants: R formula probe at r - r'' = 1") {
  DiophantineParams dioph(0.25, 1.0);
  auto c = step_constants(1.5, 0.5, 1e-3, 2, dioph);
  // 80^4 (n(n-1)/2 + 1)^2 with n = 2: 4 * 80^4
  CHECK(c.R == Catch::Approx(163840000.0).epsilon(1e-14));
}

TEST_CASE("step constants: kappa'' matches the n = 2 reduction") {
  DiophantineParams dioph(0.3, 1.5);
  double r = 0.5, rpp = 1.0 / 3.0, eps = 1e-6;
  auto c = step_constants(r, rpp, eps, 2, dioph);
  double n_direct = std::abs(std::log(eps)) / (two_pi * r);
  double r_direct = 4.0 * std::pow(80.0, 4) / std::pow(r - rpp, 8);
  double expect = 0.3 / (2.0 * std::pow(8.0 * r_direct * r_direct * n_direct, 1.5));
  CHECK(c.kappa2 == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("homological solve: zero input, zero output") {
  auto sol = solve_homological(rot(0.8), TorusMap::zero(2, Target::sl2R()),
                               golden_frequency(), 1e-8, 1.0);
  CHECK(sol.z.empty());
  CHECK(sol.remainder.empty());
  CHECK(sol.resonant_modes.empty());
}

TEST_CASE("homological solve: A = 0 integrates the cosine") {
  FrequencyVector omega = golden_frequency();
  TorusMap g(2, 1, Target::gl(2, true));
  g.add_cos({1, 0}, e12());
  auto sol = solve_homological(Matrix(Matrix::Zero(2, 2)), g, omega, 1e-10, 1.0);
  CHECK(sol.remainder.empty());

  // closed form: Z = sin(2 pi theta_1) / (2 pi <m, omega>) E12, <m,omega> = 1
  TorusMap expect(2, 1, Target::gl(2, true));
  expect.add_sin({1, 0}, (1.0 / two_pi) * e12());
  for (const auto& [m, c] : expect.coeffs())
    CHECK(op_norm(sol.z.coefficient(m) - c) < 1e-14);

  // finite-difference check of d_omega Z = G at scattered points
  const double h = 1e-6;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> theta{0.03 + 0.11 * i, 0.57 + 0.13 * i};
    std::vector<double> tp = theta, tm = theta;
    for (int a = 0; a < 2; ++a) {
      tp[a] += h * omega.entries[a];
      tm[a] -= h * omega.entries[a];
    }
    Matrix fd = (sol.z.eval(tp) - sol.z.eval(tm)) / (2.0 * h);
    CHECK(op_norm(fd - g.eval(theta)) < 1e-9);
  }
}

TEST_CASE("homological solve: flagged modes are skipped verbatim") {
  FrequencyVector omega = golden_frequency();
  // constant with 2 alpha = 2 pi <(0,1), omega>: the (0,1) divisor vanishes
  Matrix a = rot(pi * omega.entries[1]);
  TorusMap g(2, 1, Target::sl2R());
  Matrix c(2, 2);
  c << 0.1, 0.4, 0.2, -0.1;
  g.add_cos({0, 1}, c);
  g = g.symmetrized();
  auto sol = solve_homological(a, g, omega, 1e-3, 1.0);
  CHECK(sol.z.empty());
  CHECK(sol.remainder.identical_coefficients(g));
  CHECK(sol.resonant_modes.size() == 2);  // the +- pair
}

TEST_CASE("homological solve: exact identity in coefficients") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-1, 1);
  FrequencyVector omega = golden_frequency();
  Matrix a(2, 2);
  a << 0.1, -0.9, 1.1, -0.1;
  TorusMap g(2, 1, Target::sl2R());
  for (int i = 0; i < 5; ++i) {
    Matrix c(2, 2);
    double x = u(rng), y = u(rng), z = u(rng);
    c << x, y, z, -x;
    g.add_cos({static_cast<int>(rng() % 5) - 2, static_cast<int>(rng() % 5) - 2},
              0.1 * c);
  }
  g = g.symmetrized();
  g = g.minus(TorusMap::constant(2, g.target(), g.mean()));
  auto sol = solve_homological(a, g, omega, 1e-9, 1.0);
  // d_omega Z - [A, Z] = G - remainder, coefficient for coefficient
  TorusMap lhs = sol.z.derive_omega(omega)
                     .minus(sol.z.left_multiplied(a).minus(sol.z.right_multiplied(a)));
  TorusMap rhs = g.minus(sol.remainder);
  TorusMap diff = lhs.minus(rhs);
  CHECK(diff.coeff_l1_norm() < 1e-12);
}

TEST_CASE("remove_resonance: the zero mode is a no-op") {
  Matrix a = rot(0.7);
  auto rem = remove_resonance(a, {0, 0}, golden_frequency());
  CHECK(rem.rotation.is_identity(1e-15));
  CHECK(op_norm(rem.a_shifted - a) == 0.0);
  CHECK(rem.rotation_shift == 0.0);
}

TEST_CASE("remove_resonance: spectrum shift by eigenvalue arithmetic") {
  FrequencyVector omega = golden_frequency();
  double alpha = pi * omega.entries[1] + 1e-3;
  auto rem = remove_resonance(rot(alpha), {0, 1}, omega);
  Eigen::ComplexEigenSolver<Matrix> es(rem.a_shifted);
  double im0 = std::abs(es.eigenvalues()(0).imag());
  CHECK(std::abs(im0 - 1e-3) < 1e-12);
  CHECK(std::abs(es.eigenvalues()(0).real()) < 1e-14);
  // rotation frame is 2-periodic with the +-m half-frequency pair
  CHECK(rem.rotation.period() == 2);
  CHECK(rem.rotation.support_size() == 2);
  CHECK(rem.tracked.half);
}

TEST_CASE("remove_resonance: rotation-number oracle on the constants") {
  FrequencyVector omega = golden_frequency();
  ModeIndex m{0, 1};
  double alpha = pi * omega.entries[1] + 1e-3;
  Matrix a = rot(alpha);
  auto rem = remove_resonance(a, m, omega);
  TorusMap zero_f = TorusMap::zero(2, Target::sl2R());
  double rho_a = rotation_number(CocycleSystem(a, zero_f, omega), 500.0, 1e-3).value;
  double rho_s =
      rotation_number(CocycleSystem(rem.a_shifted, zero_f, omega), 500.0, 1e-3).value;
  CHECK(std::abs(rho_a - rho_s - pi * omega.dot(m)) < 1e-6);
  CHECK(std::abs(rho_a - rho_s - rem.rotation_shift) < 1e-6);
}

TEST_CASE("remove_resonance: parabolic constants are refused") {
  Matrix nil = e12();  // nonzero nilpotent: not elliptic
  CHECK_THROWS_AS(remove_resonance(nil, {0, 1}, golden_frequency()),
                  ParabolicConstantError);
  Matrix hyp(2, 2);
  hyp << 0.3, 0, 0, -0.3;
  CHECK_THROWS_AS(remove_resonance(hyp, {0, 1}, golden_frequency()),
                  ParabolicConstantError);
}

TEST_CASE("kam_step: nothing to do on zero perturbation") {
  FrequencyVector omega = golden_frequency();
  Matrix a = rot(0.8);
  TorusMap a_bar = TorusMap::constant(2, Target::sl2R(), a);
  auto res = kam_step(a_bar, TorusMap::zero(2, Target::sl2R()), identity_psi(), a,
                      omega, default_params());
  CHECK(res.z.is_identity(1e-15));
  CHECK(res.f_bar.empty());
  CHECK(op_norm(res.a_const - a) == 0.0);
  CHECK(!res.resonance.has_value());
}

TEST_CASE("kam_step: quadratic-type contraction on one-mode input") {
  FrequencyVector omega = golden_frequency();
  Matrix a = rot(0.8);
  TorusMap a_bar = TorusMap::constant(2, Target::sl2R(), a);
  std::vector<double> slopes;
  double prev_eps = 0, prev_out = 0;
  for (double eps : {1e-4, 1e-5, 1e-6}) {
    auto res = kam_step(a_bar, one_mode_perturbation(eps, 0.5), identity_psi(), a,
                        omega, default_params());
    CHECK(res.diag.exact_conjugacy_residual < 1e-10 + res.diag.aliasing);
    if (prev_eps > 0)
      slopes.push_back(std::log(res.eps_out / prev_out) /
                       std::log(res.diag.eps_in / prev_eps));
    prev_eps = res.diag.eps_in;
    prev_out = res.eps_out;
  }
  for (double s : slopes) CHECK(s >= 1.8);
}

TEST_CASE("kam_step: gate failure is reported as an error") {
  FrequencyVector omega = golden_frequency();
  Matrix a = rot(0.8);
  TorusMap a_bar = TorusMap::constant(2, Target::sl2R(), a);
  StepParams p = default_params();  // practical gate: eps < 1e-3 (r - r'')
  CHECK_THROWS_AS(kam_step(a_bar, one_mode_perturbation(1e-3, 0.5), identity_psi(),
                           a, omega, p),
                  GateError);
}

TEST_CASE("kam_step: resonant constant obeys the dichotomy") {
  FrequencyVector omega = golden_frequency();
  double alpha = pi * omega.entries[1] + 1e-4;
  Matrix a = rot(alpha);
  TorusMap a_bar = TorusMap::constant(2, Target::sl2R(), a);
  auto res = kam_step(a_bar, one_mode_perturbation(1e-5, 0.5), identity_psi(), a,
                      omega, default_params());
  REQUIRE(res.resonance.has_value());
  CHECK(res.resonance->m == ModeIndex{0, 1});
  CHECK(res.resonance->half);
  double bound = res.diag.constants.kappa2 + std::sqrt(res.diag.eps_in);
  CHECK(op_norm(res.a_const) <= bound);
  // rotation ledger at the constant level
  CHECK(res.diag.rotation_residual <= res.rotation_shift_bound);
  // new psi is genuinely 2-periodic
  CHECK(res.psi.period() == 2);
  bool has_odd = false;
  for (const auto& [m, c] : res.psi.coeffs())
    for (int v : m)
      if (v % 2 != 0) has_odd = true;
  CHECK(has_odd);
}

TEST_CASE("kam_step: Melnikov-stability keeps Psi coefficient for coefficient") {
  FrequencyVector omega = golden_frequency();
  // first step removes a resonance, producing a nontrivial Psi
  double alpha = pi * omega.entries[1] + 1e-4;
  Matrix a = rot(alpha);
  TorusMap a_bar = TorusMap::constant(2, Target::sl2R(), a);
  auto first = kam_step(a_bar, one_mode_perturbation(1e-5, 0.5), identity_psi(), a,
                        omega, default_params());
  REQUIRE(first.resonance.has_value());
  REQUIRE(!first.psi.is_identity(1e-12));

  // second step on the conjugated pair: the new constant is nonresonant
  StepParams p2 = default_params();
  p2.r = 1.0 / 3.0;
  p2.r_out = 0.25;
  auto second = kam_step(first.a_bar, first.f_bar, first.psi, first.a_const, omega, p2);
  CHECK(!second.resonance.has_value());
  CHECK(second.psi.identical_coefficients(first.psi));
}

TEST_CASE("kam_step: period discipline of every output") {
  FrequencyVector omega = golden_frequency();
  double alpha = pi * omega.entries[1] + 1e-4;
  Matrix a = rot(alpha);
  TorusMap a_bar = TorusMap::constant(2, Target::sl2R(), a);
  auto res = kam_step(a_bar, one_mode_perturbation(1e-5, 0.5), identity_psi(), a,
                      omega, default_params());
  CHECK(res.z.period() == 1);
  CHECK(res.a_bar.period() == 1);
  CHECK(res.f_bar.period() == 1);
  CHECK(res.psi.period() == 2);
  CHECK(res.diag.odd_coset_mass < 1e-10);
  // A_bar' is reducible to A' by Psi'
  CHECK(conjugation_residual(res.psi, res.a_bar, res.a_const, omega) < 1e-10);
}

TEST_CASE("kam_step: paper strip range is recorded, not enforced") {
  StepParams p = default_params();
  CHECK(!p.paper_strip_range());  // (1/2, 1/3) sits outside [95r/96, r)
  p.r = 0.48;
  p.r_out = 0.477;
  CHECK(p.paper_strip_range());
}
