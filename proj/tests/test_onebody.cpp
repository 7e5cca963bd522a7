#include "fermiwalk/onebody.hpp"

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <numbers>

using namespace fermiwalk;
using namespace testsupport;

namespace {

constexpr double kPi = std::numbers::pi;

EffectiveMatrices two_site_shift_setting() {
  Mat s(2, 2);
  s << 0, 1, 1, 0;
  return build_effective(SampleUnitary::from_matrix(s), CouplingParams::from_alpha(kPi / 3.0),
                         0.5);
}

}  // namespace

TEST_CASE("one-body density validation", "[onebody]") {
  CHECK_NOTHROW(OneBodyDensity::scaled_identity(3, 0.0));
  CHECK_NOTHROW(OneBodyDensity::scaled_identity(3, 1.0));
  CHECK_THROWS_AS(OneBodyDensity::scaled_identity(3, 1.5), numeric_error);
  CHECK_THROWS_AS(OneBodyDensity::scaled_identity(3, -0.1), numeric_error);

  Mat skew(2, 2);
  skew << 0.5, cplx(0.1, 0.2), cplx(0.1, 0.3), 0.5;
  CHECK_THROWS_AS(OneBodyDensity::from_matrix(skew), numeric_error);

  Mat ok(2, 2);
  ok << 0.5, cplx(0.1, 0.2), cplx(0.1, -0.2), 0.5;
  const OneBodyDensity rho = OneBodyDensity::from_matrix(ok);
  CHECK(rho.d() == 2);
  CHECK(max_abs(rho.matrix() - ok) < 1e-15);
}

TEST_CASE("two steps of the two-site shift fill the sample to 0.375", "[onebody]") {
  const EffectiveMatrices eff = two_site_shift_setting();
  OneBodyDensity rho = OneBodyDensity::zero(2);

  rho = step(rho, eff);
  Mat after_one = Mat::Zero(2, 2);
  after_one(1, 1) = 0.375;  // the injected quantum sits on W e0 = e1
  CHECK(max_abs(rho.matrix() - after_one) < 1e-15);

  rho = step(rho, eff);
  CHECK(max_abs(rho.matrix() - 0.375 * Mat::Identity(2, 2)) < 1e-15);
}

TEST_CASE("closed form agrees with iterated stepping", "[onebody]") {
  const SampleUnitary w = SampleUnitary::from_matrix(random_unitary(4, 77));
  const EffectiveMatrices eff = build_effective(w, CouplingParams::from_alpha(0.9), 0.35);
  OneBodyDensity rho = OneBodyDensity::scaled_identity(4, 0.2);
  const OneBodyDensity rho0 = rho;
  for (long t = 0; t <= 17; ++t) {
    CHECK(max_abs(one_body_closed_form(rho0, eff, t).matrix() - rho.matrix()) < 1e-12);
    rho = step(rho, eff);
  }
}

TEST_CASE("evolve records the requested steps and converges", "[onebody]") {
  const SampleUnitary w = SampleUnitary::from_matrix(random_unitary(3, 5));
  const EffectiveMatrices eff = build_effective(w, CouplingParams::from_alpha(1.1), 0.4);
  const EvolutionTrace trace = evolve(OneBodyDensity::zero(3), eff, 300, 7);

  REQUIRE(trace.times.front() == 0);
  REQUIRE(trace.times.back() == 300);
  for (std::size_t i = 0; i + 1 < trace.times.size(); ++i) {
    CHECK(trace.times[i] < trace.times[i + 1]);
    if (trace.times[i + 1] != 300) CHECK(trace.times[i + 1] % 7 == 0);
  }
  CHECK(trace.snapshots.size() == trace.times.size());
  CHECK(trace.distances_to_limit.front() == Catch::Approx(0.4));

  // Eventual contraction towards sigma * identity (the generic, cyclic case).
  CHECK(trace.distances_to_limit.back() < 1e-6);
  CHECK_THROWS_AS(evolve(OneBodyDensity::zero(3), eff, -1), std::invalid_argument);
  CHECK_THROWS_AS(evolve(OneBodyDensity::zero(3), eff, 5, 0), std::invalid_argument);
}

TEST_CASE("fixed point solves the stationarity equation", "[onebody]") {
  SECTION("two-site shift at alpha = pi/2 lands exactly on sigma * identity") {
    Mat s(2, 2);
    s << 0, 1, 1, 0;
    const EffectiveMatrices eff =
        build_effective(SampleUnitary::from_matrix(s), CouplingParams::from_alpha(kPi / 2.0),
                        0.7);
    const OneBodyDensity fp = fixed_point(eff);
    CHECK(max_abs(fp.matrix() - 0.7 * Mat::Identity(2, 2)) < 1e-14);
  }

  SECTION("random walk: residual of the fixed-point equation vanishes") {
    const SampleUnitary w = SampleUnitary::from_matrix(random_unitary(5, 123));
    const EffectiveMatrices eff = build_effective(w, CouplingParams::from_alpha(0.8), 0.6);
    const Mat fp = fixed_point(eff).matrix();
    CHECK(max_abs(eff.M * fp * eff.M.adjoint() + eff.B - fp) < 1e-13);
    CHECK(max_abs(fp - 0.6 * Mat::Identity(5, 5)) < 1e-12);  // sigma * 1 is stationary
  }

  SECTION("spectrum on the unit circle is rejected with a diagnostic") {
    const SampleUnitary w = SampleUnitary::from_matrix(Mat::Identity(3, 3));
    const EffectiveMatrices eff = build_effective(w, CouplingParams::from_alpha(1.0), 0.5);
    CHECK_THROWS_AS(fixed_point(eff), precondition_error);
    CHECK_THROWS_WITH(fixed_point(eff), Catch::Matchers::ContainsSubstring("eigenvalues"));
  }
}

TEST_CASE("identity walk thermalizes only the coupled site", "[onebody]") {
  Mat rho0 = Mat::Zero(3, 3);
  rho0(1, 1) = 0.8;
  rho0(2, 2) = 0.25;
  rho0(1, 2) = rho0(2, 1) = 0.2;

  double final_distance = -1.0;
  const OneBodyDensity limit = stagnant_limit_demo(OneBodyDensity::from_matrix(rho0), 1.2, 0.5,
                                                   400, &final_distance);

  Mat expected = rho0;
  expected(0, 0) = 0.5;
  CHECK(max_abs(limit.matrix() - expected) < 1e-15);
  // The iteration really does converge to this partial limit...
  CHECK(final_distance < 1e-12);
  // ...which stays far from the flat state: no full thermalization.
  CHECK(op_norm(limit.matrix() - 0.5 * Mat::Identity(3, 3)) > 0.3);

  CHECK_THROWS_AS(stagnant_limit_demo(OneBodyDensity::zero(2), 0.0, 0.5, 10),
                  std::invalid_argument);
  CHECK_THROWS_AS(stagnant_limit_demo(OneBodyDensity::zero(2), kPi, 0.5, 10),
                  std::invalid_argument);
}

TEST_CASE("step preserves admissibility along a long orbit", "[onebody]") {
  const SampleUnitary w = SampleUnitary::from_matrix(random_unitary(4, 9));
  const EffectiveMatrices eff = build_effective(w, CouplingParams::from_alpha(2.0), 0.55);
  OneBodyDensity rho = OneBodyDensity::scaled_identity(4, 1.0);
  for (int t = 0; t < 50; ++t) rho = step(rho, eff);
  Eigen::SelfAdjointEigenSolver<Mat> solver(rho.matrix(), Eigen::EigenvaluesOnly);
  CHECK(solver.eigenvalues().minCoeff() >= -1e-12);
  CHECK(solver.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
}
