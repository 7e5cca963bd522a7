#include "fermiwalk/ris.hpp"

#include "fermiwalk/shift_exact.hpp"
#include "fermiwalk/wedge.hpp"

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <numbers>

using namespace fermiwalk;
using namespace testsupport;

namespace {

constexpr double kPi = std::numbers::pi;

// Reduced k-body data of the quasifree state with one-body matrix rho1:
// entries 0..p of the hierarchy (the 0-body entry is the scalar 1).
std::vector<Mat> quasifree_hierarchy(const Mat& rho1, int p) {
  std::vector<Mat> out;
  out.push_back(Mat::Identity(1, 1));
  for (int k = 1; k <= p; ++k) out.push_back(gamma_on_wedge(rho1, k));
  return out;
}

}  // namespace

TEST_CASE("p_body_at at reference points", "[ris]") {
  SECTION("one period from vacuum, pair sector") {
    const auto initial = quasifree_hierarchy(Mat::Zero(3, 3), 2);
    const Mat rho2 = p_body_at(1, 2, initial, 0.5, kPi / 3.0, 3);
    CHECK(max_abs(rho2 - 0.140625 * Mat::Identity(3, 3)) < 1e-15);
  }

  SECTION("m = 0 reproduces the initial reduced data") {
    const Mat rho1 = random_hermitian_with_spectrum(3, 71, 0.1, 0.9);
    const auto initial = quasifree_hierarchy(rho1, 2);
    CHECK(max_abs(p_body_at(0, 2, initial, 0.4, 1.0, 3) - initial[2]) < 1e-14);
    CHECK(max_abs(p_body_at(0, 1, quasifree_hierarchy(rho1, 1), 0.4, 1.0, 3) - rho1) <
          1e-14);
  }

  SECTION("input validation") {
    const auto initial = quasifree_hierarchy(Mat::Zero(3, 3), 2);
    CHECK_THROWS_AS(p_body_at(-1, 2, initial, 0.5, 1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(p_body_at(1, 0, initial, 0.5, 1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(p_body_at(1, 4, initial, 0.5, 1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(p_body_at(1, 2, initial, 1.5, 1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(p_body_at(1, 3, initial, 0.5, 1.0, 3), std::invalid_argument);
  }
}

TEST_CASE("p_body_at agrees with the stroboscopic closed forms", "[ris]") {
  const int d = 3;
  const double sigma = 0.45;
  const double alpha = 0.9;
  const ReservoirSymbol symbol = ReservoirSymbol::uniform(sigma);
  const Mat rho1_mat = random_hermitian_with_spectrum(d, 81, 0.05, 0.95);
  const OneBodyDensity rho1_0 = OneBodyDensity::from_matrix(rho1_mat);
  const TwoBodyDensity rho2_0 =
      TwoBodyDensity::from_matrix(d, gamma_on_wedge(rho1_mat, 2));

  for (long m : {0L, 1L, 2L, 5L, 9L}) {
    const Mat one = p_body_at(m, 1, quasifree_hierarchy(rho1_mat, 1), sigma, alpha, d);
    CHECK(max_abs(one - one_body_at(symbol, rho1_0, alpha, m).matrix()) < 1e-12);

    const Mat two = p_body_at(m, 2, quasifree_hierarchy(rho1_mat, 2), sigma, alpha, d);
    CHECK(max_abs(two - two_body_at(symbol, rho1_0, rho2_0, alpha, m).matrix()) < 1e-12);
  }
}

TEST_CASE("p_body_at converges to the wedge power of the flat limit", "[ris]") {
  const int d = 4;
  const double sigma = 0.6;
  const Mat rho1 = random_hermitian_with_spectrum(d, 91, 0.1, 0.9);
  for (int p = 1; p <= 3; ++p) {
    const Mat at_large = p_body_at(60, p, quasifree_hierarchy(rho1, p), sigma, 1.0, d);
    const Mat limit = gamma_on_wedge(sigma * Mat::Identity(d, d), p);
    CHECK(max_abs(at_large - limit) < 1e-12);
  }
}

TEST_CASE("number_expectation tracks occupations through refresh cycles", "[ris]") {
  const int d = 2;
  const double sigma = 0.4;
  const double alpha = 1.1;
  const double c2 = std::cos(alpha) * std::cos(alpha);

  SECTION("vacuum start: every site fills at the same stroboscopic rate") {
    const std::vector<double> occ0{0.0, 0.0};
    for (long m : {0L, 1L, 3L}) {
      for (int j = 0; j < d; ++j)
        CHECK(number_expectation(j, m * d, sigma, alpha, d, occ0) ==
              Catch::Approx((1.0 - std::pow(c2, double(m))) * sigma).margin(1e-15));
    }
  }

  SECTION("mid-period: the site behind the coupling has refreshed once more") {
    const std::vector<double> occ0{0.0, 0.0};
    const long t = 2 * 1 + 1;  // m = 1, r = 1
    // Site 1's content came from source 1 + 1 - d = 0, wrapping once: m+1
    // refreshes.
    CHECK(number_expectation(1, t, sigma, alpha, d, occ0) ==
          Catch::Approx((1.0 - std::pow(c2, 2.0)) * sigma).margin(1e-15));
    // Site 0 reads source 1 with m = 1 refreshes.
    CHECK(number_expectation(0, t, sigma, alpha, d, occ0) ==
          Catch::Approx((1.0 - c2) * sigma).margin(1e-15));
  }

  SECTION("survival of an initial occupation") {
    const std::vector<double> occ0{1.0, 0.25};
    const double n0_after = number_expectation(0, 2, sigma, alpha, d, occ0);
    CHECK(n0_after == Catch::Approx(c2 * 1.0 + (1.0 - c2) * sigma).margin(1e-15));
  }

  SECTION("validation") {
    CHECK_THROWS_AS(number_expectation(2, 0, sigma, alpha, d, {0.0, 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(number_expectation(0, -1, sigma, alpha, d, {0.0, 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(number_expectation(0, 0, sigma, alpha, d, {0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(number_expectation(0, 0, sigma, alpha, d, {0.0, 1.5}),
                    std::invalid_argument);
  }
}

TEST_CASE("number_distribution is the binomial refresh law", "[ris]") {
  SECTION("no periods: point mass at zero particles") {
    const NumberDistribution dist = number_distribution(0, 0.5, 1.0, 3);
    CHECK(dist.q == 0.0);
    CHECK(dist.pmf[0] == 1.0);
    for (int p = 1; p <= 3; ++p) CHECK(dist.pmf[std::size_t(p)] == 0.0);
  }

  SECTION("full swap: one period reaches the reservoir binomial") {
    const NumberDistribution dist = number_distribution(1, 0.3, kPi / 2.0, 4);
    CHECK(dist.q == Catch::Approx(0.3));
    for (int p = 0; p <= 4; ++p)
      CHECK(dist.pmf[std::size_t(p)] ==
            Catch::Approx(double(binomial(4, p)) * std::pow(0.3, p) * std::pow(0.7, 4 - p)));
  }

  SECTION("reference point: d = 3, one period at alpha = pi/3") {
    const NumberDistribution dist = number_distribution(1, 0.5, kPi / 3.0, 3);
    CHECK(dist.q == Catch::Approx(0.375));
    CHECK(dist.pmf[0] == Catch::Approx(std::pow(0.625, 3)));
    CHECK(dist.pmf[1] == Catch::Approx(3.0 * 0.375 * 0.625 * 0.625));
    CHECK(dist.pmf[3] == Catch::Approx(std::pow(0.375, 3)));
  }

  SECTION("pmf always sums to one") {
    for (long m : {0L, 2L, 7L}) {
      const NumberDistribution dist = number_distribution(m, 0.62, 0.8, 5);
      double total = 0.0;
      for (double w : dist.pmf) total += w;
      CHECK(total == Catch::Approx(1.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("flux_expectation per step and cumulative", "[ris]") {
  const int d = 3;
  const double sigma = 0.45;
  const double alpha = 1.1;
  const double s2 = std::sin(alpha) * std::sin(alpha);
  const double c2 = 1.0 - s2;

  SECTION("vacuum start drains the reservoir at a decaying rate") {
    const std::vector<double> occ0{0.0, 0.0, 0.0};
    for (long t : {0L, 1L, 4L, 7L}) {
      const FluxRecord rec = flux_expectation(t, sigma, alpha, d, occ0);
      CHECK(rec.expectation ==
            Catch::Approx(-sigma * s2 * std::pow(c2, double(t / d))).margin(1e-15));
    }
  }

  SECTION("a full sample against a full reservoir exchanges nothing") {
    const std::vector<double> occ0{1.0, 1.0, 1.0};
    const FluxRecord rec = flux_expectation(5, 1.0, alpha, d, occ0);
    CHECK(rec.expectation == Catch::Approx(0.0).margin(1e-15));
    CHECK(rec.cumulative == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("cumulative flux equals the sum of per-step values") {
    const std::vector<double> occ0{1.0, 0.3, 0.0};
    double running = 0.0;
    for (long t = 0; t <= 25; ++t) {
      const FluxRecord rec = flux_expectation(t, sigma, alpha, d, occ0);
      CHECK(rec.cumulative == Catch::Approx(running).margin(1e-14));
      running += rec.expectation;
    }
  }

  SECTION("cumulative flux over whole periods matches both closed forms") {
    const std::vector<double> occ0{1.0, 0.3, 0.0};
    const double n_total0 = 1.3;
    for (long m : {1L, 5L, 20L, 40L}) {
      const long t = m * d;
      const FluxRecord rec = flux_expectation(t, sigma, alpha, d, occ0);
      const double closed = (n_total0 - sigma * d) * (1.0 - std::pow(c2, double(m)));
      // Form 1: (N_0 - sigma d)(1 - cos^{2m}).
      CHECK(std::abs(rec.cumulative - closed) < 1e-12);
      // Form 2: <N_s>_0 - <N_s>_t, with the occupations evolved directly.
      double n_total_t = 0.0;
      for (int j = 0; j < d; ++j)
        n_total_t += number_expectation(j, t, sigma, alpha, d, occ0);
      CHECK(std::abs(rec.cumulative - (n_total0 - n_total_t)) < 1e-12);
    }
  }
}

TEST_CASE("gibbs_limit is the diagonal product state", "[ris]") {
  SECTION("reference: sigma = 0.3 on three modes") {
    const Mat state = gibbs_limit(0.3, 3);
    REQUIRE(state.rows() == 8);
    CHECK(std::abs(state.trace().real() - 1.0) < 1e-14);
    for (int mask = 0; mask < 8; ++mask) {
      const int count = std::popcount(unsigned(mask));
      CHECK(state(mask, mask).real() ==
            Catch::Approx(std::pow(0.3, count) * std::pow(0.7, 3 - count)));
      for (int other = 0; other < 8; ++other)
        if (other != mask) CHECK(std::abs(state(mask, other)) == 0.0);
    }
  }

  SECTION("boundary densities give pure projectors") {
    const Mat empty = gibbs_limit(0.0, 2);
    CHECK(empty(0, 0) == cplx(1, 0));
    CHECK(std::abs(empty.trace().real() - 1.0) == 0.0);
    const Mat full = gibbs_limit(1.0, 2);
    CHECK(full(3, 3) == cplx(1, 0));
  }

  SECTION("validation") {
    CHECK_THROWS_AS(gibbs_limit(-0.1, 2), std::invalid_argument);
    CHECK_THROWS_AS(gibbs_limit(1.1, 2), std::invalid_argument);
    CHECK_THROWS_AS(gibbs_limit(0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(gibbs_limit(0.5, 13), resource_limit_error);
  }
}
