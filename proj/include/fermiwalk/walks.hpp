// Coined quantum walks on a ring of cells, the sample unitaries of
// interest beyond the plain shift. Each cell x carries a spin-1/2 coin
// C_x = [[alpha_x, beta_x], [gamma_x, delta_x]]; the walk applies the coin
// and then moves the +1 component to cell x+1 and the -1 component to
// cell x-1.
//
// Basis layout (periodic): e_{2x} = |+1, x>, e_{2x+1} = |-1, x>. The
// reservoir couples to e_0 = |+1, 0>.
//
// Dirichlet walls: swap coins at both boundary cells bounce the walker
// back. The resulting walk on 2n dimensions leaves the two-dimensional
// space spanned by |+1, 0> and |-1, n-1> invariant, and the sample is the
// complementary 2(n-1)-dimensional block, whose first basis vector (the
// coupled site e_0) is |-1, 0>.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/spectral.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace fermiwalk {

enum class Boundary { periodic, dirichlet };

struct CoinConfig {
  int n = 0;  // number of cells
  Boundary boundary = Boundary::periodic;
  std::vector<Mat> coins;  // 2x2 unitaries, one per cell

  void require_valid() const {
    if (n < 2) throw std::invalid_argument("CoinConfig: need at least 2 cells");
    if (coins.size() != std::size_t(n))
      throw std::invalid_argument("CoinConfig: need one coin per cell");
    for (std::size_t x = 0; x < coins.size(); ++x) {
      const Mat& c = coins[x];
      if (c.rows() != 2 || c.cols() != 2)
        throw std::invalid_argument("CoinConfig: coins must be 2x2");
      require_finite(c, "CoinConfig coin");
      if (max_abs(Mat(c.adjoint() * c - Mat::Identity(2, 2))) > SampleUnitary::kUnitaryTol) {
        std::ostringstream msg;
        msg << "CoinConfig: coin at cell " << x << " is not unitary";
        throw std::invalid_argument(msg.str());
      }
    }
  }
};

inline Mat swap_coin() {
  Mat s(2, 2);
  s << 0, 1, 1, 0;
  return s;
}

namespace detail {
// Periodic coined walk on all 2n dimensions with the given coins.
inline Mat coined_walk_matrix(const CoinConfig& config) {
  const int n = config.n;
  const int d = 2 * n;
  Mat w = Mat::Zero(d, d);
  for (int x = 0; x < n; ++x) {
    const Mat& c = config.coins[std::size_t(x)];
    const int up = 2 * ((x + 1) % n);        // |+1, x+1>
    const int down = 2 * ((x - 1 + n) % n) + 1;  // |-1, x-1>
    w(up, 2 * x) = c(0, 0);        // alpha_x
    w(down, 2 * x) = c(1, 0);      // gamma_x
    w(up, 2 * x + 1) = c(0, 1);    // beta_x
    w(down, 2 * x + 1) = c(1, 1);  // delta_x
  }
  return w;
}
}  // namespace detail

inline SampleUnitary build_periodic(const CoinConfig& config) {
  if (config.boundary != Boundary::periodic)
    throw std::invalid_argument("build_periodic: config is not periodic");
  config.require_valid();
  return SampleUnitary::from_matrix(detail::coined_walk_matrix(config));
}

// Walk between reflecting walls: swap coins at cells 0 and n-1 (imposed
// here; they are boundary conditions, not parameters). The invariant pair
// {|+1,0>, |-1,n-1>} is dropped, leaving d = 2(n-1) dimensions.
inline SampleUnitary build_dirichlet(const CoinConfig& config) {
  if (config.boundary != Boundary::dirichlet)
    throw std::invalid_argument("build_dirichlet: config is not dirichlet");
  if (config.n < 3) throw std::invalid_argument("build_dirichlet: need at least 3 cells");
  CoinConfig walled = config;
  walled.coins.front() = swap_coin();
  walled.coins.back() = swap_coin();
  walled.require_valid();
  const Mat full = detail::coined_walk_matrix(walled);
  const int d = 2 * (config.n - 1);
  return SampleUnitary::from_matrix(full.block(1, 1, d, d));
}

// Seed-deterministic coin family: each coin is
//   e^{i phi3} [[e^{i phi1} cos t, e^{i phi2} sin t],
//               [-e^{-i phi2} sin t, e^{-i phi1} cos t]]
// with t drawn from [margin, pi/2 - margin] so |alpha beta| stays away
// from zero, and phases uniform on the circle.
inline CoinConfig random_coins(int n, std::uint64_t seed, Boundary boundary,
                               double margin = 0.05) {
  if (n < 2) throw std::invalid_argument("random_coins: need at least 2 cells");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 4.0))
    throw std::invalid_argument("random_coins: margin out of range");
  std::mt19937_64 gen(seed);
  CoinConfig config;
  config.n = n;
  config.boundary = boundary;
  config.coins.reserve(std::size_t(n));
  for (int x = 0; x < n; ++x) {
    const double theta = margin + detail::uniform01(gen) * (std::numbers::pi / 2.0 - 2.0 * margin);
    const double phi1 = 2.0 * std::numbers::pi * detail::uniform01(gen);
    const double phi2 = 2.0 * std::numbers::pi * detail::uniform01(gen);
    const double phi3 = 2.0 * std::numbers::pi * detail::uniform01(gen);
    const cplx global = std::polar(1.0, phi3);
    Mat c(2, 2);
    c(0, 0) = std::polar(std::cos(theta), phi1);
    c(0, 1) = std::polar(std::sin(theta), phi2);
    c(1, 0) = -std::polar(std::sin(theta), -phi2);
    c(1, 1) = std::polar(std::cos(theta), -phi1);
    config.coins.push_back(global * c);
  }
  if (boundary == Boundary::dirichlet) {
    config.coins.front() = swap_coin();
    config.coins.back() = swap_coin();
  }
  return config;
}

// Genericity in the sense that every coin genuinely splits the walker:
// |alpha_x beta_x| > 0 at every cell that carries a free coin (the forced
// Dirichlet wall coins are exempt).
struct GenericityReport {
  bool generic = false;
  double min_margin = 0.0;            // smallest |alpha_x beta_x| over free cells
  std::vector<double> margins;        // per-cell |alpha_x beta_x|
  std::vector<int> offending_cells;   // cells at or below the threshold
};

inline GenericityReport is_generic(const CoinConfig& config, double threshold = 1e-8) {
  config.require_valid();
  GenericityReport report;
  report.min_margin = 1.0;
  const bool walls = config.boundary == Boundary::dirichlet;
  for (int x = 0; x < config.n; ++x) {
    const Mat& c = config.coins[std::size_t(x)];
    const double margin = std::abs(c(0, 0)) * std::abs(c(0, 1));
    report.margins.push_back(margin);
    if (walls && (x == 0 || x == config.n - 1)) continue;
    report.min_margin = std::min(report.min_margin, margin);
    if (margin <= threshold) report.offending_cells.push_back(x);
  }
  report.generic = report.offending_cells.empty();
  return report;
}

// Does the coupled site generate the whole sample under the walk? Rank of
// the Krylov matrix [e_0, W e_0, ..., W^{d-1} e_0] by singular values.
inline bool is_cyclic(const SampleUnitary& w, double tolerance = 1e-8) {
  const int d = w.d();
  Mat krylov(d, d);
  Vec v = basis_vector(d, 0);
  for (int k = 0; k < d; ++k) {
    krylov.col(k) = v;
    v = w.matrix() * v;
  }
  const auto svd = krylov.jacobiSvd();
  int rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tolerance) ++rank;
  return rank == d;
}

// Spectrum of the contracted step M = W K: the sample thermalizes iff the
// spectral radius is strictly below one, which holds whenever e_0 is
// cyclic for W and cos(alpha) is not +-1.
inline SpectralReport thermalization_certificate(const SampleUnitary& w, double alpha) {
  Mat m = w.matrix();
  m.col(0) *= std::cos(alpha);
  return spectral_report(m);
}

}  // namespace fermiwalk
