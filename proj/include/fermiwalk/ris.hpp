// Specializations for the repeated-interaction regime: shift sample with an
// uncorrelated reservoir of density sigma. Everything here is an explicit
// scalar formula — p-body mixtures with binomial weights, per-site
// occupation evolution, particle-number statistics, the flux of particles
// between reservoir and sample, and the Gibbs-like stationary state.
//
// These formulas assume the walk is the plain cyclic shift; feeding them
// data from any other walk is a contract violation (the caller-facing
// experiment layer rejects such configurations).
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/fock.hpp"
#include "fermiwalk/wedge.hpp"

#include <bit>
#include <cmath>
#include <vector>

namespace fermiwalk {

namespace detail {
inline void require_unit_interval(double sigma, const char* who) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) {
    std::ostringstream msg;
    msg << who << ": sigma = " << sigma << " outside [0, 1]";
    throw std::invalid_argument(msg.str());
  }
}
}  // namespace detail

// p-body reduced density on the p-wedge after m periods, from the initial
// reduced hierarchy rho^(0..p): a binomial mixture of the surviving initial
// k-body correlations embedded next to (p-k) reservoir-filled slots,
//   sum_k C(p,k) (1-cos^{2m})^{p-k} sigma^{p-k} cos^{2mk} * compress(rho^(k) (x) 1).
inline Mat p_body_at(long m, int p, const std::vector<Mat>& initial_reduced, double sigma,
                     double alpha, int d) {
  if (m < 0) throw std::invalid_argument("p_body_at: need m >= 0");
  if (p < 1 || p > d) throw std::invalid_argument("p_body_at: need 1 <= p <= d");
  detail::require_unit_interval(sigma, "p_body_at");
  if (initial_reduced.size() != std::size_t(p) + 1)
    throw std::invalid_argument("p_body_at: need initial matrices for every order 0..p");
  double tensor_dim = 1.0;
  for (int i = 0; i < p; ++i) tensor_dim *= d;
  if (tensor_dim > 4096.0) throw resource_limit_error("p_body_at: tensor space too large");
  for (int k = 0; k <= p; ++k) {
    const Eigen::Index want = Eigen::Index(binomial(d, k));
    const Mat& rho_k = initial_reduced[std::size_t(k)];
    if (rho_k.rows() != want || rho_k.cols() != want)
      throw std::invalid_argument("p_body_at: initial matrix has wrong wedge dimension");
  }

  const double c2m = std::pow(std::cos(alpha), 2.0 * double(m));
  const Eigen::Index dim_p = Eigen::Index(binomial(d, p));
  const Mat e_p = wedge_embedding(d, p);
  Mat out = Mat::Zero(dim_p, dim_p);
  for (int k = 0; k <= p; ++k) {
    const double weight = double(binomial(p, k)) * std::pow((1.0 - c2m) * sigma, p - k) *
                          std::pow(c2m, k);
    if (weight == 0.0) continue;
    Mat compressed;
    if (k == p) {
      compressed = initial_reduced[std::size_t(k)];
    } else {
      const Mat e_k = wedge_embedding(d, k);
      const Mat tensor_k = e_k * initial_reduced[std::size_t(k)] * e_k.adjoint();
      Eigen::Index pad = 1;
      for (int i = 0; i < p - k; ++i) pad *= d;
      compressed = e_p.adjoint() * kron(tensor_k, Mat::Identity(pad, pad)) * e_p;
    }
    out += weight * compressed;
  }
  return hermitize(out);
}

// Occupation of site j at time t = m*d + r. A site ahead of the sweep front
// has been refreshed m times, a site behind it m+1 times, with the shift
// relabeling folded in:
//   j + r <  d: cos^{2m} <n_{j+r}>_0 + (1 - cos^{2m}) sigma
//   j + r >= d: cos^{2(m+1)} <n_{j+r-d}>_0 + (1 - cos^{2(m+1)}) sigma.
inline double number_expectation(int j, long t, double sigma, double alpha, int d,
                                 const std::vector<double>& initial_occupations) {
  if (j < 0 || j >= d) throw std::invalid_argument("number_expectation: site out of range");
  if (t < 0) throw std::invalid_argument("number_expectation: need t >= 0");
  detail::require_unit_interval(sigma, "number_expectation");
  if (initial_occupations.size() != std::size_t(d))
    throw std::invalid_argument("number_expectation: need one occupation per site");
  for (double n : initial_occupations)
    if (!(n >= 0.0 && n <= 1.0))
      throw std::invalid_argument("number_expectation: occupations must lie in [0, 1]");
  const long m = t / d;
  const int r = int(t % d);
  const double c2 = std::cos(alpha) * std::cos(alpha);
  long refreshes = m;
  int source = j + r;
  if (source > d - 1) {
    refreshes = m + 1;
    source -= d;
  }
  const double survival = std::pow(c2, double(refreshes));
  return survival * initial_occupations[std::size_t(source)] + (1.0 - survival) * sigma;
}

// Particle-number statistics after m periods from the vacuum: binomial with
// per-site success probability q = (1 - cos^{2m}) sigma.
struct NumberDistribution {
  int d = 0;
  double q = 0.0;
  std::vector<double> pmf;  // probabilities for N_s = 0..d
};

inline NumberDistribution number_distribution(long m, double sigma, double alpha, int d) {
  if (m < 0) throw std::invalid_argument("number_distribution: need m >= 0");
  if (d < 1) throw std::invalid_argument("number_distribution: need d >= 1");
  detail::require_unit_interval(sigma, "number_distribution");
  NumberDistribution dist;
  dist.d = d;
  dist.q = (1.0 - std::pow(std::cos(alpha), 2.0 * double(m))) * sigma;
  dist.pmf.resize(std::size_t(d) + 1);
  for (int p = 0; p <= d; ++p)
    dist.pmf[std::size_t(p)] = double(binomial(d, p)) * std::pow(dist.q, p) *
                               std::pow(1.0 - dist.q, d - p);
  return dist;
}

// Expected flux of particles out of the reservoir at step t = m*d + u, and
// its running total over the steps before t. The per-step value is
// sin^2 cos^{2m} (<n_u>_0 - sigma); the total telescopes to the drop in the
// sample's particle count, (<N_s>_0 - sigma d)(1 - cos^{2m}) at t = m*d.
struct FluxRecord {
  long t = 0;
  double expectation = 0.0;
  double cumulative = 0.0;
};

inline FluxRecord flux_expectation(long t, double sigma, double alpha, int d,
                                   const std::vector<double>& initial_occupations) {
  if (t < 0) throw std::invalid_argument("flux_expectation: need t >= 0");
  if (d < 1) throw std::invalid_argument("flux_expectation: need d >= 1");
  detail::require_unit_interval(sigma, "flux_expectation");
  if (initial_occupations.size() != std::size_t(d))
    throw std::invalid_argument("flux_expectation: need one occupation per site");
  const double sin2 = std::sin(alpha) * std::sin(alpha);
  const double c2 = std::cos(alpha) * std::cos(alpha);
  auto step_value = [&](long step) {
    const long m = step / d;
    const int u = int(step % d);
    return sin2 * std::pow(c2, double(m)) * (initial_occupations[std::size_t(u)] - sigma);
  };
  FluxRecord rec;
  rec.t = t;
  rec.expectation = step_value(t);
  for (long step = 0; step < t; ++step) rec.cumulative += step_value(step);
  return rec;
}

// Stationary sample state for reservoir density sigma: diagonal with weight
// sigma^{N} (1-sigma)^{d-N} per occupation pattern — the grand-canonical
// form exp(-mu N_s)/Z with mu = ln((1-sigma)/sigma). Boundary densities
// give the exact vacuum / fully-filled projectors.
inline Mat gibbs_limit(double sigma, int d) {
  if (d < 1) throw std::invalid_argument("gibbs_limit: need d >= 1");
  if (d > 12) throw resource_limit_error("gibbs_limit: more than 12 modes");
  detail::require_unit_interval(sigma, "gibbs_limit");
  const Eigen::Index dim = fock_dim(d);
  Mat out = Mat::Zero(dim, dim);
  for (std::uint32_t mask = 0; mask < std::uint32_t(dim); ++mask) {
    const int occupied = std::popcount(mask);
    out(mask, mask) = std::pow(sigma, occupied) * std::pow(1.0 - sigma, d - occupied);
  }
  return out;
}

}  // namespace fermiwalk
