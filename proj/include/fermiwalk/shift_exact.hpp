// Closed-form solutions for the shift sample: when the walk is the cyclic
// shift S_p and times are stroboscopic multiples of the sample size, the
// reduced densities are explicit finite sums of banded reservoir sections.
// These formulas are exact for arbitrary correlated reservoir symbols and
// serve as an independent check on the generic step recursions.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/fock.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/onebody.hpp"
#include "fermiwalk/twobody.hpp"
#include "fermiwalk/wedge.hpp"

#include <algorithm>
#include <cmath>

namespace fermiwalk {

// d x d section of the reservoir's two-point function offset by s sample
// lengths: entries sigma(k - j + s*d). The s-th band collects the
// correlations between reservoir stretches s periods apart.
struct SigmaBand {
  int d = 0;
  int s = 0;
  Mat matrix;
};

inline SigmaBand sigma_band(const ReservoirSymbol& symbol, int d, int s) {
  if (d < 1) throw std::invalid_argument("sigma_band: need d >= 1");
  SigmaBand band;
  band.d = d;
  band.s = s;
  band.matrix = Mat::Zero(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k) band.matrix(j, k) = symbol.coeff(k - j + s * d);
  return band;
}

// The cyclic shift on the sample, e_j -> e_{j-1} with wrap-around.
inline SampleUnitary shift_sample(int d) {
  if (d < 2) throw std::invalid_argument("shift_sample: need d >= 2");
  return SampleUnitary::from_matrix(cyclic_shift_matrix(d));
}

namespace detail {
// Largest band offset s for which sigma^{(s)} can be nonzero: beyond it
// every entry index |k - j + s*d| >= s*d - (d-1) exceeds the band.
inline int band_offset_cutoff(const ReservoirSymbol& symbol, int d) {
  return (symbol.band() + d - 1) / d;
}

// sum_{u=1}^{u_max} coeff(u) * (sigma^{(u)} + sigma^{(-u)}), skipping bands
// that are identically zero.
template <typename CoeffFn>
Mat accumulate_bands(const ReservoirSymbol& symbol, int d, int u_max, CoeffFn coeff) {
  Mat acc = Mat::Zero(d, d);
  const int cutoff = band_offset_cutoff(symbol, d);
  for (int u = 1; u <= std::min(u_max, cutoff); ++u) {
    const Mat band = sigma_band(symbol, d, u).matrix;
    acc += coeff(u) * (band + band.adjoint());
  }
  return acc;
}
}  // namespace detail

// One-body reduced density after m stroboscopic periods (t = m*d steps):
// rho_m = cos^{2m} rho_0 + (1 - cos^{2m}) sigma^{(0)}
//         + sum_{u=1}^{m-1} (cos^u - cos^{2m-u})(sigma^{(u)} + sigma^{(-u)}).
inline OneBodyDensity one_body_at(const ReservoirSymbol& symbol, const OneBodyDensity& rho1_0,
                                  double alpha, long m) {
  if (m < 0) throw std::invalid_argument("one_body_at: need m >= 0");
  const int d = rho1_0.d();
  const double c = std::cos(alpha);
  const double c2m = std::pow(c, 2.0 * double(m));
  Mat rho = c2m * rho1_0.matrix() + (1.0 - c2m) * sigma_band(symbol, d, 0).matrix;
  rho += detail::accumulate_bands(symbol, d, int(std::min<long>(m - 1, 1 << 30)),
                                  [&](int u) { return std::pow(c, u) - std::pow(c, 2.0 * double(m) - u); });
  return OneBodyDensity::from_matrix(hermitize(rho));
}

// Source matrix of the stroboscopic recursion
// rho_{m+1} = cos^2 rho_m + sin^2 B(m),  B(m) = sigma^{(0)} + sum_{u=1}^m cos^u (sigma^{(u)} + sigma^{(-u)}).
inline Mat b_of_m(const ReservoirSymbol& symbol, double alpha, int d, long m) {
  if (m < 0) throw std::invalid_argument("b_of_m: need m >= 0");
  const double c = std::cos(alpha);
  Mat b = sigma_band(symbol, d, 0).matrix;
  b += detail::accumulate_bands(symbol, d, int(std::min<long>(m, 1 << 30)),
                                [&](int u) { return std::pow(c, u); });
  return b;
}

// Limit of B(m) as m grows: the asymptotic one-body density. The series is
// finite for banded symbols; the geometric factor cuts it off first when
// |cos|^u times the largest coefficient drops below 1e-15.
inline OneBodyDensity one_body_limit(const ReservoirSymbol& symbol, double alpha, int d) {
  if (std::abs(std::sin(alpha)) < 1e-12)
    throw std::invalid_argument("one_body_limit: no convergence when cos(alpha) = +-1");
  const double c = std::cos(alpha);
  double max_coeff = 0.0;
  for (int k = 0; k <= symbol.band(); ++k) max_coeff = std::max(max_coeff, std::abs(symbol.coeff(k)));
  int u_max = detail::band_offset_cutoff(symbol, d);
  if (std::abs(c) < 1.0) {
    int u = 0;
    while (u < u_max && std::pow(std::abs(c), u + 1) * max_coeff >= 1e-15) ++u;
    u_max = u;
  }
  Mat rho = sigma_band(symbol, d, 0).matrix;
  rho += detail::accumulate_bands(symbol, d, u_max, [&](int u) { return std::pow(c, u); });
  return OneBodyDensity::from_matrix(hermitize(rho));
}

// Two-body reduced density after m periods. With F_m the one-body solution
// started from zero, the closed form is
// rho2_m = cos^{4m} rho2_0 + 2 cos^{2m} S(rho1_0, F_m) + S(F_m, F_m),
// where S is the antisymmetrized two-slot product on the wedge.
inline TwoBodyDensity two_body_at(const ReservoirSymbol& symbol, const OneBodyDensity& rho1_0,
                                  const TwoBodyDensity& rho2_0, double alpha, long m) {
  if (m < 0) throw std::invalid_argument("two_body_at: need m >= 0");
  const int d = rho1_0.d();
  if (rho2_0.d() != d) throw std::invalid_argument("two_body_at: dimension mismatch");
  const double c = std::cos(alpha);
  const double c2m = std::pow(c, 2.0 * double(m));
  const Mat f_m = one_body_at(symbol, OneBodyDensity::zero(d), alpha, m).matrix();
  Mat rho2 = c2m * c2m * rho2_0.matrix();
  rho2 += 2.0 * c2m * antisymmetric_sandwich(rho1_0.matrix(), f_m);
  rho2 += antisymmetric_sandwich(f_m, f_m);
  return TwoBodyDensity::from_matrix(d, hermitize(rho2));
}

// Asymptotic p-body density on the p-wedge: the compression of the p-fold
// tensor power of the one-body limit, i.e. its subset-determinant matrix.
inline Mat p_body_limit(const ReservoirSymbol& symbol, double alpha, int d, int p) {
  if (p < 1 || p > d) throw std::invalid_argument("p_body_limit: need 1 <= p <= d");
  return gamma_on_wedge(one_body_limit(symbol, alpha, d).matrix(), p);
}

// Stationary occupation density and pair correlations. The density profile
// is flat; correlations depend only on the separation:
// <n_j n_k> = density^2 - |rho_inf(j,k)|^2 for j != k, and n_j^2 = n_j.
struct AsymptoticProfile {
  double density = 0.0;
  RealMat correlations;        // <n_j n_k> in the stationary state
  double mean_density_ratio = 0.0;  // <N_s>/d, equals the density
};

inline AsymptoticProfile asymptotic_density_and_correlations(const ReservoirSymbol& symbol,
                                                             double alpha, int d) {
  const Mat rho = one_body_limit(symbol, alpha, d).matrix();
  AsymptoticProfile profile;
  profile.density = rho(0, 0).real();
  profile.mean_density_ratio = profile.density;
  profile.correlations = RealMat::Zero(d, d);
  for (int j = 0; j < d; ++j)
    for (int k = 0; k < d; ++k)
      profile.correlations(j, k) = (j == k)
                                       ? profile.density
                                       : profile.density * profile.density - std::norm(rho(j, k));
  return profile;
}

// Full 2^d x 2^d stationary state of the sample: the gauge-invariant
// quasifree state with the given one-body density. Diagonal with Bernoulli
// weights in the eigenmode occupation basis, rotated back by the second
// quantization of the eigenbasis; eigenvalues at 0 or 1 become exact
// empty/occupied factors.
inline Mat quasifree_full_state(const OneBodyDensity& rho1_inf) {
  const int d = rho1_inf.d();
  if (d > 12) throw resource_limit_error("quasifree_full_state: more than 12 modes");
  Eigen::SelfAdjointEigenSolver<Mat> solver(rho1_inf.matrix());
  if (solver.info() != Eigen::Success)
    throw numeric_error("quasifree_full_state: eigendecomposition failed");
  std::vector<double> lambda(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i)
    lambda[std::size_t(i)] = std::min(1.0, std::max(0.0, solver.eigenvalues()(i)));
  const Eigen::Index dim = fock_dim(d);
  Vec weights(dim);
  for (std::uint32_t m = 0; m < std::uint32_t(dim); ++m) {
    double w = 1.0;
    for (int i = 0; i < d; ++i)
      w *= (m & (std::uint32_t(1) << i)) ? lambda[std::size_t(i)] : 1.0 - lambda[std::size_t(i)];
    weights(m) = w;
  }
  const Mat rotation = second_quantize(solver.eigenvectors());
  return rotation * weights.asDiagonal() * rotation.adjoint();
}

}  // namespace fermiwalk
