// Eigenvalue diagnostics for the one-body evolution matrix: spectrum,
// spectral radius, distance of the spectrum from the unit circle, and a
// convergence certificate (the iteration contracts iff the radius is
// strictly below one).
#pragma once

#include "fermiwalk/common.hpp"

#include <algorithm>
#include <cmath>

namespace fermiwalk {

struct SpectralReport {
  std::vector<cplx> eigenvalues;  // sorted by decreasing modulus, then by argument
  double spectral_radius = 0.0;
  double gap_to_unit_circle = 0.0;  // 1 - spectral_radius (may be negative)
  bool condition_ok = false;        // radius < 1 within tolerance
};

inline SpectralReport spectral_report(const Mat& m, double tol = kUnitCircleTol) {
  require_square(m, "spectral_report");
  require_finite(m, "spectral_report");
  SpectralReport rep;
  if (m.rows() == 0) {
    rep.condition_ok = true;
    rep.gap_to_unit_circle = 1.0;
    return rep;
  }
  Eigen::ComplexEigenSolver<Mat> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw numeric_error("spectral_report: eigenvalue iteration failed to converge");
  const Vec& ev = solver.eigenvalues();
  rep.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](cplx a, cplx b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    return std::arg(a) < std::arg(b);
  });
  rep.spectral_radius = std::abs(rep.eigenvalues.front());
  rep.gap_to_unit_circle = 1.0 - rep.spectral_radius;
  rep.condition_ok = rep.spectral_radius < 1.0 - tol;
  return rep;
}

}  // namespace fermiwalk
