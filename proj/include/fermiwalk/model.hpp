// Domain types for the physical setup: coupling parameters, reservoir
// symbols (uniform or banded Toeplitz), the sample unitary, and the
// effective matrices (M, B, N) that drive every reduced evolution.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fermiwalk {

// Derived constants of the sample-reservoir exchange coupling of strength
// alpha: cos(alpha) scales the surviving amplitude at the coupled site,
// g = i sin(alpha) the exchanged one, and f = cos(alpha) - 1 the rank-one
// correction entering K = 1 + f |e0><e0|.
struct CouplingParams {
  double alpha = 0.0;
  double cos_alpha = 1.0;
  cplx g_alpha = 0.0;   // i * sin(alpha)
  double f_alpha = 0.0; // cos(alpha) - 1

  static CouplingParams from_alpha(double alpha) {
    if (!std::isfinite(alpha)) throw std::invalid_argument("CouplingParams: alpha must be finite");
    CouplingParams c;
    c.alpha = alpha;
    c.cos_alpha = std::cos(alpha);
    c.g_alpha = cplx(0.0, std::sin(alpha));
    c.f_alpha = c.cos_alpha - 1.0;
    return c;
  }

  double sin2_alpha() const { return std::norm(g_alpha); }
};

// Translation-invariant reservoir state, described by its symbol sigma(k):
// the two-point function of modes k sites apart. Either uniform (sigma(k) =
// sigma * delta_{k,0}, an uncorrelated reservoir at filling sigma) or a
// banded Toeplitz symbol with sigma(-k) = conj(sigma(k)).
//
// A physically admissible symbol has values in [0,1]; the checked factory
// enforces this on a dense angular grid, while the unchecked factory admits
// structurally well-formed but possibly inadmissible symbols so they can be
// fed to the report-only validator.
class ReservoirSymbol {
 public:
  static ReservoirSymbol uniform(double sigma) {
    if (!(sigma > 0.0 && sigma <= 1.0))
      throw std::invalid_argument("ReservoirSymbol::uniform: need 0 < sigma <= 1");
    ReservoirSymbol s;
    s.uniform_ = true;
    s.coeffs_ = {cplx(sigma, 0.0)};
    return s;
  }

  // coeffs = {sigma(0), sigma(1), ..., sigma(band)}; negative offsets follow
  // by conjugate symmetry. Checks admissibility of the symbol function on a
  // 4096-point grid.
  static ReservoirSymbol banded(std::vector<cplx> coeffs) {
    ReservoirSymbol s = banded_unchecked(std::move(coeffs));
    const auto [lo, hi] = s.symbol_range();
    if (lo < -kSymbolGridTol || hi > 1.0 + kSymbolGridTol) {
      std::ostringstream msg;
      msg << "ReservoirSymbol::banded: symbol range [" << lo << ", " << hi
          << "] leaves the unit interval";
      throw precondition_error(msg.str());
    }
    return s;
  }

  // Structural checks only (sigma(0) real and positive); use for symbols that
  // will be screened by validate_symbol rather than trusted.
  static ReservoirSymbol banded_unchecked(std::vector<cplx> coeffs) {
    if (coeffs.empty())
      throw std::invalid_argument("ReservoirSymbol::banded: need at least sigma(0)");
    if (std::abs(coeffs[0].imag()) > 0.0)
      throw std::invalid_argument("ReservoirSymbol::banded: sigma(0) must be real");
    if (!(coeffs[0].real() > 0.0))
      throw std::invalid_argument("ReservoirSymbol::banded: sigma(0) must be positive");
    for (const cplx& c : coeffs)
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw std::invalid_argument("ReservoirSymbol::banded: coefficients must be finite");
    ReservoirSymbol s;
    s.uniform_ = false;
    s.coeffs_ = std::move(coeffs);
    return s;
  }

  bool is_uniform() const { return uniform_; }
  int band() const { return int(coeffs_.size()) - 1; }
  double density() const { return coeffs_[0].real(); } // sigma(0)

  // sigma(k) for any integer offset; conjugate-symmetric, zero beyond band.
  cplx coeff(int k) const {
    const int a = k < 0 ? -k : k;
    if (a >= int(coeffs_.size())) return 0.0;
    return k < 0 ? std::conj(coeffs_[std::size_t(a)]) : coeffs_[std::size_t(a)];
  }

  // Range of the symbol function sigma(0) + 2 sum_k Re(sigma(k) e^{ik theta})
  // over a uniform 4096-point theta grid.
  std::pair<double, double> symbol_range(int grid = 4096) const {
    double lo = coeffs_[0].real(), hi = lo;
    for (int g = 0; g < grid; ++g) {
      const double theta = 2.0 * std::numbers::pi * double(g) / double(grid);
      double v = coeffs_[0].real();
      for (int k = 1; k < int(coeffs_.size()); ++k)
        v += 2.0 * std::real(coeffs_[std::size_t(k)] * std::polar(1.0, double(k) * theta));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return {lo, hi};
  }

  static constexpr double kSymbolGridTol = 1e-12;

 private:
  ReservoirSymbol() = default;
  bool uniform_ = true;
  std::vector<cplx> coeffs_;
};

// R x R section of the reservoir two-point matrix, entry (j,k) = sigma(k-j).
// Hermitian by construction (entries mirrored, not re-derived). Throws if the
// section has eigenvalues outside [0,1] beyond tolerance, since such a matrix
// cannot be the two-point function of any fermionic state.
inline Mat toeplitz_section(const ReservoirSymbol& symbol, int r) {
  if (r < 1) throw std::invalid_argument("toeplitz_section: need R >= 1");
  if (r < symbol.band()) throw std::invalid_argument("toeplitz_section: need R >= band");
  Mat out = Mat::Zero(r, r);
  for (int j = 0; j < r; ++j) {
    out(j, j) = symbol.coeff(0);
    for (int k = j + 1; k < r; ++k) {
      const cplx v = symbol.coeff(k - j);
      out(j, k) = v;
      out(k, j) = std::conj(v);
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(out, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw numeric_error("toeplitz_section: eigenvalue computation failed");
  const double lo = solver.eigenvalues().minCoeff();
  const double hi = solver.eigenvalues().maxCoeff();
  if (lo < -kDensityEigTol || hi > 1.0 + kDensityEigTol) {
    std::ostringstream msg;
    msg << "toeplitz_section: invalid symbol, section eigenvalues in [" << lo << ", " << hi
        << "] leave the unit interval";
    throw precondition_error(msg.str());
  }
  return out;
}

// Report-only admissibility check of a symbol's R x R section: eigenvalue
// range and whether it stays inside [0,1]. Never throws on inadmissible
// symbols; callers decide what to do with the verdict.
struct SymbolValidation {
  std::vector<double> eigenvalues; // ascending
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool in_unit_interval = false;
};

inline SymbolValidation validate_symbol(const ReservoirSymbol& symbol, int r) {
  if (r < 1) throw std::invalid_argument("validate_symbol: need R >= 1");
  if (r < symbol.band()) throw std::invalid_argument("validate_symbol: need R >= band");
  // Same construction as toeplitz_section, minus the admissibility throw.
  Mat section = Mat::Zero(r, r);
  for (int j = 0; j < r; ++j) {
    section(j, j) = symbol.coeff(0);
    for (int k = j + 1; k < r; ++k) {
      const cplx v = symbol.coeff(k - j);
      section(j, k) = v;
      section(k, j) = std::conj(v);
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(section, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw numeric_error("validate_symbol: eigenvalue computation failed");
  SymbolValidation rep;
  rep.eigenvalues.assign(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + solver.eigenvalues().size());
  rep.min_eigenvalue = rep.eigenvalues.front();
  rep.max_eigenvalue = rep.eigenvalues.back();
  rep.in_unit_interval =
      rep.min_eigenvalue >= -kDensityEigTol && rep.max_eigenvalue <= 1.0 + kDensityEigTol;
  return rep;
}

// The sample's one-step unitary on its d-dimensional one-particle space.
// Site 0 of the canonical basis is the distinguished coupling site; walk
// builders are responsible for mapping their physical geometry onto this
// ordering.
class SampleUnitary {
 public:
  static SampleUnitary from_matrix(Mat w) {
    require_square(w, "SampleUnitary");
    require_finite(w, "SampleUnitary");
    const int d = int(w.rows());
    if (d < 2) throw std::invalid_argument("SampleUnitary: need d >= 2");
    const double defect = max_abs(w.adjoint() * w - Mat::Identity(d, d));
    if (defect > kUnitaryTol) {
      std::ostringstream msg;
      msg << "SampleUnitary: matrix is not unitary (defect " << defect << ")";
      throw std::invalid_argument(msg.str());
    }
    SampleUnitary s;
    s.w_ = std::move(w);
    return s;
  }

  int d() const { return int(w_.rows()); }
  const Mat& matrix() const { return w_; }
  Vec coupled_column() const { return w_.col(0); } // W e0

  static constexpr double kUnitaryTol = 1e-12;

 private:
  SampleUnitary() = default;
  Mat w_;
};

// Matrices of the reduced one- and two-body recursions for an uncorrelated
// reservoir at filling sigma:
//   M = W K with K = 1 + f_alpha |e0><e0|   (contraction part)
//   B = W E W* with E = sigma sin^2(alpha) |e0><e0|   (source part)
//   N = W (1 - |e0><e0|)   (feeds one-body data into the two-body source)
// They satisfy M M* + B / sigma = 1 exactly.
struct EffectiveMatrices {
  int d = 0;
  Mat M, B, N;
  Mat K_diag, E; // factors of M and B, kept for diagnostics and tests
  double sigma = 0.0;
  CouplingParams coupling;
};

inline EffectiveMatrices build_effective(const SampleUnitary& w, const CouplingParams& coupling,
                                         double sigma) {
  if (!(sigma > 0.0 && sigma <= 1.0))
    throw std::invalid_argument("build_effective: need 0 < sigma <= 1");
  const int d = w.d();
  EffectiveMatrices eff;
  eff.d = d;
  eff.sigma = sigma;
  eff.coupling = coupling;
  eff.K_diag = Mat::Identity(d, d);
  eff.K_diag(0, 0) = cplx(1.0 + coupling.f_alpha, 0.0); // = cos(alpha)
  eff.E = Mat::Zero(d, d);
  eff.E(0, 0) = cplx(sigma * coupling.sin2_alpha(), 0.0);
  eff.M = w.matrix() * eff.K_diag;
  const Vec v = w.coupled_column();
  eff.B = (sigma * coupling.sin2_alpha()) * (v * v.adjoint());
  Mat perp = Mat::Identity(d, d);
  perp(0, 0) = 0.0;
  eff.N = w.matrix() * perp;
  return eff;
}

// Convenience overload taking a reservoir symbol. The general-W recursion is
// only valid for an uncorrelated reservoir, so correlated (banded) symbols
// are rejected rather than silently approximated.
inline EffectiveMatrices build_effective(const SampleUnitary& w, const CouplingParams& coupling,
                                         const ReservoirSymbol& symbol) {
  if (!symbol.is_uniform() && symbol.band() > 0)
    throw precondition_error(
        "build_effective: correlated reservoir symbols are not supported for "
        "general sample unitaries; use the shift-sample closed forms instead");
  return build_effective(w, coupling, symbol.density());
}

}  // namespace fermiwalk
