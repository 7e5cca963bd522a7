// One-body reduced density matrix dynamics for an arbitrary sample unitary
// coupled to an uncorrelated reservoir: the one-step affine map
// rho -> M rho M* + B, its closed form, trace recording, the fixed point via
// a flattened linear solve, and the stagnant-walk (W = 1) limit.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/spectral.hpp"

#include <cmath>

namespace fermiwalk {

// One-body reduced density matrix: Hermitian with spectrum in [0,1]
// (expectation values of a*_k a_j in some fermionic state). Both properties
// are enforced at construction; evolution code funnels every snapshot
// through here, so a positivity violation anywhere surfaces immediately.
class OneBodyDensity {
 public:
  static OneBodyDensity from_matrix(const Mat& rho) {
    require_square(rho, "OneBodyDensity");
    require_finite(rho, "OneBodyDensity");
    const double drift = hermiticity_drift(rho);
    if (drift > kHermTol) {
      std::ostringstream msg;
      msg << "OneBodyDensity: matrix is not Hermitian (drift " << drift << ")";
      throw numeric_error(msg.str());
    }
    OneBodyDensity out;
    out.rho_ = hermitize(rho);
    Eigen::SelfAdjointEigenSolver<Mat> solver(out.rho_, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
      throw numeric_error("OneBodyDensity: eigenvalue check failed to converge");
    const double lo = solver.eigenvalues().minCoeff();
    const double hi = solver.eigenvalues().maxCoeff();
    if (lo < -kDensityEigTol || hi > 1.0 + kDensityEigTol) {
      std::ostringstream msg;
      msg << "OneBodyDensity: eigenvalues in [" << lo << ", " << hi
          << "] leave the admissible interval [0, 1]";
      throw numeric_error(msg.str());
    }
    return out;
  }

  static OneBodyDensity zero(int d) { return from_matrix(Mat::Zero(d, d)); }
  static OneBodyDensity scaled_identity(int d, double s) {
    return from_matrix(s * Mat::Identity(d, d));
  }

  int d() const { return int(rho_.rows()); }
  const Mat& matrix() const { return rho_; }

 private:
  OneBodyDensity() = default;
  Mat rho_;
};

// One step of the reduced dynamics: rho -> M rho M* + B. Hermiticity drift
// of the raw product is asserted tiny before re-symmetrizing, so the hygiene
// step can never mask a genuinely non-Hermitian update.
inline OneBodyDensity step(const OneBodyDensity& rho, const EffectiveMatrices& eff) {
  if (rho.d() != eff.d) throw std::invalid_argument("step: dimension mismatch");
  const Mat raw = eff.M * rho.matrix() * eff.M.adjoint() + eff.B;
  const double drift = hermiticity_drift(raw);
  if (drift > kHermTol) {
    std::ostringstream msg;
    msg << "step: hermiticity drift " << drift << " exceeds tolerance";
    throw numeric_error(msg.str());
  }
  return OneBodyDensity::from_matrix(raw);
}

// Closed form of the t-fold map: M^t rho M*^t + sum_{r<t} M^r B M*^r.
// Kept as an independent evaluation path; tests require it to agree with
// iterated step to 1e-12.
inline OneBodyDensity one_body_closed_form(const OneBodyDensity& rho0,
                                           const EffectiveMatrices& eff, long t) {
  if (rho0.d() != eff.d) throw std::invalid_argument("one_body_closed_form: dimension mismatch");
  if (t < 0) throw std::invalid_argument("one_body_closed_form: need t >= 0");
  const int d = eff.d;
  Mat power = Mat::Identity(d, d); // M^r
  Mat source = Mat::Zero(d, d);    // sum of M^r B M*^r
  for (long r = 0; r < t; ++r) {
    source += power * eff.B * power.adjoint();
    power = eff.M * power;
  }
  const Mat value = power * rho0.matrix() * power.adjoint() + source;
  return OneBodyDensity::from_matrix(hermitize(value));
}

// Recorded evolution: step indices, snapshots, and the operator-norm
// distance of each snapshot to the flat limit sigma * identity.
struct EvolutionTrace {
  std::vector<long> times;
  std::vector<OneBodyDensity> snapshots;
  std::vector<double> distances_to_limit;
};

// Iterates the one-step map for t steps, recording every record_every steps
// (always including step 0 and the final step).
inline EvolutionTrace evolve(const OneBodyDensity& rho0, const EffectiveMatrices& eff, long t,
                             long record_every = 1) {
  if (t < 0) throw std::invalid_argument("evolve: need t >= 0");
  if (record_every < 1) throw std::invalid_argument("evolve: need record_every >= 1");
  const Mat limit = eff.sigma * Mat::Identity(eff.d, eff.d);
  EvolutionTrace trace;
  OneBodyDensity current = rho0;
  auto record = [&](long time) {
    trace.times.push_back(time);
    trace.snapshots.push_back(current);
    trace.distances_to_limit.push_back(op_norm(current.matrix() - limit));
  };
  record(0);
  for (long s = 1; s <= t; ++s) {
    current = step(current, eff);
    if (s % record_every == 0 || s == t) record(s);
  }
  return trace;
}

// Unique solution of X = M X M* + B, obtained by flattening to a d^2 x d^2
// linear system: vec(M X M*) = (conj(M) (x) M) vec(X) in column-major
// layout. Requires the spectrum of M to stay off the unit circle, otherwise
// the flattened system is singular; offending eigenvalues are reported.
inline OneBodyDensity fixed_point(const EffectiveMatrices& eff) {
  const SpectralReport rep = spectral_report(eff.M);
  if (!rep.condition_ok) {
    std::ostringstream msg;
    msg << "fixed_point: spectrum of M touches the unit circle; offending eigenvalues:";
    for (const cplx& ev : rep.eigenvalues)
      if (std::abs(ev) >= 1.0 - kUnitCircleTol) msg << " " << detail::format_complex(ev);
    throw precondition_error(msg.str());
  }
  const int d = eff.d;
  const Eigen::Index dd = Eigen::Index(d) * d;
  Mat system = Mat::Identity(dd, dd) - kron(eff.M.conjugate(), eff.M);
  Vec rhs = Eigen::Map<const Vec>(eff.B.data(), dd);
  Vec solution = system.partialPivLu().solve(rhs);
  Mat x = Eigen::Map<const Mat>(solution.data(), d, d);
  return OneBodyDensity::from_matrix(hermitize(x));
}

// Analytic limit of the dynamics when the sample unitary is the identity
// (nothing transports amplitude away from the coupled site): the reservoir
// thermalizes site 0 to filling sigma and leaves the rest of the initial
// state untouched, limit = sigma |e0><e0| + P_perp rho0 P_perp.
//
// Also runs the iteration for t steps as a demonstration; the distance of
// the final iterate to the analytic limit is written to *final_distance when
// provided. Returns the analytic limit.
inline OneBodyDensity stagnant_limit_demo(const OneBodyDensity& rho0, double alpha, double sigma,
                                          long t, double* final_distance = nullptr) {
  const int d = rho0.d();
  if (std::abs(std::sin(alpha)) < 1e-12)
    throw std::invalid_argument(
        "stagnant_limit_demo: alpha in {0, pi} exchanges nothing; no thermalization occurs");
  if (!(sigma > 0.0 && sigma <= 1.0))
    throw std::invalid_argument("stagnant_limit_demo: need 0 < sigma <= 1");
  Mat limit = rho0.matrix();
  limit.row(0).setZero();
  limit.col(0).setZero();
  limit(0, 0) = sigma;
  if (final_distance != nullptr) {
    const SampleUnitary w = SampleUnitary::from_matrix(Mat::Identity(d, d));
    const EffectiveMatrices eff = build_effective(w, CouplingParams::from_alpha(alpha), sigma);
    OneBodyDensity current = rho0;
    for (long s = 0; s < t; ++s) current = step(current, eff);
    *final_distance = op_norm(current.matrix() - limit);
  }
  return OneBodyDensity::from_matrix(limit);
}

}  // namespace fermiwalk
