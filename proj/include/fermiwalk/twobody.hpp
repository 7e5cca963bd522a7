// Two-body reduced density matrix dynamics on the two-particle wedge space:
// one step couples the current two-body state to the one-body state at the
// same time,
//   rho2 -> G rho2 G* + 2 * sandwich(B, N rho1 N*),   G = gamma_on_wedge(M, 2),
// with closed form, joint traces, the fixed point sigma^2 * identity, and
// the exact operator identity behind it.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/onebody.hpp"
#include "fermiwalk/spectral.hpp"
#include "fermiwalk/wedge.hpp"

namespace fermiwalk {

// Two-body reduced density matrix in the lexicographic wedge basis:
// Hermitian, positive semidefinite, operator norm at most 1.
class TwoBodyDensity {
 public:
  static TwoBodyDensity from_matrix(int d, const Mat& rho2) {
    WedgeBasis basis(d);
    require_square(rho2, "TwoBodyDensity");
    require_finite(rho2, "TwoBodyDensity");
    if (rho2.rows() != basis.dimension())
      throw std::invalid_argument("TwoBodyDensity: matrix does not match wedge dimension");
    const double drift = hermiticity_drift(rho2);
    if (drift > kHermTol) {
      std::ostringstream msg;
      msg << "TwoBodyDensity: matrix is not Hermitian (drift " << drift << ")";
      throw numeric_error(msg.str());
    }
    TwoBodyDensity out;
    out.d_ = d;
    out.rho2_ = hermitize(rho2);
    Eigen::SelfAdjointEigenSolver<Mat> solver(out.rho2_, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
      throw numeric_error("TwoBodyDensity: eigenvalue check failed to converge");
    const double lo = solver.eigenvalues().minCoeff();
    const double hi = solver.eigenvalues().maxCoeff();
    if (lo < -kDensityEigTol || hi > 1.0 + kDensityEigTol) {
      std::ostringstream msg;
      msg << "TwoBodyDensity: eigenvalues in [" << lo << ", " << hi
          << "] leave the admissible interval [0, 1]";
      throw numeric_error(msg.str());
    }
    return out;
  }

  static TwoBodyDensity zero(int d) {
    const int dim = WedgeBasis(d).dimension();
    return from_matrix(d, Mat::Zero(dim, dim));
  }

  int d() const { return d_; }
  int dimension() const { return int(rho2_.rows()); }
  const Mat& matrix() const { return rho2_; }

 private:
  TwoBodyDensity() = default;
  int d_ = 0;
  Mat rho2_;
};

// One two-body step, given the one-body state at the SAME time.
inline TwoBodyDensity step2(const TwoBodyDensity& rho2, const OneBodyDensity& rho1,
                            const EffectiveMatrices& eff) {
  if (rho2.d() != eff.d || rho1.d() != eff.d)
    throw std::invalid_argument("step2: dimension mismatch");
  const Mat g = gamma_on_wedge(eff.M, 2);
  const Mat source =
      2.0 * antisymmetric_sandwich(eff.B, eff.N * rho1.matrix() * eff.N.adjoint());
  const Mat raw = g * rho2.matrix() * g.adjoint() + source;
  const double drift = hermiticity_drift(raw);
  if (drift > kHermTol) {
    std::ostringstream msg;
    msg << "step2: hermiticity drift " << drift << " exceeds tolerance";
    throw numeric_error(msg.str());
  }
  return TwoBodyDensity::from_matrix(rho2.d(), raw);
}

// Closed form of the t-fold two-body map: the free part conjugated by G^t
// plus the history sum over one-body states,
//   rho2_t = G^t rho2_0 G*^t
//          + 2 sum_{r=0}^{t-1} G^r sandwich(B, N rho1_{t-1-r} N*) G*^r.
// Independent evaluation path used to cross-check the iteration.
inline TwoBodyDensity two_body_closed_form(const OneBodyDensity& rho1_0,
                                           const TwoBodyDensity& rho2_0,
                                           const EffectiveMatrices& eff, long t) {
  if (rho2_0.d() != eff.d || rho1_0.d() != eff.d)
    throw std::invalid_argument("two_body_closed_form: dimension mismatch");
  if (t < 0) throw std::invalid_argument("two_body_closed_form: need t >= 0");
  const Mat g = gamma_on_wedge(eff.M, 2);
  // One-body history rho1_0 .. rho1_{t-1}.
  std::vector<Mat> history;
  history.reserve(std::size_t(t));
  OneBodyDensity rho1 = rho1_0;
  for (long s = 0; s < t; ++s) {
    history.push_back(rho1.matrix());
    rho1 = step(rho1, eff);
  }
  const int dim = rho2_0.dimension();
  Mat power = Mat::Identity(dim, dim); // G^r
  Mat acc = Mat::Zero(dim, dim);
  for (long r = 0; r < t; ++r) {
    const Mat src = 2.0 * antisymmetric_sandwich(
                              eff.B, eff.N * history[std::size_t(t - 1 - r)] * eff.N.adjoint());
    acc += power * src * power.adjoint();
    power = g * power;
  }
  const Mat value = power * rho2_0.matrix() * power.adjoint() + acc;
  return TwoBodyDensity::from_matrix(rho2_0.d(), hermitize(value));
}

struct TwoBodyTrace {
  std::vector<long> times;
  std::vector<TwoBodyDensity> snapshots;
  std::vector<double> distances_to_limit; // operator norm of rho2_t - sigma^2 * 1
};

struct PairEvolution {
  EvolutionTrace one_body;
  TwoBodyTrace two_body;
};

// Advances (rho1, rho2) jointly (the two-body source needs the one-body
// state of the same step), recording every record_every steps plus the
// endpoint. Carrying rho1 alongside avoids storing its full history.
inline PairEvolution evolve_pair(const OneBodyDensity& rho1_0, const TwoBodyDensity& rho2_0,
                                 const EffectiveMatrices& eff, long t, long record_every = 1) {
  if (t < 0) throw std::invalid_argument("evolve_pair: need t >= 0");
  if (record_every < 1) throw std::invalid_argument("evolve_pair: need record_every >= 1");
  if (rho2_0.d() != eff.d || rho1_0.d() != eff.d)
    throw std::invalid_argument("evolve_pair: dimension mismatch");
  const Mat g = gamma_on_wedge(eff.M, 2);
  const int dim = rho2_0.dimension();
  const Mat limit1 = eff.sigma * Mat::Identity(eff.d, eff.d);
  const Mat limit2 = eff.sigma * eff.sigma * Mat::Identity(dim, dim);
  PairEvolution out;
  OneBodyDensity rho1 = rho1_0;
  TwoBodyDensity rho2 = rho2_0;
  auto record = [&](long time) {
    out.one_body.times.push_back(time);
    out.one_body.snapshots.push_back(rho1);
    out.one_body.distances_to_limit.push_back(op_norm(rho1.matrix() - limit1));
    out.two_body.times.push_back(time);
    out.two_body.snapshots.push_back(rho2);
    out.two_body.distances_to_limit.push_back(op_norm(rho2.matrix() - limit2));
  };
  record(0);
  for (long s = 1; s <= t; ++s) {
    const Mat source =
        2.0 * antisymmetric_sandwich(eff.B, eff.N * rho1.matrix() * eff.N.adjoint());
    const Mat raw2 = g * rho2.matrix() * g.adjoint() + source;
    rho2 = TwoBodyDensity::from_matrix(eff.d, raw2);
    rho1 = step(rho1, eff);
    if (s % record_every == 0 || s == t) record(s);
  }
  return out;
}

// Unique solution of X = G X G* + 2 sigma sandwich(B, N N*). Solved by a
// flattened linear system for d <= 10; larger dimensions fall back to
// iterating the contraction to numerical convergence (the flattened system
// would need (d(d-1)/2)^2-sized dense storage).
inline TwoBodyDensity fixed_point2(const EffectiveMatrices& eff) {
  const SpectralReport rep = spectral_report(eff.M);
  if (!rep.condition_ok) {
    std::ostringstream msg;
    msg << "fixed_point2: spectrum of M touches the unit circle; offending eigenvalues:";
    for (const cplx& ev : rep.eigenvalues)
      if (std::abs(ev) >= 1.0 - kUnitCircleTol) msg << " " << detail::format_complex(ev);
    throw precondition_error(msg.str());
  }
  const Mat g = gamma_on_wedge(eff.M, 2);
  const Mat source = 2.0 * eff.sigma * antisymmetric_sandwich(eff.B, eff.N * eff.N.adjoint());
  const int dim = int(g.rows());
  if (eff.d <= 10) {
    const Eigen::Index sq = Eigen::Index(dim) * dim;
    Mat system = Mat::Identity(sq, sq) - kron(g.conjugate(), g);
    Vec rhs = Eigen::Map<const Vec>(source.data(), sq);
    Vec solution = system.partialPivLu().solve(rhs);
    Mat x = Eigen::Map<const Mat>(solution.data(), dim, dim);
    return TwoBodyDensity::from_matrix(eff.d, hermitize(x));
  }
  // Iterative fallback: X_{n+1} = G X_n G* + source contracts at rate
  // spectral_radius(G)^2 < 1.
  Mat x = Mat::Zero(dim, dim);
  const long max_iter = 1000000;
  for (long it = 0; it < max_iter; ++it) {
    Mat next = g * x * g.adjoint() + source;
    const double delta = max_abs(next - x);
    x.swap(next);
    if (delta < 1e-15) return TwoBodyDensity::from_matrix(eff.d, hermitize(x));
  }
  throw numeric_error("fixed_point2: iteration did not converge");
}

// Operator-norm residual of the exact identity
//   1 = G G* + (2 / sigma) sandwich(B, N N*)
// on the wedge space. Zero (to rounding) for every valid set of effective
// matrices; grows linearly with any corruption of B.
inline double check_identity_2body(const EffectiveMatrices& eff) {
  if (!(eff.sigma > 0.0)) throw std::invalid_argument("check_identity_2body: need sigma > 0");
  const Mat g = gamma_on_wedge(eff.M, 2);
  const int dim = int(g.rows());
  const Mat residual = Mat::Identity(dim, dim) - g * g.adjoint() -
                       (2.0 / eff.sigma) * antisymmetric_sandwich(eff.B, eff.N * eff.N.adjoint());
  return op_norm(residual);
}

}  // namespace fermiwalk
