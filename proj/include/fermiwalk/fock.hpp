// Exact many-body simulation of the coupled reservoir-sample system on a
// truncated Fock space. This module is the ground truth the reduced
// formulas are validated against, so it is built from first principles
// only: canonical anticommutation relations within each species, plain
// Kronecker products across the species boundary (the two algebras
// commute), second quantization via subset determinants, and the coupling
// in its closed form.
//
// Occupation-basis convention: bit j of a basis index is the occupation of
// mode j; the state for an occupied set {j1 < j2 < ...} is
// c*_{j1} c*_{j2} ... |vac>, which carries no extra sign in this encoding.
// Annihilators pick up the parity of the modes below the one they act on.
//
// Reservoir truncation: R modes with a cyclic shift. A mode that has
// interacted wraps to the far end of the chain and needs R more steps to
// come back, so the truncated dynamics is exact for t <= R-1 (uniform
// reservoir) and t <= R-1-band (correlated reservoir, whose dropped
// correlations to modes beyond the section must stay out of reach).
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/wedge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <utility>

namespace fermiwalk {

inline Eigen::Index fock_dim(int modes) {
  if (modes < 0 || modes > 24) throw std::invalid_argument("fock_dim: mode count out of range");
  return Eigen::Index(1) << modes;
}

namespace detail {
// Parity of the occupied modes strictly below j: the anticommutation sign
// picked up when a ladder operator for mode j crosses them.
inline double jw_sign(std::uint32_t mask, int j) {
  const std::uint32_t below = mask & ((std::uint32_t(1) << j) - 1);
  return (std::popcount(below) & 1) ? -1.0 : 1.0;
}
}  // namespace detail

// Annihilator for mode j among n modes of one species.
inline Mat fock_annihilator(int n, int j) {
  if (j < 0 || j >= n) throw std::invalid_argument("fock_annihilator: mode out of range");
  const Eigen::Index dim = fock_dim(n);
  Mat out = Mat::Zero(dim, dim);
  const std::uint32_t bit = std::uint32_t(1) << j;
  for (std::uint32_t m = 0; m < std::uint32_t(dim); ++m)
    if (m & bit) out(m ^ bit, m) = detail::jw_sign(m, j);
  return out;
}

// Occupation-number operator for mode j (diagonal projector).
inline Mat fock_number(int n, int j) {
  if (j < 0 || j >= n) throw std::invalid_argument("fock_number: mode out of range");
  const Eigen::Index dim = fock_dim(n);
  Mat out = Mat::Zero(dim, dim);
  const std::uint32_t bit = std::uint32_t(1) << j;
  for (std::uint32_t m = 0; m < std::uint32_t(dim); ++m)
    if (m & bit) out(m, m) = 1.0;
  return out;
}

inline Mat fock_total_number(int n) {
  const Eigen::Index dim = fock_dim(n);
  Mat out = Mat::Zero(dim, dim);
  for (std::uint32_t m = 0; m < std::uint32_t(dim); ++m) out(m, m) = double(std::popcount(m));
  return out;
}

// Second quantization Gamma(V) of a one-particle operator V on n modes:
// matrix elements between equal-particle-number occupation states are the
// determinants of the corresponding submatrices of V.
inline Mat second_quantize(const Mat& v) {
  require_square(v, "second_quantize");
  const int n = int(v.rows());
  const Eigen::Index dim = fock_dim(n);
  // Occupied-mode lists per basis index, grouped by particle number.
  std::vector<std::vector<std::uint32_t>> by_count(std::size_t(n) + 1);
  for (std::uint32_t m = 0; m < std::uint32_t(dim); ++m)
    by_count[std::size_t(std::popcount(m))].push_back(m);
  auto bits_of = [n](std::uint32_t m) {
    std::vector<int> bits;
    for (int j = 0; j < n; ++j)
      if (m & (std::uint32_t(1) << j)) bits.push_back(j);
    return bits;
  };
  Mat out = Mat::Zero(dim, dim);
  out(0, 0) = 1.0;
  for (int p = 1; p <= n; ++p) {
    const auto& sector = by_count[std::size_t(p)];
    std::vector<std::vector<int>> sector_bits;
    sector_bits.reserve(sector.size());
    for (std::uint32_t m : sector) sector_bits.push_back(bits_of(m));
    Mat sub(p, p);
    for (std::size_t r = 0; r < sector.size(); ++r) {
      for (std::size_t c = 0; c < sector.size(); ++c) {
        for (int i = 0; i < p; ++i)
          for (int k = 0; k < p; ++k) sub(i, k) = v(sector_bits[r][std::size_t(i)],
                                                    sector_bits[c][std::size_t(k)]);
        out(sector[r], sector[c]) = sub.determinant();
      }
    }
  }
  return out;
}

// Cyclic one-site shift on n modes, e_j -> e_{j-1} (mode j moves toward the
// interaction site at 0; the mode leaving site 0 wraps to the far end).
inline Mat cyclic_shift_matrix(int n) {
  Mat s = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) s((j - 1 + n) % n, j) = 1.0;
  return s;
}

// Pair of species-local operator families on the truncated joint space
// F(reservoir, R modes) (x) F(sample, d modes). Joint operators are formed
// with plain Kronecker products; dense joint matrices are only permitted on
// small spaces (they are a test/diagnostic device, not the simulation path).
class FockRep {
 public:
  FockRep(int reservoir_modes, int sample_modes)
      : R_(reservoir_modes), d_(sample_modes) {
    if (R_ < 1 || d_ < 1) throw std::invalid_argument("FockRep: need at least one mode each");
    if (R_ > 12 || d_ > 12) throw resource_limit_error("FockRep: species too large");
  }

  int reservoir_modes() const { return R_; }
  int sample_modes() const { return d_; }
  Eigen::Index dim_reservoir() const { return fock_dim(R_); }
  Eigen::Index dim_sample() const { return fock_dim(d_); }
  Eigen::Index dim_joint() const { return dim_reservoir() * dim_sample(); }

  Mat b(int j) const { return fock_annihilator(R_, j); }
  Mat a(int j) const { return fock_annihilator(d_, j); }
  Mat nr(int j) const { return fock_number(R_, j); }
  Mat ns(int j) const { return fock_number(d_, j); }

  // kron(A_reservoir, B_sample) with a size guard for the dense joint space.
  Mat joint(const Mat& a_r, const Mat& b_s) const {
    require_joint_budget();
    return kron(a_r, b_s);
  }
  Mat lift_reservoir(const Mat& a_r) const { return joint(a_r, Mat::Identity(dim_sample(), dim_sample())); }
  Mat lift_sample(const Mat& b_s) const { return joint(Mat::Identity(dim_reservoir(), dim_reservoir()), b_s); }
  Mat joint_number() const {
    require_joint_budget();
    return kron(fock_total_number(R_), Mat::Identity(dim_sample(), dim_sample())) +
           kron(Mat::Identity(dim_reservoir(), dim_reservoir()), fock_total_number(d_));
  }

  void require_joint_budget() const {
    if (R_ + d_ > 11)
      throw resource_limit_error("FockRep: dense joint operators limited to 2^11 dimensions");
  }

 private:
  int R_;
  int d_;
};

// Exchange coupling between reservoir mode jr and sample mode js, in closed
// form: K = 1 + g X + f P with X = b*(x)a + b(x)a*, g = i sin(alpha),
// f = cos(alpha) - 1, and P the projector onto the one-sided-occupation
// subspace where the exchange acts. Equals the exponential exp(i alpha X).
inline Mat build_coupling(const FockRep& rep, double alpha, int reservoir_site, int sample_site) {
  if (reservoir_site < 0 || reservoir_site >= rep.reservoir_modes())
    throw std::invalid_argument("build_coupling: reservoir site out of range");
  if (sample_site < 0 || sample_site >= rep.sample_modes())
    throw std::invalid_argument("build_coupling: sample site out of range");
  const CouplingParams c = CouplingParams::from_alpha(alpha);
  const Mat b = rep.b(reservoir_site);
  const Mat a = rep.a(sample_site);
  const Mat nr = rep.nr(reservoir_site);
  const Mat ns = rep.ns(sample_site);
  const Mat ir = Mat::Identity(rep.dim_reservoir(), rep.dim_reservoir());
  const Mat is = Mat::Identity(rep.dim_sample(), rep.dim_sample());
  Mat k = rep.joint(ir, is);
  k += c.g_alpha * (rep.joint(b.adjoint(), a) + rep.joint(b, a.adjoint()));
  k += c.f_alpha * (rep.joint(nr, is - ns) + rep.joint(ir - nr, ns));
  return k;
}

// Full one-step unitary U = (Gamma(S_cyc) (x) Gamma(W)) K0 on the truncated
// joint space: couple at site 0, then move both chains one site. Dense;
// for tests and identity checks on small spaces.
inline Mat build_step(const FockRep& rep, const SampleUnitary& w, double alpha) {
  if (rep.reservoir_modes() < 2) throw std::invalid_argument("build_step: need R >= 2");
  if (w.d() != rep.sample_modes())
    throw std::invalid_argument("build_step: sample dimension mismatch");
  const Mat gamma_r = second_quantize(cyclic_shift_matrix(rep.reservoir_modes()));
  const Mat gamma_w = second_quantize(w.matrix());
  return rep.joint(gamma_r, gamma_w) * build_coupling(rep, alpha, 0, 0);
}

// Mixture of pure occupation-pattern states representing a quasifree state
// with a prescribed two-point function on one species.
struct ReservoirEnsemble {
  std::vector<double> weights;
  std::vector<Vec> states; // vectors on the 2^n species Fock space
};

namespace detail {
// psi' = c*(v) psi for a mode-coefficient vector v: the rotated-mode creator
// sum_j v_j c*_j with anticommutation signs.
inline Vec apply_creator(const Vec& v, const Vec& psi) {
  const int n = int(v.size());
  Vec out = Vec::Zero(psi.size());
  for (int j = 0; j < n; ++j) {
    if (v(j) == cplx(0.0, 0.0)) continue;
    const std::uint32_t bit = std::uint32_t(1) << j;
    for (std::uint32_t m = 0; m < std::uint32_t(psi.size()); ++m) {
      if (m & bit) continue;
      if (psi(m) == cplx(0.0, 0.0)) continue;
      out(m | bit) += jw_sign(m, j) * v(j) * psi(m);
    }
  }
  return out;
}
}  // namespace detail

// Decomposes the quasifree state with two-point matrix g (Hermitian,
// 0 <= g <= 1) into a mixture over eigenmode occupation patterns: weight
// prod lambda_i (occupied) * prod (1 - lambda_i) (empty), pure states are
// Slater determinants of the rotated modes. Eigenvalues at 0 or 1
// contribute deterministic factors, so boundary cases cost nothing.
inline ReservoirEnsemble ensemble_from_two_point(const Mat& g) {
  require_square(g, "ensemble_from_two_point");
  const int n = int(g.rows());
  if (n > 12) throw resource_limit_error("ensemble_from_two_point: more than 12 modes");
  if (hermiticity_drift(g) > kHermTol)
    throw std::invalid_argument("ensemble_from_two_point: two-point matrix must be Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> solver(g);
  if (solver.info() != Eigen::Success)
    throw numeric_error("ensemble_from_two_point: eigendecomposition failed");
  std::vector<double> lambda(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double raw = solver.eigenvalues()(i);
    if (raw < -kDensityEigTol || raw > 1.0 + kDensityEigTol)
      throw std::invalid_argument("ensemble_from_two_point: eigenvalue outside [0, 1]");
    lambda[std::size_t(i)] = std::min(1.0, std::max(0.0, raw));
  }
  const Mat& modes = solver.eigenvectors();
  const Eigen::Index dim = fock_dim(n);
  ReservoirEnsemble ens;
  for (std::uint32_t pattern = 0; pattern < std::uint32_t(1) << n; ++pattern) {
    double weight = 1.0;
    for (int i = 0; i < n; ++i)
      weight *= (pattern & (std::uint32_t(1) << i)) ? lambda[std::size_t(i)]
                                                    : 1.0 - lambda[std::size_t(i)];
    if (weight == 0.0) continue;
    Vec psi = Vec::Zero(dim);
    psi(0) = 1.0;
    for (int i = 0; i < n; ++i)
      if (pattern & (std::uint32_t(1) << i)) psi = detail::apply_creator(modes.col(i), psi);
    ens.weights.push_back(weight);
    ens.states.push_back(std::move(psi));
  }
  return ens;
}

inline ReservoirEnsemble reservoir_ensemble(const ReservoirSymbol& symbol, int r) {
  if (r > 12) throw resource_limit_error("reservoir_ensemble: more than 12 reservoir modes");
  return ensemble_from_two_point(toeplitz_section(symbol, r));
}

// Initial sample state as a mixture of pure Fock-space vectors.
struct SampleState {
  std::vector<double> weights;
  std::vector<Vec> states; // vectors on 2^d

  static SampleState vacuum(int d) {
    SampleState s;
    Vec psi = Vec::Zero(fock_dim(d));
    psi(0) = 1.0;
    s.weights.push_back(1.0);
    s.states.push_back(std::move(psi));
    return s;
  }

  static SampleState pure(Vec psi) {
    const double norm = psi.norm();
    if (std::abs(norm - 1.0) > 1e-12)
      throw std::invalid_argument("SampleState::pure: vector must be normalized");
    SampleState s;
    s.weights.push_back(1.0);
    s.states.push_back(std::move(psi));
    return s;
  }

  // Spectral decomposition of a full density matrix; eigenvalues below the
  // cutoff are dropped and the weights renormalized.
  static SampleState from_density(const Mat& rho, double cutoff = 1e-14) {
    require_square(rho, "SampleState::from_density");
    if (hermiticity_drift(rho) > kHermTol)
      throw std::invalid_argument("SampleState::from_density: density must be Hermitian");
    if (std::abs(rho.trace().real() - 1.0) > 1e-12 || std::abs(rho.trace().imag()) > 1e-12)
      throw std::invalid_argument("SampleState::from_density: density must have trace 1");
    Eigen::SelfAdjointEigenSolver<Mat> solver(hermitize(rho));
    if (solver.info() != Eigen::Success)
      throw numeric_error("SampleState::from_density: eigendecomposition failed");
    SampleState s;
    double total = 0.0;
    for (int i = 0; i < solver.eigenvalues().size(); ++i) {
      const double w = solver.eigenvalues()(i);
      if (w < -kDensityEigTol)
        throw std::invalid_argument("SampleState::from_density: density not positive");
      if (w <= cutoff) continue;
      s.weights.push_back(w);
      s.states.push_back(solver.eigenvectors().col(i));
      total += w;
    }
    for (double& w : s.weights) w /= total;
    return s;
  }
};

// Everything simulate produces, indexed by time 0..t.
struct OracleRecord {
  int d = 0;
  int reservoir_modes = 0;
  std::vector<long> times;
  std::vector<Mat> rho1;                      // d x d
  std::vector<Mat> rho2;                      // wedge basis, d(d-1)/2 square
  std::vector<Eigen::VectorXd> number_pmf;    // d+1 entries
  std::vector<double> flux;                   // expectation of the flux observable
  std::vector<double> odd_correlator;         // max cross-parity element of the reduced state
  std::vector<double> sample_number;          // <N_s>
  std::vector<double> reservoir_number;       // <N_r>
};

// Exact evolution of the coupled system for t steps. The reservoir size
// defaults to the smallest one whose truncation horizon covers t. Produces
// the sample's reduced one- and two-body matrices, particle-number
// statistics, the flux expectation, and the largest odd (parity-mixing)
// sample correlator at each time.
inline OracleRecord simulate(const ReservoirSymbol& symbol, const SampleState& sample,
                             const SampleUnitary& w, double alpha, long t,
                             int reservoir_modes = -1) {
  if (t < 0) throw std::invalid_argument("simulate: need t >= 0");
  const int d = w.d();
  const int band = symbol.band();
  const int r_modes = reservoir_modes > 0 ? reservoir_modes : int(t) + 1 + band;
  if (r_modes > 12) throw resource_limit_error("simulate: more than 12 reservoir modes needed");
  if (r_modes + d > 13)
    throw resource_limit_error("simulate: joint space exceeds 2^13 dimensions");
  if (t > long(r_modes) - 1 - long(band)) {
    std::ostringstream msg;
    msg << "simulate: horizon exceeded, t = " << t << " but " << r_modes
        << " reservoir modes with band " << band << " are only exact up to t = "
        << r_modes - 1 - band;
    throw precondition_error(msg.str());
  }
  const Eigen::Index dim_r = fock_dim(r_modes);
  const Eigen::Index dim_s = fock_dim(d);
  for (const Vec& psi : sample.states)
    if (psi.size() != dim_s)
      throw std::invalid_argument("simulate: sample state dimension mismatch");

  const CouplingParams coupling = CouplingParams::from_alpha(alpha);
  const cplx g = coupling.g_alpha;
  const double f = coupling.f_alpha;
  const double sin_a = std::sin(alpha);
  const double cos_a = coupling.cos_alpha;

  // Species-local operators of the step and of the observables.
  const Mat b0 = fock_annihilator(r_modes, 0);
  const Mat a0 = fock_annihilator(d, 0);
  const Mat n0r = fock_number(r_modes, 0);
  const Mat n0s = fock_number(d, 0);
  const Mat gamma_r = second_quantize(cyclic_shift_matrix(r_modes));
  const Mat gamma_w = second_quantize(w.matrix());
  const Mat gamma_r_t = gamma_r.transpose();
  const Mat gamma_w_t = gamma_w.transpose();
  const Mat b0_dag = b0.adjoint();
  const Mat a0_t = a0.transpose();
  const Mat a0_dag_t = a0.adjoint().transpose();
  const Mat ir = Mat::Identity(dim_r, dim_r);
  const Mat is = Mat::Identity(dim_s, dim_s);
  const Mat proj_s_empty_t = (is - n0s).transpose();
  const Mat n0s_t = n0s.transpose();
  const Mat nr_total = fock_total_number(r_modes);

  const ReservoirEnsemble reservoir = reservoir_ensemble(symbol, r_modes);

  // Accumulators per time: reduced sample state and joint scalars.
  std::vector<Mat> rho_s(std::size_t(t) + 1, Mat::Zero(dim_s, dim_s));
  std::vector<double> flux(std::size_t(t) + 1, 0.0);
  std::vector<double> n_r(std::size_t(t) + 1, 0.0);

  // Evolve each product term |reservoir_i> (x) |sample_j> as a pure state,
  // reshaped as a dim_r x dim_s matrix Psi so every operator application is
  // species-local: (A (x) B) psi == A Psi B^T.
  for (std::size_t ri = 0; ri < reservoir.states.size(); ++ri) {
    for (std::size_t sj = 0; sj < sample.states.size(); ++sj) {
      const double weight = reservoir.weights[ri] * sample.weights[sj];
      Mat psi = reservoir.states[ri] * sample.states[sj].transpose();
      for (long step_idx = 0; step_idx <= t; ++step_idx) {
        const std::size_t at = std::size_t(step_idx);
        rho_s[at] += weight * (psi.adjoint() * psi).transpose();
        // Flux observable: sin^2(n_s0 - n_r0) + 2 sin cos Im <b0* (x) a0>.
        const Mat b_psi_a = b0_dag * psi * a0_t;
        const cplx cross = (psi.conjugate().cwiseProduct(b_psi_a)).sum();
        const double ns0 = (psi.conjugate().cwiseProduct(psi * n0s_t)).sum().real();
        const double nr0 = (psi.conjugate().cwiseProduct(n0r * psi)).sum().real();
        flux[at] += weight * (sin_a * sin_a * (ns0 - nr0) - 2.0 * sin_a * cos_a * cross.imag());
        n_r[at] += weight * (psi.conjugate().cwiseProduct(nr_total * psi)).sum().real();
        if (step_idx == t) break;
        // One step: couple at site 0, then shift both chains.
        Mat coupled = psi + g * (b_psi_a + b0 * psi * a0_dag_t) +
                      f * (n0r * psi * proj_s_empty_t + (ir - n0r) * psi * n0s_t);
        psi = gamma_r * coupled * gamma_w_t;
      }
    }
  }

  // Extract reduced quantities from the accumulated sample states.
  WedgeBasis basis(d);
  const int dim2 = basis.dimension();
  std::vector<Mat> a_ops(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) a_ops[std::size_t(j)] = fock_annihilator(d, j);
  auto expect = [](const Mat& rho, const Mat& op) {
    return (rho.cwiseProduct(op.transpose())).sum();
  };

  OracleRecord rec;
  rec.d = d;
  rec.reservoir_modes = r_modes;
  for (long step_idx = 0; step_idx <= t; ++step_idx) {
    const Mat& rho = rho_s[std::size_t(step_idx)];
    rec.times.push_back(step_idx);

    Mat one(d, d);
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        one(j, k) = expect(rho, a_ops[std::size_t(k)].adjoint() * a_ops[std::size_t(j)]);
    rec.rho1.push_back(hermitize(one));

    Mat two(dim2, dim2);
    for (int r = 0; r < dim2; ++r) {
      const auto [j1, j2] = basis.pair(r);
      for (int c = 0; c < dim2; ++c) {
        const auto [k1, k2] = basis.pair(c);
        const Mat op = a_ops[std::size_t(k1)].adjoint() * a_ops[std::size_t(k2)].adjoint() *
                       a_ops[std::size_t(j2)] * a_ops[std::size_t(j1)];
        two(r, c) = expect(rho, op);
      }
    }
    rec.rho2.push_back(hermitize(two));

    Eigen::VectorXd pmf = Eigen::VectorXd::Zero(d + 1);
    double odd = 0.0;
    double n_s = 0.0;
    for (std::uint32_t m = 0; m < std::uint32_t(dim_s); ++m) {
      pmf(std::popcount(m)) += rho(m, m).real();
      n_s += double(std::popcount(m)) * rho(m, m).real();
      for (std::uint32_t mm = 0; mm < std::uint32_t(dim_s); ++mm)
        if ((std::popcount(m) & 1) != (std::popcount(mm) & 1))
          odd = std::max(odd, std::abs(rho(m, mm)));
    }
    rec.number_pmf.push_back(std::move(pmf));
    rec.odd_correlator.push_back(odd);
    rec.sample_number.push_back(n_s);
    rec.flux.push_back(flux[std::size_t(step_idx)]);
    rec.reservoir_number.push_back(n_r[std::size_t(step_idx)]);
  }
  return rec;
}

// Residuals of the coupling-conjugation identities on a small joint space:
// how K transports ladder and number operators, the closed form against the
// spectral exponential of the generator, number conservation, and the
// intertwining of couplings at different sites by the free step. Returns
// the largest residual over all checked identities.
inline double heisenberg_identity_check(const FockRep& rep, double alpha) {
  if (rep.reservoir_modes() > 3 || rep.sample_modes() > 3)
    throw std::invalid_argument("heisenberg_identity_check: meant for R <= 3, d <= 3");
  const CouplingParams c = CouplingParams::from_alpha(alpha);
  const cplx g = c.g_alpha;
  const double cos_a = c.cos_alpha;
  const Mat ir = Mat::Identity(rep.dim_reservoir(), rep.dim_reservoir());
  const Mat is = Mat::Identity(rep.dim_sample(), rep.dim_sample());
  double worst = 0.0;
  const int sites = std::min(rep.reservoir_modes(), rep.sample_modes());
  for (int j = 0; j < sites; ++j) {
    const Mat k = build_coupling(rep, alpha, j, j);
    const Mat kd = k.adjoint();
    const Mat a_j = rep.joint(ir, rep.a(j));
    const Mat b_j = rep.joint(rep.b(j), is);
    const Mat ns_j = rep.joint(ir, rep.ns(j));
    const Mat nr_j = rep.joint(rep.nr(j), is);

    // K* a K = cos a + g b (1 - 2 n_s)
    worst = std::max(worst, max_abs(kd * a_j * k - cos_a * a_j -
                                    g * rep.joint(rep.b(j), is - 2.0 * rep.ns(j))));
    // K* a K* = cos a - g b ; and the creator version by adjoint symmetry.
    worst = std::max(worst, max_abs(kd * a_j * kd - cos_a * a_j + g * b_j));
    worst = std::max(worst,
                     max_abs(kd * a_j.adjoint() * kd - cos_a * a_j.adjoint() + g * b_j.adjoint()));
    // K a K = cos a + g b ; creator version likewise.
    worst = std::max(worst, max_abs(k * a_j * k - cos_a * a_j - g * b_j));
    worst = std::max(worst,
                     max_abs(k * a_j.adjoint() * k - cos_a * a_j.adjoint() - g * b_j.adjoint()));
    // K* n_s K = cos^2 n_s + g cos (b a* - b* a) + sin^2 n_r
    worst = std::max(worst,
                     max_abs(kd * ns_j * k - cos_a * cos_a * ns_j -
                             g * cos_a * (rep.joint(rep.b(j), rep.a(j).adjoint()) -
                                          rep.joint(rep.b(j).adjoint(), rep.a(j))) -
                             (1.0 - cos_a * cos_a) * nr_j));
    // Number conservation.
    const Mat n_total = rep.joint_number();
    worst = std::max(worst, max_abs(k * n_total - n_total * k));
    // Closed form equals the exponential of the generator i alpha X.
    Mat x = rep.joint(rep.b(j).adjoint(), rep.a(j)) + rep.joint(rep.b(j), rep.a(j).adjoint());
    Eigen::SelfAdjointEigenSolver<Mat> xs(x);
    if (xs.info() != Eigen::Success)
      throw numeric_error("heisenberg_identity_check: generator eigendecomposition failed");
    Vec phase(xs.eigenvalues().size());
    for (Eigen::Index i = 0; i < phase.size(); ++i)
      phase(i) = std::polar(1.0, alpha * xs.eigenvalues()(i));
    const Mat k_exp = xs.eigenvectors() * phase.asDiagonal() * xs.eigenvectors().adjoint();
    worst = std::max(worst, max_abs(k - k_exp));
    // Couplings at other sites leave this site's ladder operators alone.
    for (int other = 0; other < sites; ++other) {
      if (other == j) continue;
      const Mat k_other = build_coupling(rep, alpha, other, other);
      worst = std::max(worst, max_abs(k_other.adjoint() * a_j - a_j * k_other));
    }
  }
  return worst;
}

}  // namespace fermiwalk
