// Shared dense-matrix substrate: aliases, error types, tolerances and small
// helpers used by every other header.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fermiwalk {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RealMat = Eigen::MatrixXd;

// Margin for the strict-contraction test: spectra are "inside the unit
// circle" only if the spectral radius stays below 1 by at least this much.
inline constexpr double kUnitCircleTol = 1e-9;
// Allowed Hermiticity drift before a value is rejected.
inline constexpr double kHermTol = 1e-12;
// Allowed eigenvalue excursion outside [0,1] for density-type matrices.
inline constexpr double kDensityEigTol = 1e-10;

// A numerical invariant broke (positivity, hermiticity, normalization, ...).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A stated precondition does not hold (spectral condition, time horizon, ...).
// Derived from std::invalid_argument so callers can treat both as bad input.
struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// The request exceeds the hard size limits of an operation.
struct resource_limit_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double max_abs(const Mat& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline void require_finite(const Mat& a, const char* what) {
  if (!a.allFinite()) throw numeric_error(std::string(what) + ": non-finite entries");
}

inline void require_square(const Mat& a, const char* what) {
  if (a.rows() != a.cols())
    throw std::invalid_argument(std::string(what) + ": matrix must be square");
}

// Max entry of |X - X*|; zero for exactly Hermitian input.
inline double hermiticity_drift(const Mat& x) { return max_abs(x - x.adjoint()); }

inline Mat hermitize(const Mat& x) { return 0.5 * (x + x.adjoint()); }

// Operator (largest-singular-value) norm; matrices here are small and dense.
inline double op_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  return a.jacobiSvd().singularValues()(0);
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vec basis_vector(int d, int j) {
  Vec e = Vec::Zero(d);
  e(j) = 1.0;
  return e;
}

// All p-element subsets of {0,...,d-1} in lexicographic order.
inline std::vector<std::vector<int>> index_subsets(int d, int p) {
  if (p < 0 || p > d) throw std::invalid_argument("index_subsets: p out of range");
  std::vector<std::vector<int>> out;
  std::vector<int> cur(p);
  for (int i = 0; i < p; ++i) cur[i] = i;
  while (true) {
    out.push_back(cur);
    if (p == 0) break;
    int i = p - 1;
    while (i >= 0 && cur[i] == d - p + i) --i;
    if (i < 0) break;
    ++cur[i];
    for (int j = i + 1; j < p; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * std::uint64_t(n - k + i) / std::uint64_t(i);
  return r;
}

namespace detail {

// 53-bit uniform in [0,1). std::uniform_real_distribution is
// implementation-defined, which would break the byte-determinism contract.
inline double uniform01(std::mt19937_64& gen) {
  return double(gen() >> 11) * 0x1.0p-53;
}

inline std::string format_complex(cplx z) {
  std::ostringstream os;
  os << z.real() << (z.imag() < 0 ? "" : "+") << z.imag() << "i";
  return os.str();
}

}  // namespace detail

}  // namespace fermiwalk
