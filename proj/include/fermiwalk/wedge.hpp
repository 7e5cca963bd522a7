// Antisymmetric (wedge) space algebra: basis bookkeeping for H^{wedge p},
// compression of A (x) B to the two-particle wedge space, and lifts of
// one-particle operators to p-particle wedge spaces.
//
// Convention used everywhere: the p-wedge basis vector for indices
// j_1 < j_2 < ... < j_p is (1/sqrt(p!)) sum_pi sign(pi) e_{j_pi(1)} (x) ... ,
// and subsets are ordered lexicographically. All sign conventions follow
// from this ordering.
#pragma once

#include "fermiwalk/common.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace fermiwalk {

// Ordered basis of the two-particle wedge space over a d-dimensional
// one-particle space: pairs (j1, j2) with j1 < j2 in lexicographic order.
class WedgeBasis {
 public:
  explicit WedgeBasis(int d) : d_(d) {
    if (d < 2) throw std::invalid_argument("WedgeBasis: need d >= 2");
    pairs_.reserve(std::size_t(d) * (d - 1) / 2);
    for (int j1 = 0; j1 < d; ++j1)
      for (int j2 = j1 + 1; j2 < d; ++j2) pairs_.emplace_back(j1, j2);
  }

  int d() const { return d_; }
  int dimension() const { return int(pairs_.size()); }
  const std::pair<int, int>& pair(int idx) const { return pairs_.at(std::size_t(idx)); }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

  int index(int j1, int j2) const {
    if (j1 < 0 || j2 <= j1 || j2 >= d_)
      throw std::invalid_argument("WedgeBasis::index: need 0 <= j1 < j2 < d");
    // Pairs starting with j < j1 occupy a triangular prefix.
    return j1 * d_ - j1 * (j1 + 1) / 2 + (j2 - j1 - 1);
  }

 private:
  int d_;
  std::vector<std::pair<int, int>> pairs_;
};

// Compression P (A (x) B) P of a product operator to the two-particle wedge
// space, expressed in the WedgeBasis ordering. Entry formula (with C the
// four-term antisymmetrized combination):
//   1/2 * [ A_{j1 k1} B_{j2 k2} - A_{j2 k1} B_{j1 k2}
//         + A_{j2 k2} B_{j1 k1} - A_{j1 k2} B_{j2 k1} ].
// Symmetric under swapping A and B.
inline Mat antisymmetric_sandwich(const Mat& a, const Mat& b) {
  require_square(a, "antisymmetric_sandwich");
  require_square(b, "antisymmetric_sandwich");
  if (a.rows() != b.rows())
    throw std::invalid_argument("antisymmetric_sandwich: A and B dimensions differ");
  const int d = int(a.rows());
  if (d < 2) throw std::invalid_argument("antisymmetric_sandwich: need d >= 2");
  WedgeBasis basis(d);
  const int dim = basis.dimension();
  Mat out(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const auto [j1, j2] = basis.pair(r);
    for (int c = 0; c < dim; ++c) {
      const auto [k1, k2] = basis.pair(c);
      out(r, c) = 0.5 * (a(j1, k1) * b(j2, k2) - a(j2, k1) * b(j1, k2) +
                         a(j2, k2) * b(j1, k1) - a(j1, k2) * b(j2, k1));
    }
  }
  return out;
}

// Lift of a one-particle operator A to the p-particle wedge space: the
// compression P A^{(x)p} P. Its matrix elements are determinants of p x p
// submatrices, det A[{j_1..j_p},{k_1..k_p}], over lexicographic subsets.
inline Mat gamma_on_wedge(const Mat& a, int p) {
  require_square(a, "gamma_on_wedge");
  const int d = int(a.rows());
  if (p < 1 || p > d) throw std::invalid_argument("gamma_on_wedge: need 1 <= p <= d");
  if (p == 1) return a;
  const auto subsets = index_subsets(d, p);
  const int dim = int(subsets.size());
  Mat out(dim, dim);
  Mat sub(p, p);
  for (int r = 0; r < dim; ++r) {
    for (int c = 0; c < dim; ++c) {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sub(i, j) = a(subsets[r][i], subsets[c][j]);
      out(r, c) = sub.determinant();
    }
  }
  return out;
}

// Isometric embedding of the p-wedge space into the p-fold tensor power:
// column for the subset j_1 < ... < j_p holds the normalized antisymmetrized
// tensor. E^* E = identity on the wedge space; E E^* is the antisymmetric
// projector. Used to compress operators given in tensor form.
inline Mat wedge_embedding(int d, int p) {
  if (p < 0 || p > d) throw std::invalid_argument("wedge_embedding: need 0 <= p <= d");
  std::uint64_t tensor_dim = 1;
  for (int i = 0; i < p; ++i) tensor_dim *= std::uint64_t(d);
  if (tensor_dim > (1u << 14))
    throw resource_limit_error("wedge_embedding: tensor dimension too large");
  const auto subsets = index_subsets(d, p);
  Mat e = Mat::Zero(Eigen::Index(tensor_dim), Eigen::Index(subsets.size()));
  if (p == 0) {
    e(0, 0) = 1.0;
    return e;
  }
  double norm = 1.0;
  for (int i = 2; i <= p; ++i) norm *= double(i);
  norm = 1.0 / std::sqrt(norm);
  std::vector<int> idx(static_cast<std::size_t>(p));
  for (std::size_t col = 0; col < subsets.size(); ++col) {
    for (int i = 0; i < p; ++i) idx[std::size_t(i)] = i;
    // Walk all permutations, tracking the sign explicitly.
    do {
      int sign = 1;
      for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
          if (idx[i] > idx[j]) sign = -sign;
      std::uint64_t row = 0;
      for (int i = 0; i < p; ++i) row = row * std::uint64_t(d) + std::uint64_t(subsets[col][idx[i]]);
      e(Eigen::Index(row), Eigen::Index(col)) += double(sign) * norm;
    } while (std::next_permutation(idx.begin(), idx.end()));
  }
  return e;
}

}  // namespace fermiwalk
