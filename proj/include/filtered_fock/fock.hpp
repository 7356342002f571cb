// Copyright 2026 The filtered-fock Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FILTERED_FOCK_FOCK_HPP
#define FILTERED_FOCK_FOCK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "filtered_fock/grid.hpp"

namespace ffock {

using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<cplx>;

// Truncated symmetric Fock space over the grid modes. States are multisets
// of modes with at most n_max elements, ordered degree-major then
// lexicographically on the sorted mode list.
class FockSpace {
 public:
  explicit FockSpace(const GridSpec& g) : g_(g) {
    g_.validate();
    d_ = g_.modes();
    n_ = g_.n_max;
    std::vector<uint8_t> cur;
    offsets_.push_back(0);
    for (int deg = 0; deg <= n_; ++deg) {
      cur.assign(deg, 0);
      enumerate(cur, 0, 0);
      offsets_.push_back(static_cast<int>(deg_.size()));
    }
    dim_ = static_cast<int>(deg_.size());
    raise_.assign(static_cast<size_t>(dim_) * d_, -1);
    std::vector<uint8_t> m;
    for (int s = 0; s < dim_; ++s) {
      if (deg_[s] >= n_) continue;
      for (int j = 0; j < d_; ++j) {
        m.assign(modes(s), modes(s) + deg_[s]);
        m.insert(std::upper_bound(m.begin(), m.end(), static_cast<uint8_t>(j)), static_cast<uint8_t>(j));
        raise_[static_cast<size_t>(s) * d_ + j] = index_of(m);
      }
    }
  }

  const GridSpec& grid() const { return g_; }
  int dim() const { return dim_; }
  int full_dim() const { return dim_ * g_.h0_dim; }
  int degree(int s) const { return deg_[s]; }
  const uint8_t* modes(int s) const { return &modes_[static_cast<size_t>(s) * std::max(n_, 1)]; }
  std::vector<int> mode_list(int s) const { return {modes(s), modes(s) + deg_[s]}; }

  int occupation(int s, int j) const {
    int c = 0;
    for (int i = 0; i < deg_[s]; ++i) c += (modes(s)[i] == j);
    return c;
  }
  // Index of the state with mode j added, or -1 above the cutoff.
  int raise(int s, int j) const { return raise_[static_cast<size_t>(s) * d_ + j]; }

  int index_of(const std::vector<uint8_t>& sorted_modes) const {
    if (static_cast<int>(sorted_modes.size()) > n_) return -1;
    auto it = lookup_.find(key(sorted_modes.data(), static_cast<int>(sorted_modes.size())));
    return it == lookup_.end() ? -1 : it->second;
  }

  // Colors occupied by modes in cells [c0, c1).
  uint32_t color_mask(int s, int c0, int c1) const {
    uint32_t m = 0;
    for (int i = 0; i < deg_[s]; ++i) {
      int j = modes(s)[i];
      int c = g_.cell_of_mode(j);
      if (c >= c0 && c < c1) m |= 1u << (g_.color_of_mode(j) - 1);
    }
    return m;
  }
  uint32_t color_mask(int s) const { return color_mask(s, 0, g_.n_cells); }
  int max_color(int s) const {
    uint32_t m = color_mask(s);
    return m == 0 ? 0 : 32 - __builtin_clz(m);
  }

  // Split a state at cell boundary c into (past index, future index).
  std::pair<int, int> split(int s, int c) const {
    std::vector<uint8_t> p, f;
    for (int i = 0; i < deg_[s]; ++i) {
      uint8_t j = modes(s)[i];
      (g_.cell_of_mode(j) < c ? p : f).push_back(j);
    }
    return {index_of(p), index_of(f)};
  }
  // Join a past state and a future state; -1 above the cutoff.
  int join(int past, int future) const {
    if (deg_[past] + deg_[future] > n_) return -1;
    std::vector<uint8_t> m(modes(past), modes(past) + deg_[past]);
    m.insert(m.end(), modes(future), modes(future) + deg_[future]);
    std::sort(m.begin(), m.end());
    return index_of(m);
  }

  // ---- operators on the Fock factor ----

  SpMat identity() const {
    SpMat I(dim_, dim_);
    I.setIdentity();
    return I;
  }

  // a*(χ_[c0,c1) ⊗ e_k), compressed to degree <= n_max.
  SpMat creation(int k, int c0, int c1) const {
    g_.check_color(k);
    std::vector<Triplet> t;
    double sq = std::sqrt(g_.delta());
    for (int s = 0; s < dim_; ++s) {
      if (deg_[s] >= n_) continue;
      for (int c = c0; c < c1; ++c) {
        int j = g_.mode(c, k);
        int r = raise(s, j);
        t.emplace_back(r, s, sq * std::sqrt(double(occupation(s, j) + 1)));
      }
    }
    return build(t);
  }
  SpMat annihilation(int k, int c0, int c1) const { return SpMat(creation(k, c0, c1).adjoint()); }

  // λ(χ_[c0,c1) ⊗ |e_k><e_k|).
  SpMat number(int k, int c0, int c1) const {
    g_.check_color(k);
    std::vector<Triplet> t;
    for (int s = 0; s < dim_; ++s) {
      int n = 0;
      for (int i = 0; i < deg_[s]; ++i) {
        int j = modes(s)[i];
        int c = g_.cell_of_mode(j);
        if (g_.color_of_mode(j) == k && c >= c0 && c < c1) ++n;
      }
      if (n) t.emplace_back(s, s, double(n));
    }
    return build(t);
  }

  // Keeps a state iff every mode in cells [c0,c1) has color in V.
  SpMat projection(const Filter& V, int c0, int c1) const {
    g_.check_filter(V);
    uint32_t allowed = V.mask_on(g_.n_colors);
    std::vector<Triplet> t;
    for (int s = 0; s < dim_; ++s)
      if ((color_mask(s, c0, c1) & ~allowed) == 0) t.emplace_back(s, s, 1.0);
    return build(t);
  }
  SpMat projection(const Filter& V) const { return projection(V, 0, g_.n_cells); }
  SpMat past_projection(const Filter& V, int c) const { return projection(V, 0, c); }
  SpMat future_projection(const Filter& V, int c) const { return projection(V, c, g_.n_cells); }

  // States whose largest color is exactly k; k = 0 is the vacuum.
  SpMat band(int k) const {
    if (k < 0 || k > g_.n_colors) throw std::out_of_range("band index out of range");
    std::vector<Triplet> t;
    for (int s = 0; s < dim_; ++s)
      if (max_color(s) == k) t.emplace_back(s, s, 1.0);
    return build(t);
  }

  // ---- vectors ----

  Vec vacuum() const {
    Vec v = Vec::Zero(dim_);
    v(0) = 1.0;
    return v;
  }

  Vec exponential(const OneParticleVector& u) const {
    if (!(u.grid().modes() == d_)) throw std::invalid_argument("dimension mismatch");
    Vec a = u.amplitudes();
    Vec e(dim_);
    for (int s = 0; s < dim_; ++s) {
      cplx amp = 1.0;
      const uint8_t* m = modes(s);
      int i = 0;
      while (i < deg_[s]) {
        int j = m[i], r = 0;
        while (i < deg_[s] && m[i] == j) {
          ++r;
          ++i;
          amp *= a(j) / std::sqrt(double(r));
        }
      }
      e(s) = amp;
    }
    return e;
  }

  // Norm of the degree-n component of a Fock-factor vector.
  double degree_norm(const Vec& v, int n) const {
    double s2 = 0;
    for (int s = offsets_[n]; s < offsets_[n + 1]; ++s) s2 += std::norm(v(s));
    return std::sqrt(s2);
  }
  int degree_begin(int n) const { return offsets_[n]; }
  int degree_end(int n) const { return offsets_[n + 1]; }

  // One line per state: "degree | mode-multiset | re | im".
  void dump(std::ostream& os, const Vec& v) const {
    for (int s = 0; s < dim_; ++s) {
      os << int(deg_[s]) << " | [";
      for (int i = 0; i < deg_[s]; ++i) os << (i ? "," : "") << int(modes(s)[i]);
      os << "] | " << v(s).real() << " | " << v(s).imag() << "\n";
    }
  }

 private:
  static uint64_t key(const uint8_t* m, int n) {
    uint64_t k = 0;
    for (int i = 0; i < n; ++i) k |= uint64_t(m[i] + 1) << (8 * i);
    return k;
  }
  void enumerate(std::vector<uint8_t>& cur, int pos, int lo) {
    if (pos == static_cast<int>(cur.size())) {
      int s = static_cast<int>(deg_.size());
      deg_.push_back(static_cast<uint8_t>(cur.size()));
      size_t stride = std::max(n_, 1);
      modes_.resize(modes_.size() + stride, 0);
      std::copy(cur.begin(), cur.end(), modes_.end() - stride);
      lookup_[key(cur.data(), static_cast<int>(cur.size()))] = s;
      return;
    }
    for (int j = lo; j < d_; ++j) {
      cur[pos] = static_cast<uint8_t>(j);
      enumerate(cur, pos + 1, j);
    }
  }
  SpMat build(const std::vector<Triplet>& t) const {
    SpMat M(dim_, dim_);
    M.setFromTriplets(t.begin(), t.end());
    M.makeCompressed();
    return M;
  }

  GridSpec g_;
  int d_ = 0, n_ = 0, dim_ = 0;
  std::vector<uint8_t> deg_;
  std::vector<uint8_t> modes_;
  std::vector<int> offsets_;
  std::vector<int> raise_;
  std::unordered_map<uint64_t, int> lookup_;
};

using FockPtr = std::shared_ptr<const FockSpace>;
inline FockPtr make_fock(const GridSpec& g) { return std::make_shared<const FockSpace>(g); }

// ---- h0 ⊗ Fock ----
// Full-space index a * Nf + i for initial-space coordinate a and Fock state i.

inline SpMat kron(const Mat& A, const SpMat& B) {
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(A.rows()) * A.cols() * B.nonZeros());
  for (int a = 0; a < A.rows(); ++a)
    for (int b = 0; b < A.cols(); ++b) {
      if (A(a, b) == cplx(0)) continue;
      for (int r = 0; r < B.outerSize(); ++r)
        for (SpMat::InnerIterator it(B, r); it; ++it)
          t.emplace_back(a * B.rows() + it.row(), b * B.cols() + it.col(), A(a, b) * it.value());
    }
  SpMat M(A.rows() * B.rows(), A.cols() * B.cols());
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

// Operator M ⊗ A applied without materializing the product.
struct KronOp {
  Mat h0;
  SpMat fock;

  Vec apply(const Vec& x) const {
    const int nf = static_cast<int>(fock.rows());
    const int d = static_cast<int>(h0.rows());
    Eigen::Map<const Mat> X(x.data(), nf, d);
    Mat Y = (fock * X) * h0.transpose();
    return Eigen::Map<const Vec>(Y.data(), Y.size());
  }
  KronOp adjoint() const { return {h0.adjoint(), SpMat(fock.adjoint())}; }
  KronOp operator*(const KronOp& o) const { return {h0 * o.h0, SpMat(fock * o.fock)}; }
  SpMat materialize() const { return kron(h0, fock); }
};

inline Vec product_state(const Vec& w, const Vec& fock_vec) {
  Vec x(w.size() * fock_vec.size());
  for (int a = 0; a < w.size(); ++a) x.segment(a * fock_vec.size(), fock_vec.size()) = w(a) * fock_vec;
  return x;
}

// Pure exponential state w ε(u).
struct ExpState {
  Vec w;
  OneParticleVector u;

  Vec materialize(const FockSpace& F) const { return product_state(w, F.exponential(u)); }
};

// (w ε(u_{t]}), ε(u_{[t})) with the future part carrying the scalar 1.
inline std::pair<ExpState, ExpState> past_future_split(const ExpState& x, int c) {
  if (c < 0 || c > x.u.grid().n_cells) throw std::out_of_range("time off grid");
  Vec one = Vec::Ones(1);
  return {ExpState{x.w, x.u.past(c)}, ExpState{one, x.u.future(c)}};
}

// Tensor product of a past Fock vector and a future Fock vector.
inline Vec join_fock(const FockSpace& F, const Vec& past, const Vec& future, int c) {
  Vec out = Vec::Zero(F.dim());
  for (int s = 0; s < F.dim(); ++s) {
    auto [p, f] = F.split(s, c);
    out(s) = past(p) * future(f);
  }
  return out;
}

inline Mat to_dense(const SpMat& M, int cap = 4000) {
  if (M.rows() > cap || M.cols() > cap) throw std::length_error("operator exceeds dense size cap");
  return Mat(M);
}

inline double max_abs(const SpMat& M) {
  double m = 0;
  for (int r = 0; r < M.outerSize(); ++r)
    for (SpMat::InnerIterator it(M, r); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

}  // namespace ffock

#endif  // FILTERED_FOCK_FOCK_HPP
