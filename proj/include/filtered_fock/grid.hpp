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

#ifndef FILTERED_FOCK_GRID_HPP
#define FILTERED_FOCK_GRID_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ffock {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

constexpr int kMaxColors = 16;

// A set of colors, or the token FULL which contains every color.
class Filter {
 public:
  Filter() = default;

  static Filter full() {
    Filter f;
    f.full_ = true;
    return f;
  }
  static Filter empty() { return Filter{}; }
  static Filter of(std::initializer_list<int> colors) {
    Filter f;
    for (int k : colors) f.add(k);
    return f;
  }
  static Filter from_mask(uint32_t mask) {
    Filter f;
    f.mask_ = mask;
    return f;
  }
  // {1..k}; empty when k <= 0.
  static Filter first(int k) {
    Filter f;
    for (int c = 1; c <= k; ++c) f.add(c);
    return f;
  }

  void add(int k) {
    if (k < 1 || k > kMaxColors) throw std::out_of_range("color out of range");
    if (!full_) mask_ |= (1u << (k - 1));
  }

  bool is_full() const { return full_; }
  uint32_t mask() const { return mask_; }
  bool contains(int k) const {
    if (k < 1) return false;
    return full_ || ((mask_ >> (k - 1)) & 1u);
  }
  // Colors present among 1..C.
  uint32_t mask_on(int n_colors) const {
    uint32_t all = (n_colors >= 32) ? ~0u : ((1u << n_colors) - 1u);
    return full_ ? all : (mask_ & all);
  }
  bool empty_set() const { return !full_ && mask_ == 0; }

  Filter operator&(const Filter& o) const {
    if (full_) return o;
    if (o.full_) return *this;
    return from_mask(mask_ & o.mask_);
  }
  Filter operator|(const Filter& o) const {
    if (full_ || o.full_) return full();
    return from_mask(mask_ | o.mask_);
  }
  Filter with(int k) const {
    Filter f = *this;
    f.add(k);
    return f;
  }
  bool subset_of(const Filter& o) const {
    if (o.full_) return true;
    if (full_) return false;
    return (mask_ & ~o.mask_) == 0;
  }
  bool operator==(const Filter& o) const { return full_ == o.full_ && mask_ == o.mask_; }
  bool operator!=(const Filter& o) const { return !(*this == o); }
  // Canonical order: finite sets by size then mask, FULL last.
  bool operator<(const Filter& o) const {
    if (full_ != o.full_) return !full_;
    int a = __builtin_popcount(mask_), b = __builtin_popcount(o.mask_);
    if (a != b) return a < b;
    return mask_ < o.mask_;
  }

  std::string str() const {
    if (full_) return "FULL";
    std::string s = "{";
    bool first_item = true;
    for (int k = 1; k <= kMaxColors; ++k) {
      if (!contains(k)) continue;
      if (!first_item) s += ",";
      s += std::to_string(k);
      first_item = false;
    }
    return s + "}";
  }

 private:
  bool full_ = false;
  uint32_t mask_ = 0;
};

// Time x color grid. Cells are [cΔ, (c+1)Δ), c = 0..n_cells-1.
struct GridSpec {
  double horizon = 1.0;
  int n_cells = 8;
  int n_colors = 3;
  int n_max = 3;
  int h0_dim = 2;

  double delta() const { return horizon / n_cells; }
  int modes() const { return n_cells * n_colors; }
  int mode(int cell, int color) const { return cell * n_colors + (color - 1); }
  int cell_of_mode(int j) const { return j / n_colors; }
  int color_of_mode(int j) const { return j % n_colors + 1; }

  void validate() const {
    if (!(horizon > 0) || !std::isfinite(horizon)) throw std::invalid_argument("horizon must be positive");
    if (n_cells < 1) throw std::invalid_argument("n_cells must be positive");
    if (n_colors < 1 || n_colors > kMaxColors) throw std::invalid_argument("n_colors out of range");
    if (n_max < 0 || n_max > 8) throw std::invalid_argument("n_max out of range");
    if (h0_dim < 1) throw std::invalid_argument("h0_dim must be positive");
    if (modes() > 255) throw std::invalid_argument("too many modes (limit 255)");
  }

  void check_filter(const Filter& f) const {
    if (f.is_full()) return;
    if (f.mask() >> n_colors) throw std::out_of_range("filter " + f.str() + " exceeds color range");
  }
  void check_color(int k) const {
    if (k < 1 || k > n_colors) throw std::out_of_range("color " + std::to_string(k) + " out of range");
  }

  // Grid index of time t; throws when t is not a grid point.
  int cell_index(double t) const {
    double x = t / delta();
    double r = std::round(x);
    if (std::abs(x - r) > 1e-9 || r < 0 || r > n_cells) throw std::out_of_range("time off grid");
    return static_cast<int>(r);
  }
  double time_of(int c) const { return c * delta(); }

  bool operator==(const GridSpec& o) const {
    return horizon == o.horizon && n_cells == o.n_cells && n_colors == o.n_colors && n_max == o.n_max &&
           h0_dim == o.h0_dim;
  }
};

// Step function u in L2([0,T]) ⊗ C^C, one value per (cell, color).
class OneParticleVector {
 public:
  OneParticleVector() = default;
  explicit OneParticleVector(const GridSpec& g) : g_(g), v_(Vec::Zero(g.modes())) {}
  OneParticleVector(const GridSpec& g, Vec values) : g_(g), v_(std::move(values)) {
    if (v_.size() != g.modes()) throw std::invalid_argument("dimension mismatch");
  }

  const GridSpec& grid() const { return g_; }
  const Vec& values() const { return v_; }
  cplx& at(int cell, int color) { return v_(g_.mode(cell, color)); }
  cplx at(int cell, int color) const { return v_(g_.mode(cell, color)); }

  // Coefficient of ε-expansion on mode j: value·√Δ.
  Vec amplitudes() const { return v_ * std::sqrt(g_.delta()); }

  cplx inner(const OneParticleVector& o) const { return g_.delta() * v_.dot(o.v_); }
  double norm() const { return std::sqrt(std::real(inner(*this))); }

  int color_support() const {
    int r = 0;
    for (int j = 0; j < v_.size(); ++j)
      if (v_(j) != cplx(0)) r = std::max(r, g_.color_of_mode(j));
    return r;
  }

  OneParticleVector restrict(const Filter& V) const {
    OneParticleVector w(g_);
    for (int j = 0; j < v_.size(); ++j)
      if (V.contains(g_.color_of_mode(j))) w.v_(j) = v_(j);
    return w;
  }
  // Parts on cells < c and cells >= c.
  OneParticleVector past(int c) const {
    OneParticleVector w(g_);
    for (int j = 0; j < v_.size(); ++j)
      if (g_.cell_of_mode(j) < c) w.v_(j) = v_(j);
    return w;
  }
  OneParticleVector future(int c) const {
    OneParticleVector w(g_);
    for (int j = 0; j < v_.size(); ++j)
      if (g_.cell_of_mode(j) >= c) w.v_(j) = v_(j);
    return w;
  }

  OneParticleVector operator+(const OneParticleVector& o) const { return {g_, v_ + o.v_}; }
  OneParticleVector operator*(cplx s) const { return {g_, v_ * s}; }

 private:
  GridSpec g_;
  Vec v_;
};

// Indicator χ_[a,b) ⊗ e_k as a step function.
inline OneParticleVector indicator(const GridSpec& g, int c0, int c1, int k) {
  OneParticleVector f(g);
  for (int c = c0; c < c1; ++c) f.at(c, k) = 1.0;
  return f;
}

}  // namespace ffock

#endif  // FILTERED_FOCK_GRID_HPP
