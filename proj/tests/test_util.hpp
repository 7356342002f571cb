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

#ifndef FILTERED_FOCK_TESTS_TEST_UTIL_HPP
#define FILTERED_FOCK_TESTS_TEST_UTIL_HPP

#include <algorithm>
#include <random>

#include "filtered_fock/biprocess.hpp"
#include "filtered_fock/fock.hpp"

namespace fftest {

using namespace ffock;

inline cplx rand_c(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double re = n(rng);
  double im = n(rng);
  return {re, im};
}

// Random step function with norm drawn uniformly in [0, max_norm].
inline OneParticleVector rand_u(const GridSpec& g, std::mt19937_64& rng, double max_norm) {
  OneParticleVector u(g);
  for (int c = 0; c < g.n_cells; ++c)
    for (int k = 1; k <= g.n_colors; ++k) u.at(c, k) = rand_c(rng);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double target = max_norm * U(rng);
  double n = u.norm();
  return n > 0 ? u * (target / n) : u;
}

inline Vec rand_vec(int n, std::mt19937_64& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = rand_c(rng);
  return v / v.norm();
}

inline Mat rand_mat(int n, std::mt19937_64& rng, double scale = 1.0) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rand_c(rng);
  return m * (scale / std::sqrt(double(n)));
}

// Σ_{j<=n} z^j / j!, summed term by term.
inline cplx partial_exp(cplx z, int n) {
  cplx s = 0, term = 1;
  for (int j = 0; j <= n; ++j) {
    s += term;
    term *= z / double(j + 1);
  }
  return s;
}

inline Filter rand_filter(int C, std::mt19937_64& rng, bool allow_full = true) {
  std::uniform_int_distribution<uint32_t> pick(0, (1u << C) - (allow_full ? 0 : 1));
  uint32_t m = pick(rng);
  return m == (1u << C) ? Filter::full() : Filter::from_mask(m);
}

inline ExpState rand_state(const GridSpec& g, std::mt19937_64& rng, double max_norm = 0.5) {
  return {rand_vec(g.h0_dim, rng), rand_u(g, rng, max_norm)};
}

// Random word: a matrix followed by up to three Fock factors.
inline Word rand_word(const GridSpec& g, std::mt19937_64& rng, bool diagonal) {
  std::uniform_int_distribution<int> kind(0, diagonal ? 1 : 3), col(1, g.n_colors), len(0, 3);
  Word w;
  w.factors.push_back(Factor::matrix("M", rand_mat(g.h0_dim, rng)));
  int n = len(rng);
  for (int i = 0; i < n; ++i) {
    switch (kind(rng)) {
      case 0: w.factors.push_back(Factor::proj(rand_filter(g.n_colors, rng))); break;
      case 1: w.factors.push_back(Factor::num(col(rng))); break;
      case 2: w.factors.push_back(Factor::cre(col(rng))); break;
      default: w.factors.push_back(Factor::ann(col(rng)));
    }
  }
  return w;
}

// Random step biprocess with one to three intervals.
inline SimpleBiprocess rand_simple(const GridSpec& g, std::mt19937_64& rng, bool diagonal) {
  std::uniform_int_distribution<int> cut(1, g.n_cells - 1), nint(1, 3);
  std::vector<int> cuts{0, g.n_cells};
  int extra = nint(rng) - 1;
  for (int i = 0; i < extra; ++i) cuts.push_back(cut(rng));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  SimpleBiprocess X;
  X.coef = rand_c(rng) * 0.5;
  X.cuts = cuts;
  X.D = rand_filter(g.n_colors, rng);
  X.E = rand_filter(g.n_colors, rng);
  for (size_t j = 0; j + 1 < cuts.size(); ++j) {
    X.F.push_back(rand_word(g, rng, diagonal));
    X.G.push_back(rand_word(g, rng, diagonal));
  }
  return X;
}

// Discrete Gronwall: f_c <= a + b Δ Σ_{j<c} f_j for all c implies
// f_c <= a e^{b c Δ}.
inline bool gronwall_premise(const std::vector<double>& f, double a, double b, double delta, double slack = 1e-12) {
  double run = 0;
  for (double v : f) {
    if (v > a + b * delta * run + slack) return false;
    run += v;
  }
  return true;
}
inline double gronwall_bound(double a, double b, double t) { return a * std::exp(b * t); }

}  // namespace fftest

#endif  // FILTERED_FOCK_TESTS_TEST_UTIL_HPP
