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

// Random systems and sample scenarios shared by the sde tests and the
// acceptance runner.

#ifndef FILTERED_FOCK_TESTS_SDE_FIXTURES_HPP
#define FILTERED_FOCK_TESTS_SDE_FIXTURES_HPP

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "filtered_fock/sde.hpp"
#include "test_util.hpp"

namespace fftest {

using namespace ffock;

inline GridSpec grid(int n_max, int n_cells = 8, int C = 3) {
  GridSpec g;
  g.n_max = n_max;
  g.n_cells = n_cells;
  g.n_colors = C;
  return g;
}

inline std::vector<ExpState> first_probes(const GridSpec& g, int n, uint64_t seed = 1) {
  auto p = probe_catalog(g, seed);
  std::vector<ExpState> out;
  for (int i = 0; i < n; ++i) out.push_back(p[(i * 5) % p.size()]);
  return out;
}

inline Word mat_word(const std::string& name, const Mat& M) { return Word{}.then(Factor::matrix(name, M)); }

inline SimpleBiprocess constant(const Word& f, Filter D, const Word& g, Filter E, int t_end) {
  return constant_biprocess(f, D, g, E, t_end);
}

// Bounded random step coefficient with filters drawn from P0.
inline SimpleBiprocess rand_bounded(const GridSpec& g, std::mt19937_64& rng, const std::vector<Filter>& P0) {
  std::uniform_int_distribution<size_t> pick(0, P0.size() - 1);
  std::uniform_int_distribution<int> cut(1, g.n_cells - 1), coin(0, 1);
  SimpleBiprocess X;
  X.coef = fftest::rand_c(rng) * 0.5;
  X.cuts = {0, cut(rng), g.n_cells};
  std::sort(X.cuts.begin(), X.cuts.end());
  X.cuts.erase(std::unique(X.cuts.begin(), X.cuts.end()), X.cuts.end());
  X.D = P0[pick(rng)];
  X.E = P0[pick(rng)];
  for (int j = 0; j < X.intervals(); ++j) {
    Word f = mat_word("F", fftest::rand_mat(g.h0_dim, rng, 0.7)), w = mat_word("G", fftest::rand_mat(g.h0_dim, rng, 0.7));
    if (coin(rng)) f = f.then(Factor::proj(fftest::rand_filter(g.n_colors, rng)));
    if (coin(rng)) w = w.then(Factor::proj(fftest::rand_filter(g.n_colors, rng)));
    X.F.push_back(f);
    X.G.push_back(w);
  }
  return X;
}

// Random collection closed under intersections with at most max_size members.
inline std::vector<Filter> rand_collection(const GridSpec& g, std::mt19937_64& rng, size_t max_size) {
  std::uniform_int_distribution<int> count(1, 3);
  for (;;) {
    std::vector<Filter> fs;
    int n = count(rng);
    for (int i = 0; i < n; ++i) fs.push_back(fftest::rand_filter(g.n_colors, rng));
    fs = intersection_closure(fs);
    if (fs.size() <= max_size) return fs;
  }
}

inline SDESystem rand_system(const GridSpec& g, std::mt19937_64& rng) {
  SDESystem s;
  s.P0 = rand_collection(g, rng, 4);
  std::uniform_int_distribution<int> nterms(1, 4);
  auto kinds = all_kinds(g.n_colors);
  std::uniform_int_distribution<size_t> kind(0, kinds.size() - 1);
  int n = nterms(rng);
  for (int i = 0; i < n; ++i) s.terms.push_back({kinds[kind(rng)], rand_bounded(g, rng, s.P0)});
  s.initial.assign(s.P0.size(), Mat());
  for (size_t v = 0; v < s.P0.size(); ++v)
    if (v + 1 == s.P0.size() || rng() % 2) s.initial[v] = fftest::rand_mat(g.h0_dim, rng, 0.8);
  return s;
}

inline std::pair<Filter, SpMat> component(const FockSpace& Fk, const Filter& V, const Mat& M, const Word& past, int t) {
  return {V, KronOp{M, SpMat(past.fock(Fk, t) * Fk.future_projection(V, t))}.materialize()};
}

// Random chain with the new-color condition over C colors.
inline std::vector<Filter> rand_chain(int C, std::mt19937_64& rng) {
  std::vector<int> colors(C);
  std::iota(colors.begin(), colors.end(), 1);
  std::shuffle(colors.begin(), colors.end(), rng);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<Filter> out;
  Filter acc = coin(rng) ? Filter::empty() : Filter::of({colors[0]});
  if (!acc.empty_set()) colors.erase(colors.begin());
  out.push_back(acc);
  for (int k : colors) {
    Filter next = coin(rng) ? acc.with(k) : Filter::of({k});  // not necessarily nested
    out.push_back(next);
    acc = acc | next;
  }
  return out;
}

inline MFreeSystem rand_mfree(const GridSpec& g, std::mt19937_64& rng, int n_terms = 1) {
  MFreeSystem s;
  std::vector<Filter> filters{Filter::full(), Filter::of({1}), Filter::of({1, 2}), Filter::of({2})};
  for (auto& X : s.X)
    for (int i = 0; i < n_terms; ++i) X.terms.push_back(rand_bounded(g, rng, filters));
  s.initial = {{Filter::full(), Mat::Identity(g.h0_dim, g.h0_dim)}};
  return s;
}

// I(c+1) = exp(Δ K_c) I(c) + Σ F Δl G I(c) with the m-free increments themselves.
inline std::vector<std::vector<Vec>> mfree_direct(const FockSpace& Fk, const MFreeSystem& s, int m, const std::vector<Vec>& xs) {
  const GridSpec& g = Fk.grid();
  const int d = g.h0_dim;
  std::vector<std::vector<Vec>> paths;
  for (auto& x : xs) paths.push_back({x});
  SpMat Pm = kron(Mat::Identity(d, d), Fk.projection(Filter::first(m - 1)));
  for (int c = 0; c < g.n_cells; ++c) {
    Mat E = (Mat(sandwich(Fk, s.X[3], c, &Pm)) * g.delta()).exp();
    SpMat noise(Fk.full_dim(), Fk.full_dim());
    for (int i = 0; i < 3; ++i) {
      SpMat inc = kron(Mat::Identity(d, d), mfree_increment(Fk, MFreeKind{m, mfree_sort_of(i)}, c, c + 1));
      noise += sandwich(Fk, s.X[i], c, &inc);
    }
    for (auto& p : paths) p.push_back(E * p.back() + noise * p.back());
  }
  return paths;
}

// Coefficients whose F ranges lie in colors 1..p.
inline MFreeSystem supported_mfree(const GridSpec& g, std::mt19937_64& rng, int p) {
  MFreeSystem s;
  Filter lim = Filter::first(p);
  for (auto& X : s.X) {
    SimpleBiprocess t = rand_bounded(g, rng, {Filter::full(), lim});
    t.D = lim;
    for (auto& w : t.F) w = w.then(Factor::proj(lim));
    X.terms.push_back(t);
  }
  s.initial = {{Filter::full(), Mat::Identity(g.h0_dim, g.h0_dim)}};
  return s;
}

inline Mat unitary2(double a, double b) {
  Mat U(2, 2);
  U << std::cos(a), -std::sin(a) * std::polar(1.0, b), std::sin(a) * std::polar(1.0, -b), std::cos(a);
  return U;
}

inline SDESystem sample_hp(const GridSpec& g, double l) {
  std::vector<Mat> L, S;
  for (int k = 1; k <= g.n_colors; ++k) {
    Mat Lk(2, 2);
    Lk << 0, l / k, 0.5 * l / k, 0;
    L.push_back(Lk);
    S.push_back(unitary2(0.4 * k, 0.3));
  }
  Mat H(2, 2);
  H << 1, cplx(0.2, 0.1), cplx(0.2, -0.1), -1;
  return hp_system(g, L, S, H);
}

// F3 = G3 = 0, F2 = G1 = 1, F1 = -G2*, G4 = 1 and F4 = -iH - ½ G̃2*G̃2 P^(1..p).
inline MFreeSystem unitary_mfree(const GridSpec& g, int p, const Mat& M, const Mat& H) {
  const int d = g.h0_dim;
  Filter lim = Filter::first(p);
  auto id = Word{};
  MFreeSystem s;
  Word g2 = mat_word("M", M).then(Factor::proj(lim));
  Word f1 = Word{}.then(Factor::proj(lim)).then(Factor::matrix("-M*", -M.adjoint()));
  s.X[0].terms.push_back(constant(f1, lim, id, Filter::full(), g.n_cells));
  s.X[1].terms.push_back(constant(id, Filter::full(), g2, lim, g.n_cells));
  s.X[3].terms.push_back(constant(mat_word("-iH", cplx(0, -1) * H), Filter::full(), id, Filter::full(), g.n_cells));
  s.X[3].terms.push_back(constant(mat_word("-M*M/2", -0.5 * M.adjoint() * M).then(Factor::proj(lim)), lim, id,
                                  Filter::full(), g.n_cells));
  s.initial = {{Filter::full(), Mat::Identity(d, d)}};
  return s;
}

}  // namespace fftest

#endif  // FILTERED_FOCK_TESTS_SDE_FIXTURES_HPP
