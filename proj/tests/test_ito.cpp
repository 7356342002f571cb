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

#include <gtest/gtest.h>

#include "filtered_fock/ito.hpp"
#include "test_util.hpp"

using namespace ffock;
using fftest::rand_simple;
using fftest::rand_state;

namespace {

GridSpec grid(int n_max) {
  GridSpec g;
  g.n_max = n_max;
  return g;
}

double spdiff(const SpMat& a, const SpMat& b) { return max_abs(SpMat(a - b)); }

const std::vector<MFreeSort> kSorts{MFreeSort::Ann, MFreeSort::Cre, MFreeSort::Num, MFreeSort::Time};

SimpleBiprocess identity_term(int n_cells) { return constant_biprocess(Word{}, Filter::full(), Word{}, Filter::full(), n_cells); }

}  // namespace

TEST(BosonTable, Entries) {
  using PK = ProcessKind;
  EXPECT_EQ(*boson_table(PK::ann(2), PK::cre(2)).kind, PK::time());
  EXPECT_EQ(*boson_table(PK::ann(1), PK::num(1)).kind, PK::ann(1));
  EXPECT_EQ(*boson_table(PK::num(3), PK::cre(3)).kind, PK::cre(3));
  EXPECT_EQ(*boson_table(PK::num(3), PK::num(3)).kind, PK::num(3));
  EXPECT_FALSE(boson_table(PK::ann(1), PK::cre(2)).kind);
  int nonzero = 0;
  for (auto a : all_kinds(3))
    for (auto b : all_kinds(3)) {
      auto p = boson_table(a, b);
      if (a.type == PK::Type::Cre || a.is_time() || b.is_time()) EXPECT_FALSE(p.kind) << a.dsl() << b.dsl();
      nonzero += p.kind.has_value();
    }
  EXPECT_EQ(nonzero, 4 * 3);
}

TEST(MFreeTable, Entries) {
  using S = MFreeSort;
  for (int m = 1; m <= 3; ++m) {
    auto p = mfree_table(S::Ann, S::Cre, m);
    EXPECT_TRUE((*p.kind == MFreeKind{m, S::Time}));
    EXPECT_EQ(*p.trace, PartialTrace::IP0);
    EXPECT_TRUE((*mfree_table(S::Num, S::Num, m).kind == MFreeKind{m, S::Num}));
    EXPECT_TRUE((*mfree_table(S::Ann, S::Num, m).kind == MFreeKind{m, S::Ann}));
    EXPECT_TRUE((*mfree_table(S::Num, S::Cre, m).kind == MFreeKind{m, S::Cre}));
    for (auto s : kSorts) {
      EXPECT_FALSE(mfree_table(S::Cre, s, m).kind);
      EXPECT_FALSE(mfree_table(S::Time, s, m).kind);
      EXPECT_FALSE(mfree_table(s, S::Time, m).kind);
      EXPECT_FALSE(mfree_table(s, S::Ann, m).kind);
    }
    for (auto [a, b] : {std::pair{S::Ann, S::Num}, {S::Num, S::Cre}, {S::Num, S::Num}})
      EXPECT_EQ(*mfree_table(a, b, m).trace, PartialTrace::IP1);
  }
  EXPECT_EQ(format_boson_table(), "dA1 dA2 | dA*(k) | dN(k)\ndA(k)   | dT     | dA(k)\ndN(k)   | dA*(k) | dN(k)\n");
  EXPECT_EQ(format_mfree_table(2),
            "dl1 dl2 | dl*(2) | dlN(2)\ndl(2) | dlT(2) [IP0] | dl(2) [IP1]\ndlN(2) | dl*(2) [IP1] | dlN(2) [IP1]\n");
}

TEST(ItoCorrection, AnnihilationNumber) {
  std::mt19937_64 rng(1);
  GridSpec g = grid(2);
  for (int trial = 0; trial < 20; ++trial) {
    SimpleBiprocess X1 = rand_simple(g, rng, false), X2 = rand_simple(g, rng, false);
    X1.E = Filter::of({1, 2});  // D1
    X2.D = Filter::of({2, 3});  // D2
    auto c = ito_correction(X1, ProcessKind::ann(2), X2, ProcessKind::num(2));
    ASSERT_TRUE(c.integrator);
    EXPECT_EQ(*c.integrator, ProcessKind::ann(2));
    ASSERT_EQ(c.on_right.terms.size(), 1u);
    const auto& R = c.on_right.terms[0];
    EXPECT_EQ(R.coef, X1.coef * X2.coef);
    EXPECT_TRUE(R.D == X1.D);
    EXPECT_TRUE(R.E == (Filter::of({2}) & X2.E));
    EXPECT_EQ(R.cuts.front(), 0);
    EXPECT_EQ(R.cuts.back(), std::min(X1.cuts.back(), X2.cuts.back()));
    for (int k : {1, 3}) {
      EXPECT_TRUE(ito_correction(X1, ProcessKind::ann(k), X2, ProcessKind::num(k)).on_right.terms.empty());
    }
    EXPECT_FALSE(ito_correction(X1, ProcessKind::cre(2), X2, ProcessKind::num(2)).integrator);
  }
}

// Largest gap between a and b over columns whose degree leaves room for
// `ladders` raising steps below the cutoff.
double low_degree_diff(const FockSpace& F, const SpMat& a, const SpMat& b, int ladders) {
  SpMat d = a - b;
  double m = 0;
  for (int col = 0; col < d.outerSize(); ++col) {
    if (F.degree(col % F.dim()) > F.grid().n_max - ladders) continue;
    for (SpMat::InnerIterator it(d, col); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

int ladder_count(const SimpleBiprocess& X) {
  int n = 0;
  for (auto* side : {&X.F, &X.G}) {
    int most = 0;
    for (auto& w : *side) most = std::max(most, w.ladders());
    n += most;
  }
  return n;
}

TEST(ItoCorrection, PlacementsAgree) {
  std::mt19937_64 rng(2);
  GridSpec g = grid(2);
  FockSpace F(g);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    SimpleBiprocess X1 = rand_simple(g, rng, true), X2 = rand_simple(g, rng, true);
    int k = 1 + trial % 3;
    for (auto e1 : {ProcessKind::ann(k), ProcessKind::num(k)})
      for (auto e2 : {ProcessKind::cre(k), ProcessKind::num(k)}) {
        auto c = ito_correction(X1, e1, X2, e2);
        if (c.on_right.terms.empty()) continue;
        SpMat a = integral_defining_sum(F, c.on_right, *c.integrator, 8);
        SpMat b = integral_defining_sum(F, c.on_left, *c.integrator, 8);
        ASSERT_LE(spdiff(a, b), 1e-13 * std::max(1.0, max_abs(a))) << trial << e1.dsl() << e2.dsl();
        ++checked;
      }
  }
  EXPECT_GT(checked, 50);
}

// Ladder words change degree, so the two orders see the cutoff at different
// points; below it the matrices agree.
TEST(ItoCorrection, PlacementsAgreeBelowCutoff) {
  std::mt19937_64 rng(12);
  GridSpec g = grid(3);
  FockSpace F(g);
  int checked = 0;
  for (int trial = 0; checked < 20 && trial < 400; ++trial) {
    SimpleBiprocess X1 = rand_simple(g, rng, false), X2 = rand_simple(g, rng, false);
    int lad = ladder_count(X1) + ladder_count(X2) + 1;
    if (lad > 3 || lad == 1) continue;
    int k = 1 + trial % 3;
    auto c = ito_correction(X1, ProcessKind::num(k), X2, ProcessKind::cre(k));
    if (c.on_right.terms.empty()) continue;
    SpMat a = integral_defining_sum(F, c.on_right, *c.integrator, 8);
    SpMat b = integral_defining_sum(F, c.on_left, *c.integrator, 8);
    ASSERT_LE(low_degree_diff(F, a, b, lad), 1e-13 * std::max(1.0, max_abs(a))) << trial;
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(FilteredIto, RandomPairsEveryGridTime) {
  std::mt19937_64 rng(3);
  GridSpec g = grid(2);
  FockSpace F(g);
  auto kinds = all_kinds(3);
  double worst = 0;
  for (int trial = 0; trial < 240; ++trial) {
    SimpleBiprocess X1 = rand_simple(g, rng, trial % 2 == 0), X2 = rand_simple(g, rng, trial % 2 == 0);
    ProcessKind e1, e2;
    if (trial % 3 == 0) {  // force a nontrivial cell of the table
      int k = 1 + rng() % 3;
      e1 = rng() % 2 ? ProcessKind::ann(k) : ProcessKind::num(k);
      e2 = rng() % 2 ? ProcessKind::cre(k) : ProcessKind::num(k);
    } else {
      e1 = kinds[rng() % kinds.size()];
      e2 = kinds[rng() % kinds.size()];
    }
    auto x = rand_state(g, rng), y = rand_state(g, rng);
    auto path = ito_check_path(F, x, {{e1, X1}}, {{e2, X2}}, 8, y);
    for (int t = 0; t <= 8; ++t) {
      ASSERT_LE(path[t].residual(), path[t].tau) << trial << " " << e1.dsl() << e2.dsl() << " t=" << t;
      worst = std::max(worst, path[t].residual() / path[t].tau);
    }
  }
  RecordProperty("worst_ratio", std::to_string(worst));
}

TEST(FilteredIto, CorrectionIsNeeded) {
  // Without the correction the identity fails by its full size.
  std::mt19937_64 rng(4);
  GridSpec g = grid(4);
  FockSpace F(g);
  auto X1 = identity_term(8), X2 = identity_term(8);
  auto x = rand_state(g, rng, 0.3), y = rand_state(g, rng, 0.3);
  auto r = ito_check(F, x, X1, ProcessKind::ann(1), X2, ProcessKind::cre(1), 8, y);
  EXPECT_LE(r.residual(), r.tau);
  EXPECT_NEAR(std::abs(r.correction - x.w.dot(y.w) * fftest::partial_exp(x.u.inner(y.u), 4)), 0.0, 1e-12);
  EXPECT_GT(std::abs(r.lhs - r.drift1 - r.drift2 - r.cross), 20 * r.tau);
}

TEST(FilteredIto, HigherCutoff) {
  std::mt19937_64 rng(5);
  GridSpec g = grid(3);
  FockSpace F(g);
  for (int trial = 0; trial < 24; ++trial) {
    int k = 1 + trial % 3;
    SimpleBiprocess X1 = rand_simple(g, rng, false), X2 = rand_simple(g, rng, false);
    auto e1 = trial % 2 ? ProcessKind::ann(k) : ProcessKind::num(k);
    auto e2 = trial % 4 < 2 ? ProcessKind::cre(k) : ProcessKind::num(k);
    auto x = rand_state(g, rng), y = rand_state(g, rng);
    auto r = ito_check(F, x, X1, e1, X2, e2, 8, y);
    ASSERT_LE(r.residual(), r.tau) << trial;
  }
}

TEST(FilteredIto, ProductAdaptedness) {
  GridSpec g = grid(2);
  g.n_cells = 4;
  FockSpace F(g);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 6; ++trial) {
    SimpleBiprocess X1 = rand_simple(g, rng, true), X2 = rand_simple(g, rng, true);
    X1.D = X1.E = X2.D = X2.E = Filter::full();
    for (int t = 1; t <= 4; ++t)
      EXPECT_TRUE(product_adapted(F, X1, ProcessKind::ann(1), X2, ProcessKind::cre(2), t).ok);
  }
}

TEST(PartialTrace, Examples) {
  GridSpec g = grid(2);
  g.n_cells = 4;
  FockSpace F(g);
  SpMat I = F.identity();
  SpMat ip0 = partial_trace(F, I, Filter::first(3), PartialTrace::IP0);
  EXPECT_EQ(spdiff(ip0, SpMat(F.band(0) + F.band(1) + F.band(2))), 0.0);
  EXPECT_EQ(spdiff(ip0, F.projection(Filter::first(2))), 0.0);
  for (int j = 0; j <= 3; ++j) {
    SpMat ip1 = partial_trace(F, F.band(j), Filter::first(3), PartialTrace::IP1);
    EXPECT_EQ(spdiff(ip1, j >= 1 ? F.band(j) : SpMat(F.dim(), F.dim())), 0.0) << j;
  }
  // IP0 - IP1 telescopes to the vacuum band minus the top band.
  std::mt19937_64 rng(7);
  Mat H = fftest::rand_mat(F.dim(), rng);
  SpMat Hs = H.sparseView();
  for (int r = 1; r <= 3; ++r) {
    SpMat d = partial_trace(F, Hs, Filter::first(r), PartialTrace::IP0) - partial_trace(F, Hs, Filter::first(r), PartialTrace::IP1);
    SpMat want = F.band(0) * Hs * F.band(0) - F.band(r) * Hs * F.band(r);
    EXPECT_LT(spdiff(d, want), 1e-14);
  }
  EXPECT_EQ(partial_trace(F, Hs, Filter::empty(), PartialTrace::IP0).nonZeros(), 0);
}

TEST(MFreeIntegral, BooleanCreation) {
  std::mt19937_64 rng(8);
  GridSpec g = grid(2);
  FockSpace F(g);
  SimpleBiprocess X = rand_simple(g, rng, false);
  Biprocess B(X);
  SpMat got = mfree_integral(F, B, {1, MFreeSort::Cre}, 8);
  Biprocess want = rewrite_filtered_integrand(B, {ProcessKind::cre(1), Filter::empty()});
  EXPECT_LT(spdiff(got, integral_defining_sum(F, want, ProcessKind::cre(1), 8)), 1e-15);
  for (auto& t : want.terms) EXPECT_TRUE(t.E.subset_of(Filter::empty()));
}

TEST(MFreeIntegral, TimeOfIdentity) {
  GridSpec g = grid(2);
  FockSpace F(g);
  for (int m = 1; m <= 3; ++m)
    for (int t : {0, 3, 8}) {
      SpMat got = mfree_integral(F, Biprocess(identity_term(8)), {m, MFreeSort::Time}, t);
      SpMat want = kron(Mat::Identity(2, 2), F.projection(Filter::first(m - 1))) * cplx(t * g.delta());
      EXPECT_LT(spdiff(got, want), 1e-15);
    }
}

TEST(MFreeIntegral, MatchesIncrementSum) {
  std::mt19937_64 rng(9);
  GridSpec g = grid(2);
  FockSpace F(g);
  for (int trial = 0; trial < 8; ++trial) {
    Biprocess B(rand_simple(g, rng, trial % 2 == 0));
    for (int m = 1; m <= 3; ++m)
      for (auto s : kSorts) {
        SpMat a = mfree_integral(F, B, {m, s}, 8), b = mfree_defining_sum(F, B, {m, s}, 8);
        ASSERT_LT(spdiff(a, b), 1e-13) << trial << " " << MFreeKind{m, s}.dsl();
      }
  }
  Biprocess B(rand_simple(g, rng, true));
  EXPECT_THROW(mfree_integral(F, B, {MFreeKind::kInf, MFreeSort::Cre}, 8), std::invalid_argument);
  EXPECT_LT(spdiff(mfree_integral(F, B, {MFreeKind::kInf, MFreeSort::Cre}, 8, 1),
                   mfree_integral(F, B, {2, MFreeSort::Cre}, 8)),
            1e-15);
}

TEST(MFreeMatrixElement, AgainstOracle) {
  std::mt19937_64 rng(10);
  GridSpec g = grid(3);
  FockSpace F(g);
  for (int trial = 0; trial < 16; ++trial) {
    Biprocess B(rand_simple(g, rng, trial % 2 == 0));
    auto x = rand_state(g, rng, 0.8), y = rand_state(g, rng, 0.8);
    Vec xv = x.materialize(F), yv = y.materialize(F);
    for (int m = 1; m <= 3; ++m)
      for (auto s : kSorts) {
        MFreeKind a{m, s};
        cplx fast = mfree_matrix_element(F, x, B, a, 8, y);
        cplx oracle = xv.dot(mfree_defining_sum(F, B, a, 8) * yv);
        ASSERT_LE(std::abs(fast - oracle), mfree_oracle_bound(F, x, B, a, 8, y).total()) << trial << " " << a.dsl();
      }
  }
}

// Pairing the number summand with the band P[k] misses the states of the
// band below k that the creation half of dA∘(k) lifts into P[k].
TEST(MFreeMatrixElement, BandPairingOfNumberDisagrees) {
  std::mt19937_64 rng(13);
  GridSpec g = grid(3);
  FockSpace F(g);
  auto x = rand_state(g, rng, 0.8), y = rand_state(g, rng, 0.8);
  Biprocess I(identity_term(8));
  MFreeKind a{2, MFreeSort::Num};
  cplx oracle = x.materialize(F).dot(mfree_defining_sum(F, I, a, 8) * y.materialize(F));
  double tau = mfree_oracle_bound(F, x, I, a, 8, y).total();
  EXPECT_LE(std::abs(mfree_matrix_element(F, x, I, a, 8, y) - oracle), tau);
  EXPECT_GT(std::abs(mfree_matrix_element(F, x, I, a, 8, y, std::nullopt, true) - oracle), 100 * tau);
}

TEST(MFreeMatrixElement, EmptyColorWindow) {
  std::mt19937_64 rng(11);
  GridSpec g = grid(2);
  FockSpace F(g);
  SimpleBiprocess X = identity_term(8);
  X.E = Filter::of({2});
  auto x = rand_state(g, rng), y = rand_state(g, rng);
  EXPECT_EQ(mfree_matrix_element(F, x, Biprocess(X), {1, MFreeSort::Ann}, 8, y), cplx(0));
  EXPECT_EQ(mfree_matrix_element(F, x, Biprocess(X), {2, MFreeSort::Ann}, 8, y), cplx(0));  // E = {2} from time 0 leaves band 1 empty
  X.E = Filter::of({1, 2});
  EXPECT_NE(mfree_matrix_element(F, x, Biprocess(X), {2, MFreeSort::Ann}, 8, y), cplx(0));
  // Time: ⟨x, F P^(m) G y⟩ µ^(0).
  Biprocess I(identity_term(8));
  for (int m = 1; m <= 3; ++m) {
    cplx got = mfree_matrix_element(F, x, I, {m, MFreeSort::Time}, 8, y);
    Vec Py = product_state(y.w, F.projection(Filter::first(m - 1)) * F.exponential(y.u));
    EXPECT_NEAR(std::abs(got - x.materialize(F).dot(Py)), 0.0, 1e-14);
  }
}

// The m-free table follows from the boson table and band algebra: the sum of
// the filtered corrections of the expanded processes equals the table entry.
TEST(MFreeTable, EmergesFromBosonTable) {
  GridSpec g = grid(2);
  FockSpace F(g);
  for (int m = 1; m <= 3; ++m)
    for (auto s1 : kSorts)
      for (auto s2 : kSorts) {
        auto f1 = mfree_family(identity_term(8), {m, s1}, g), f2 = mfree_family(identity_term(8), {m, s2}, g);
        SpMat pair = pairwise_correction(F, f1, f2, 8);
        auto prod = mfree_table(s1, s2, m);
        SpMat want = prod.kind ? mfree_integral(F, Biprocess(identity_term(8)), *prod.kind, 8)
                               : SpMat(F.full_dim(), F.full_dim());
        ASSERT_LT(spdiff(pair, want), 1e-14) << m << " " << MFreeKind{m, s1}.dsl() << MFreeKind{m, s2}.dsl();
      }
}

namespace {

// Integrands with one past ladder factor in F1 or F2 on the second interval.
std::vector<std::pair<SimpleBiprocess, SimpleBiprocess>> ladder_pairs() {
  std::vector<std::pair<SimpleBiprocess, SimpleBiprocess>> out;
  for (auto f : {Factor::cre(2), Factor::ann(1), Factor::cre(3)})
    for (int side = 0; side < 2; ++side) {
      SimpleBiprocess X1{1.0, {0, 2, 4}, {Word{}, Word{}}, {Word{}, Word{}}, Filter::full(), Filter::full()};
      SimpleBiprocess X2 = X1;
      (side == 0 ? X1.G[1] : X2.F[1]) = Word{}.then(f);
      out.push_back({X1, X2});
    }
  return out;
}

GridSpec short_grid(int n_max) {
  GridSpec g = grid(n_max);
  g.n_cells = 4;
  return g;
}

}  // namespace

// Every cell of the m-free table against the sum of the filtered corrections
// of the expanded integrals, as matrices below the cutoff.
TEST(MFreeIto, TableCorrectionWithLadderIntegrands) {
  GridSpec g = short_grid(3);
  FockSpace F(g);
  for (auto& [X1, X2] : ladder_pairs())
    for (int m = 1; m <= 3; ++m)
      for (auto s1 : kSorts)
        for (auto s2 : kSorts) {
          auto f1 = mfree_family(X1, {m, s1}, g), f2 = mfree_family(X2, {m, s2}, g);
          SpMat pair = pairwise_correction(F, f1, f2, 4);
          auto c = mfree_correction(X1, s1, X2, s2, m, g.n_colors);
          SpMat table = c.integrator ? mfree_integral(F, c.valid(), *c.integrator, 4) : SpMat(F.full_dim(), F.full_dim());
          ASSERT_LE(low_degree_diff(F, pair, table, 2), 1e-14) << m << MFreeKind{m, s1}.dsl() << MFreeKind{m, s2}.dsl();
        }
}

TEST(MFreeIto, TableCorrectionRandomFilters) {
  std::mt19937_64 rng(14);
  GridSpec g = short_grid(2);
  FockSpace F(g);
  for (int trial = 0; trial < 8; ++trial) {
    SimpleBiprocess X1 = rand_simple(g, rng, true), X2 = rand_simple(g, rng, true);
    for (int m = 1; m <= 3; ++m)
      for (auto s1 : kSorts)
        for (auto s2 : kSorts) {
          auto c = mfree_correction(X1, s1, X2, s2, m, g.n_colors);
          SpMat pair = pairwise_correction(F, mfree_family(X1, {m, s1}, g), mfree_family(X2, {m, s2}, g), 4);
          SpMat table = c.integrator ? mfree_integral(F, c.valid(), *c.integrator, 4) : SpMat(F.full_dim(), F.full_dim());
          ASSERT_LT(spdiff(pair, table), 1e-14) << trial;
        }
  }
}

// The IP1 cells that shift bands hold in one placement only.
TEST(MFreeIto, OtherPlacementFailsInBandShiftingCells) {
  GridSpec g = short_grid(3);
  FockSpace F(g);
  auto [X1, X2] = ladder_pairs()[0];
  for (auto [s1, s2] : {std::pair{MFreeSort::Ann, MFreeSort::Num}, {MFreeSort::Num, MFreeSort::Cre}}) {
    auto c = mfree_correction(X1, s1, X2, s2, 2, g.n_colors);
    ASSERT_NE(c.placement, Placement::Both);
    const Biprocess& other = c.placement == Placement::Right ? c.on_left : c.on_right;
    SpMat pair = pairwise_correction(F, mfree_family(X1, {2, s1}, g), mfree_family(X2, {2, s2}, g), 4);
    EXPECT_GT(low_degree_diff(F, pair, mfree_integral(F, other, *c.integrator, 4), 2), 0.1);
  }
  // The same holds with identity integrands: the k = 1 summand reaches the vacuum band.
  SimpleBiprocess I = constant_biprocess(Word{}, Filter::full(), Word{}, Filter::full(), 4);
  auto c = mfree_correction(I, MFreeSort::Ann, I, MFreeSort::Num, 1, g.n_colors);
  SpMat pair = pairwise_correction(F, mfree_family(I, {1, MFreeSort::Ann}, g), mfree_family(I, {1, MFreeSort::Num}, g), 4);
  EXPECT_LT(spdiff(pair, mfree_integral(F, c.on_right, *c.integrator, 4)), 1e-15);
  EXPECT_GT(spdiff(pair, mfree_integral(F, c.on_left, *c.integrator, 4)), 0.1);
}

// Short words keep the truncation tails small enough for the check to bind.
static SimpleBiprocess short_simple(const GridSpec& g, std::mt19937_64& rng, bool ladders) {
  std::uniform_int_distribution<int> col(1, g.n_colors), pick(0, ladders ? 3 : 1);
  auto word = [&] {
    switch (pick(rng)) {
      case 0: return Word{};
      case 1: return Word{}.then(Factor::num(col(rng)));
      case 2: return Word{}.then(Factor::cre(col(rng)));
      default: return Word{}.then(Factor::ann(col(rng)));
    }
  };
  SimpleBiprocess X{0.5 * fftest::rand_c(rng), {0, 2, g.n_cells}, {}, {}, Filter::full(), fftest::rand_filter(g.n_colors, rng)};
  for (int j = 0; j < 2; ++j) {
    X.F.push_back(word());
    X.G.push_back(word());
  }
  return X;
}

TEST(MFreeIto, MatrixElementsWithinBound) {
  std::mt19937_64 rng(15);
  GridSpec g = short_grid(3);
  FockSpace F(g);
  int nontrivial = 0;
  for (int trial = 0; trial < 12; ++trial) {
    SimpleBiprocess X1 = short_simple(g, rng, trial % 2), X2 = short_simple(g, rng, trial % 2);
    if (trial % 3 != 2) X1.E = X2.E = Filter::full();
    auto x = rand_state(g, rng), y = rand_state(g, rng);
    int m = 1 + trial % 3;
    for (auto s1 : kSorts)
      for (auto s2 : kSorts) {
        auto r = mfree_ito_check(F, x, X1, s1, X2, s2, m, 4, y);
        ASSERT_LE(r.residual(), r.tau) << trial << MFreeKind{m, s1}.dsl() << MFreeKind{m, s2}.dsl();
        if (trial % 2 == 0) ASSERT_LT(std::abs(r.table - r.filtered.correction), 1e-13);
        nontrivial += mfree_table(s1, s2, m).kind && std::abs(r.table) > 1e-8;
      }
  }
  EXPECT_GT(nontrivial, 10);
}
