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

#include "filtered_fock/biprocess.hpp"
#include "filtered_fock/processes.hpp"
#include "test_util.hpp"

using namespace ffock;
using fftest::partial_exp;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.n_cells = 4;
  return g;
}

double spdiff(const SpMat& a, const SpMat& b) { return max_abs(SpMat(a - b)); }

std::vector<Filter> all_filters(int C) {
  std::vector<Filter> v;
  for (uint32_t m = 0; m < (1u << C); ++m) v.push_back(Filter::from_mask(m));
  v.push_back(Filter::full());
  return v;
}

}  // namespace

TEST(ProcessKind, DualIsInvolution) {
  for (auto eta : all_kinds(3)) {
    EXPECT_EQ(eta.dual().dual(), eta);
  }
  EXPECT_EQ(ProcessKind::ann(2).dual(), ProcessKind::cre(2));
  EXPECT_EQ(ProcessKind::num(1).dual(), ProcessKind::num(1));
  EXPECT_EQ(ProcessKind::cre(3).dsl(), "dA*(3)");
  EXPECT_EQ(ProcessKind::time().dsl(), "dT");
}

TEST(Fundamental, TimeAndVacuum) {
  FockSpace F(small_grid());
  for (int t = 0; t <= 4; ++t) {
    EXPECT_EQ(spdiff(fundamental(F, ProcessKind::time(), t), F.identity() * cplx(t * 0.25)), 0.0);
    for (int k = 1; k <= 3; ++k) {
      EXPECT_EQ((fundamental(F, ProcessKind::ann(k), t) * F.vacuum()).norm(), 0.0);
      EXPECT_EQ((fundamental(F, ProcessKind::num(k), t) * F.vacuum()).norm(), 0.0);
    }
  }
  for (auto eta : all_kinds(3))
    if (!eta.is_time()) EXPECT_EQ(fundamental(F, eta, 0).nonZeros(), 0);
  EXPECT_THROW(fundamental(F, ProcessKind::cre(1), 5), std::out_of_range);
  EXPECT_THROW(fundamental(F, ProcessKind::cre(4), 2), std::out_of_range);
}

TEST(Fundamental, NumberMatrixElement) {
  std::mt19937_64 rng(1);
  GridSpec g = small_grid();
  FockSpace F(g);
  auto u = fftest::rand_u(g, rng, 1.0), v = fftest::rand_u(g, rng, 1.0);
  Vec eu = F.exponential(u), ev = F.exponential(v);
  for (int k = 1; k <= 3; ++k) {
    cplx mu = 0;
    for (int c = 0; c < 3; ++c) mu += std::conj(u.at(c, k)) * v.at(c, k) * g.delta();
    cplx got = eu.dot(fundamental(F, ProcessKind::num(k), 3) * ev);
    EXPECT_LT(std::abs(got - mu * partial_exp(u.inner(v), g.n_max - 1)), 1e-14);
  }
}

TEST(Filtered, CreationOnVacuumProjection) {
  GridSpec g = small_grid();
  FockSpace F(g);
  SpMat A = filtered(F, {ProcessKind::cre(2), Filter::empty()}, 3);
  Vec out = A * F.vacuum();
  Vec want = F.creation(2, 0, 3) * F.vacuum();
  EXPECT_EQ((out - want).norm(), 0.0);
  EXPECT_NEAR(out.squaredNorm(), 0.75, 1e-15);  // ‖χ_[0,0.75) ⊗ e_2‖²
  for (int s = 1; s < F.dim(); ++s) {
    Vec e = Vec::Zero(F.dim());
    e(s) = 1;
    ASSERT_EQ((A * e).norm(), 0.0);
  }
}

TEST(Filtered, AnnihilationProjectsOutput) {
  std::mt19937_64 rng(2);
  GridSpec g = small_grid();
  FockSpace F(g);
  OneParticleVector u(g);
  for (int c = 0; c < 4; ++c) {
    u.at(c, 1) = 0.3 * fftest::rand_c(rng);
    u.at(c, 2) = 0.3 * fftest::rand_c(rng);
  }
  SpMat A = filtered(F, {ProcessKind::ann(2), Filter::of({1})}, 4);
  Vec out = A * F.exponential(u);
  EXPECT_GT(out.norm(), 1e-3);
  EXPECT_EQ(spdiff(A, SpMat(F.projection(Filter::of({1})) * F.annihilation(2, 0, 4))), 0.0);
}

TEST(Filtered, TimeAndNumberFilters) {
  FockSpace F(small_grid());
  for (auto V : all_filters(3)) {
    EXPECT_EQ(spdiff(filtered(F, {ProcessKind::time(), V}, 2), SpMat(F.projection(V) * cplx(0.5))), 0.0);
    for (int k = 1; k <= 3; ++k) {
      SpMat N = filtered(F, {ProcessKind::num(k), V}, 3);
      EXPECT_EQ(spdiff(N, SpMat(F.number(k, 0, 3) * F.projection(V.with(k)))), 0.0);
    }
  }
  EXPECT_TRUE((FilteredKind{ProcessKind::num(2), Filter::empty()}.effective() == Filter::of({2})));
}

TEST(Filtered, AdjointPairsAndAdditivity) {
  FockSpace F(small_grid());
  for (auto V : all_filters(3))
    for (int k = 1; k <= 3; ++k) {
      SpMat c = filtered(F, {ProcessKind::cre(k), V}, 3), a = filtered(F, {ProcessKind::ann(k), V}, 3);
      EXPECT_EQ(spdiff(SpMat(c.adjoint()), a), 0.0);
      SpMat n = filtered(F, {ProcessKind::num(k), V}, 3);
      EXPECT_EQ(spdiff(SpMat(n.adjoint()), n), 0.0);
      for (auto eta : {ProcessKind::cre(k), ProcessKind::ann(k), ProcessKind::num(k)}) {
        FilteredKind fk{eta, V};
        SpMat diff = filtered(F, fk, 4) - filtered(F, fk, 1);
        EXPECT_EQ(spdiff(diff, filtered_increment(F, fk, 1, 4)), 0.0);
      }
    }
}

TEST(Filtered, ValuesAreAdapted) {
  GridSpec g = small_grid();
  g.n_max = 2;
  FockSpace F(g);
  Mat I = Mat::Identity(g.h0_dim, g.h0_dim);
  for (auto V : all_filters(3))
    for (int k = 1; k <= 3; ++k)
      for (auto eta : {ProcessKind::cre(k), ProcessKind::ann(k), ProcessKind::num(k), ProcessKind::time()}) {
        FilteredKind fk{eta, V};
        SpMat H = kron(I, filtered(F, fk, 2));
        for (int t = 2; t <= 4; ++t) ASSERT_TRUE(check_adapted(F, H, t, fk.effective()).ok);
      }
}

TEST(MFree, Expansions) {
  auto e = expansion({2, MFreeSort::Cre});
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].eta, ProcessKind::cre(1));
  EXPECT_TRUE(e[0].proj.label() == Filter::empty());
  EXPECT_EQ(e[1].eta, ProcessKind::cre(2));
  EXPECT_TRUE(e[1].proj.label() == Filter::of({1}));
  EXPECT_TRUE(e[1].proj.is_band);

  auto t = expansion({1, MFreeSort::Time});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].eta, ProcessKind::time());
  EXPECT_FALSE(t[0].proj.is_band);
  EXPECT_TRUE(t[0].proj.filter == Filter::empty());

  auto n = expansion({2, MFreeSort::Num});
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n[0].eta, ProcessKind::num(1));
  EXPECT_TRUE(n[0].proj.label() == Filter::of({1}));
  EXPECT_EQ(n[1].eta, ProcessKind::num(2));
  EXPECT_TRUE(n[1].proj.label() == Filter::of({1, 2}));
  EXPECT_TRUE(n[1].proj.is_band);

  EXPECT_THROW(expansion({MFreeKind::kInf, MFreeSort::Cre}), std::invalid_argument);
  EXPECT_EQ((MFreeKind{3, MFreeSort::Num}.dsl()), "lN(3)");
}

TEST(MFree, BooleanCreationAndVacuum) {
  FockSpace F(small_grid());
  SpMat l1 = mfree(F, {1, MFreeSort::Cre}, 3);
  EXPECT_EQ(spdiff(l1, SpMat(F.creation(1, 0, 3) * F.projection(Filter::empty()))), 0.0);
  for (int m = 1; m <= 3; ++m) EXPECT_EQ((mfree(F, {m, MFreeSort::Ann}, 4) * F.vacuum()).norm(), 0.0);
  EXPECT_THROW(mfree(F, {4, MFreeSort::Cre}, 2), std::out_of_range);
  EXPECT_THROW(mfree(F, {MFreeKind::kInf, MFreeSort::Cre}, 2), std::invalid_argument);
}

TEST(MFree, AdjointPairing) {
  FockSpace F(small_grid());
  for (int m = 1; m <= 3; ++m) {
    SpMat l = mfree(F, {m, MFreeSort::Ann}, 3), ls = mfree(F, {m, MFreeSort::Cre}, 3);
    EXPECT_EQ(spdiff(SpMat(l.adjoint()), ls), 0.0);
    SpMat ln = mfree(F, {m, MFreeSort::Num}, 3);
    EXPECT_EQ(spdiff(SpMat(ln.adjoint()), ln), 0.0);
  }
}

TEST(MFree, Additivity) {
  FockSpace F(small_grid());
  for (int m = 1; m <= 3; ++m)
    for (auto s : {MFreeSort::Ann, MFreeSort::Cre, MFreeSort::Num, MFreeSort::Time}) {
      MFreeKind mk{m, s};
      EXPECT_EQ(spdiff(SpMat(mfree(F, mk, 4) - mfree(F, mk, 2)), mfree_increment(F, mk, 2, 4)), 0.0);
    }
}

TEST(MFree, StabilizationOnBoundedSupport) {
  std::mt19937_64 rng(4);
  GridSpec g = small_grid();
  FockSpace F(g);
  OneParticleVector u(g);
  for (int c = 0; c < 4; ++c) u.at(c, 1) = 0.4 * fftest::rand_c(rng);
  Vec x = F.exponential(u);  // color support 1
  Vec ref = mfree(F, {2, MFreeSort::Cre}, 4) * x;
  EXPECT_EQ((mfree(F, {3, MFreeSort::Cre}, 4) * x - ref).norm(), 0.0);
  EXPECT_EQ((mfree(F, {MFreeKind::kInf, MFreeSort::Cre}, 4, 1) * x - ref).norm(), 0.0);
  EXPECT_GT((mfree(F, {1, MFreeSort::Cre}, 4) * x - ref).norm(), 1e-6);
}

TEST(MFree, SummandsAreAdapted) {
  GridSpec g = small_grid();
  g.n_max = 2;
  FockSpace F(g);
  Mat I = Mat::Identity(g.h0_dim, g.h0_dim);
  for (int m = 1; m <= 3; ++m)
    for (auto s : {MFreeSort::Ann, MFreeSort::Cre, MFreeSort::Num, MFreeSort::Time})
      for (auto& e : expansion({m, s}))
        for (auto [sign, V] : e.proj.signed_filters()) {
          FilteredKind fk{e.eta, V};
          ASSERT_TRUE(check_adapted(F, kron(I, filtered(F, fk, 2)), 3, fk.effective()).ok);
        }
}
