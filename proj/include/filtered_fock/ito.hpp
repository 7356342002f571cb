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

#ifndef FILTERED_FOCK_ITO_HPP
#define FILTERED_FOCK_ITO_HPP

#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "filtered_fock/integrate.hpp"

namespace ffock {

// ---- Itô tables ----

// Product of two differentials; an empty kind is a structural zero.
struct ItoProduct {
  std::optional<ProcessKind> kind;
};

// dA^η1 dA^η2 for the CCR processes (nontrivial part only).
inline ItoProduct boson_table(const ProcessKind& e1, const ProcessKind& e2) {
  using T = ProcessKind::Type;
  if (e1.is_time() || e2.is_time() || e1.k != e2.k) return {};
  int k = e1.k;
  if (e1.type == T::Ann && e2.type == T::Cre) return {ProcessKind::time()};
  if (e1.type == T::Ann && e2.type == T::Num) return {ProcessKind::ann(k)};
  if (e1.type == T::Num && e2.type == T::Cre) return {ProcessKind::cre(k)};
  if (e1.type == T::Num && e2.type == T::Num) return {ProcessKind::num(k)};
  return {};
}

enum class PartialTrace { IP0, IP1 };

inline std::string trace_name(PartialTrace p) { return p == PartialTrace::IP0 ? "IP0" : "IP1"; }

struct MFreeProduct {
  std::optional<MFreeKind> kind;
  std::optional<PartialTrace> trace;  // assignment used by the m-free Itô formula
};

// dl^α1 dl^α2 at level m.
inline MFreeProduct mfree_table(MFreeSort s1, MFreeSort s2, int m) {
  using S = MFreeSort;
  if (s1 == S::Ann && s2 == S::Cre) return {MFreeKind{m, S::Time}, PartialTrace::IP0};
  if (s1 == S::Ann && s2 == S::Num) return {MFreeKind{m, S::Ann}, PartialTrace::IP1};
  if (s1 == S::Num && s2 == S::Cre) return {MFreeKind{m, S::Cre}, PartialTrace::IP1};
  if (s1 == S::Num && s2 == S::Num) return {MFreeKind{m, S::Num}, PartialTrace::IP1};
  return {};
}

// Row/column layout: rows are the left differential, columns the right one.
inline std::string format_boson_table() {
  std::ostringstream os;
  os << "dA1 dA2 | dA*(k) | dN(k)\n";
  os << "dA(k)   | dT     | dA(k)\n";
  os << "dN(k)   | dA*(k) | dN(k)\n";
  return os.str();
}

inline std::string format_mfree_table(int m) {
  std::string l = std::to_string(m);
  auto cell = [&](MFreeSort a, MFreeSort b) {
    auto p = mfree_table(a, b, m);
    return "d" + p.kind->dsl() + " [" + trace_name(*p.trace) + "]";
  };
  std::ostringstream os;
  os << "dl1 dl2 | dl*(" << l << ") | dlN(" << l << ")\n";
  os << "dl(" << l << ") | " << cell(MFreeSort::Ann, MFreeSort::Cre) << " | " << cell(MFreeSort::Ann, MFreeSort::Num)
     << "\n";
  os << "dlN(" << l << ") | " << cell(MFreeSort::Num, MFreeSort::Cre) << " | " << cell(MFreeSort::Num, MFreeSort::Num)
     << "\n";
  return os.str();
}

// ---- partial traces ----

// Bands sandwiching H: P[k-1] for IP0 and P[k] for IP1, k in V ∩ {1..C}.
inline std::vector<int> trace_bands(const Filter& V, PartialTrace which, int n_colors) {
  std::vector<int> out;
  for (int k = 1; k <= n_colors; ++k)
    if (V.contains(k)) out.push_back(which == PartialTrace::IP0 ? k - 1 : k);
  return out;
}

// Σ_k P[b_k] H P[b_k] on the Fock factor.
inline SpMat partial_trace(const FockSpace& Fk, const SpMat& H, const Filter& V, PartialTrace which) {
  SpMat out(H.rows(), H.cols());
  for (int b : trace_bands(V, which, Fk.grid().n_colors)) {
    SpMat P = Fk.band(b);
    out += SpMat(P * H * P);
  }
  return out;
}

// ---- common partitions ----

// Both biprocesses on the union of their partitions, cut at the earlier end.
inline std::pair<SimpleBiprocess, SimpleBiprocess> on_common_partition(const SimpleBiprocess& a,
                                                                      const SimpleBiprocess& b) {
  int end = std::min(a.cuts.back(), b.cuts.back());
  std::vector<int> c = a.cuts;
  c.insert(c.end(), b.cuts.begin(), b.cuts.end());
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  auto cut = [&](const SimpleBiprocess& x) {
    SimpleBiprocess r = x.refined(c);
    while (r.cuts.back() > end) {
      r.cuts.pop_back();
      r.F.pop_back();
      r.G.pop_back();
    }
    return r;
  };
  return {cut(a), cut(b)};
}

// ---- filtered Itô correction ----

// I1 = ∫ G1 ⊗ F1 # dA^η1 is stored as a SimpleBiprocess with words (G1, F1)
// and filters (E1, D1); I2 = ∫ F2 ⊗ G2 # dA^η2 with filters (D2, E2).
struct ItoCorrection {
  std::optional<ProcessKind> integrator;
  Biprocess on_right;  // G1 ⊗ ρ(F1F2) G2
  Biprocess on_left;   // G1 ρ(F1F2) ⊗ G2
};

inline ItoCorrection ito_correction(const SimpleBiprocess& X1, const ProcessKind& e1, const SimpleBiprocess& X2,
                                    const ProcessKind& e2) {
  ItoCorrection r;
  r.integrator = boson_table(e1, e2).kind;
  if (!r.integrator) return r;
  const Filter E1 = X1.D, D1 = X1.E, D2 = X2.D, E2 = X2.E;
  if (!(D1 & D2).contains(e1.k)) return r;
  auto [a, b] = on_common_partition(X1, X2);
  SimpleBiprocess R{a.coef * b.coef, a.cuts, {}, {}, E1, D1 & D2 & E2};
  SimpleBiprocess L{a.coef * b.coef, a.cuts, {}, {}, E1 & D1 & D2, E2};
  for (int j = 0; j < a.intervals(); ++j) {
    R.F.push_back(a.F[j]);
    R.G.push_back(a.G[j] * b.F[j] * b.G[j]);
    L.F.push_back(a.F[j] * a.G[j] * b.F[j]);
    L.G.push_back(b.G[j]);
  }
  r.on_right = Biprocess(R);
  r.on_left = Biprocess(L);
  return r;
}

// ---- Itô formula on matrix elements ----

// Σ_p ∫ X_p # dA^{η_p}, one entry per simple term.
using IntegralFamily = std::vector<std::pair<ProcessKind, SimpleBiprocess>>;

inline IntegralFamily flatten(const std::vector<std::pair<ProcessKind, Biprocess>>& fam) {
  IntegralFamily out;
  for (auto& [eta, X] : fam)
    for (auto& t : X.terms) out.push_back({eta, t});
  return out;
}

// I(c)^* x for c = 0..n_cells.
inline std::vector<Vec> adjoint_path(const FockSpace& Fk, const SimpleBiprocess& X, const ProcessKind& eta,
                                     const Vec& x) {
  const int N = Fk.grid().n_cells;
  std::vector<Vec> path(N + 1, Vec::Zero(x.size()));
  for (int c = 0; c < N; ++c) {
    path[c + 1] = path[c];
    int j = X.interval_of(c);
    if (j < 0) continue;
    Vec z = X.left(Fk, j).adjoint().apply(x);
    z = increment_op(Fk, eta, c, c + 1).adjoint().apply(z);
    path[c + 1] += std::conj(X.coef) * X.right(Fk, j).adjoint().apply(z);
  }
  return path;
}

inline Vec adjoint_product_apply(const FockSpace& Fk, const SimpleBiprocess& X, int cell, const Vec& x) {
  int j = X.interval_of(cell);
  if (j < 0) return Vec::Zero(x.size());
  return std::conj(X.coef) * X.right(Fk, j).adjoint().apply(X.left(Fk, j).adjoint().apply(x));
}

struct ItoCheck {
  cplx lhs = 0;         // <x, I1(t) I2(t) y> on the truncated space
  cplx drift2 = 0;      // ∫ <x, I1 F2 G2 y> dµ2
  cplx drift1 = 0;      // ∫ <x, G1 F1 I2 y> dµ1
  cplx cross = 0;       // within-cell motion of both integrals
  cplx correction = 0;  // Itô correction
  double tau = 0;
  cplx rhs() const { return drift1 + drift2 + cross + correction; }
  double residual() const { return std::abs(lhs - rhs()); }
};

// <x, I1(t) I2(t) y> against I1 dI2 + dI1 I2 + dI1 dI2 with the filtered
// correction G1 ⊗ ρ F1F2 G2 # d[[A^η1, A^η2]] for each pair of terms, at
// every grid time 0..t_max.
inline std::vector<ItoCheck> ito_check_path(const FockSpace& Fk, const ExpState& x, const IntegralFamily& fam1,
                                            const IntegralFamily& fam2, int t_max, const ExpState& y) {
  const GridSpec& g = Fk.grid();
  check_time(g, t_max);
  Vec xv = x.materialize(Fk), yv = y.materialize(Fk);
  std::vector<std::vector<Vec>> P1, P2;
  for (auto& [eta, X] : fam1) P1.push_back(adjoint_path(Fk, X, eta, xv));
  for (auto& [eta, X] : fam2) P2.push_back(integral_path(Fk, Biprocess(X), eta, yv));
  std::vector<ItoCheck> out(t_max + 1);
  for (int t = 0; t <= t_max; ++t) {
    Vec a = Vec::Zero(xv.size()), b = Vec::Zero(yv.size());
    for (auto& p : P1) a += p[t];
    for (auto& q : P2) b += q[t];
    out[t].lhs = a.dot(b);
  }
  std::vector<std::vector<TailTerm>> ts(t_max + 1);
  std::vector<double> scale(t_max + 1, 0.0);
  for (size_t p = 0; p < fam1.size(); ++p)
    for (size_t q = 0; q < fam2.size(); ++q) {
      const auto& [e1, X1] = fam1[p];
      const auto& [e2, X2] = fam2[q];
      const Filter E1 = X1.D, D1 = X1.E, D2 = X2.D, E2 = X2.E;
      MeasureDensity m1 = mu(e1, x.u, y.u) * cplx(multiplier(e1, E1, D1 & D2 & E2));
      MeasureDensity m2 = mu(e2, x.u, y.u) * cplx(multiplier(e2, D1 & D2 & E1, E2));
      auto prod = boson_table(e1, e2).kind;
      bool rho = prod && (D1 & D2).contains(e1.k);
      MeasureDensity m12 = rho ? mu(*prod, x.u, y.u) * cplx(multiplier(*prod, E1, D1 & D2 & E2))
                               : MeasureDensity::zero(g);
      Biprocess B1(X1), B2(X2);
      TailTerm V1 = product_tail(B1, g), V2 = product_tail(B2, g);
      ItoCheck acc;
      double s1 = 0, s2 = 0, s12 = 0;
      for (int c = 0; c < t_max; ++c) {
        Vec b1 = adjoint_product_apply(Fk, X1, c, xv), b2 = product_apply(Fk, X2, c, yv);
        cplx a1 = m1.mass_of_cell(c), a2 = m2.mass_of_cell(c), a12 = m12.mass_of_cell(c);
        cplx bb = b1.dot(b2);
        acc.drift2 += a2 * P1[p][c].dot(b2);
        acc.drift1 += a1 * b1.dot(P2[q][c]);
        acc.cross += a1 * a2 * bb;
        acc.correction += a12 * bb;
        s1 += std::abs(a1);
        s2 += std::abs(a2);
        s12 += std::abs(a12);
        ItoCheck& o = out[c + 1];
        o.drift1 += acc.drift1;
        o.drift2 += acc.drift2;
        o.cross += acc.cross;
        o.correction += acc.correction;
        TailTerm I1 = integral_tail(B1, e1, c + 1, g), I2 = integral_tail(B2, e2, c + 1, g);
        for (auto tt : {I1 * I2, (V1 * I2).scaled(s1), (I1 * V2).scaled(s2), (V1 * V2).scaled(s1 * s2 + s12)}) {
          ts[c + 1].push_back(tt);
          scale[c + 1] += tt.K * std::pow(std::max(1, g.n_max + tt.L), 0.5 * tt.P);
        }
      }
    }
  for (int t = 0; t <= t_max; ++t)
    out[t].tau = tail_bound(ts[t], x, y, g.n_max) + 1e-12 * (1 + scale[t] * xv.norm() * yv.norm());
  return out;
}

inline ItoCheck ito_check(const FockSpace& Fk, const ExpState& x, const IntegralFamily& fam1,
                          const IntegralFamily& fam2, int t, const ExpState& y) {
  return ito_check_path(Fk, x, fam1, fam2, t, y)[t];
}

inline ItoCheck ito_check(const FockSpace& Fk, const ExpState& x, const SimpleBiprocess& X1, const ProcessKind& e1,
                          const SimpleBiprocess& X2, const ProcessKind& e2, int t, const ExpState& y) {
  return ito_check(Fk, x, IntegralFamily{{e1, X1}}, IntegralFamily{{e2, X2}}, t, y);
}

// Whether I1(t) I2(t) is D1 ∩ D2 ∩ E1 ∩ E2-adapted, the hypothesis of the formula.
inline AdaptednessResult product_adapted(const FockSpace& Fk, const SimpleBiprocess& X1, const ProcessKind& e1,
                                         const SimpleBiprocess& X2, const ProcessKind& e2, int t) {
  SpMat I1 = integral_defining_sum(Fk, Biprocess(X1), e1, t);
  SpMat I2 = integral_defining_sum(Fk, Biprocess(X2), e2, t);
  return check_adapted(Fk, SpMat(I1 * I2), t, X1.D & X1.E & X2.D & X2.E);
}

// ---- m-free integrals ----

// X[η, V] for every summand (η, V) ~ α.
inline std::vector<std::pair<ProcessKind, Biprocess>> mfree_pieces(const Biprocess& X, const MFreeKind& alpha,
                                                                    const GridSpec& g,
                                                                    std::optional<int> support_bound = std::nullopt) {
  MFreeKind fin{resolve_level(alpha, g, support_bound), alpha.sort};
  std::vector<std::pair<ProcessKind, Biprocess>> out;
  for (auto& e : expansion(fin)) out.push_back({e.eta, rewrite_projected(X, e.eta, e.proj)});
  return out;
}

// ∫_0^t X # dl^α as a matrix, through the filtered pieces.
inline SpMat mfree_integral(const FockSpace& Fk, const Biprocess& X, const MFreeKind& alpha, int t,
                            std::optional<int> support_bound = std::nullopt) {
  SpMat out(Fk.full_dim(), Fk.full_dim());
  for (auto& [eta, Y] : mfree_pieces(X, alpha, Fk.grid(), support_bound)) out += integral_defining_sum(Fk, Y, eta, t);
  return out;
}

// Σ_j F(t_j) (l^α_{t_{j+1}∧t} - l^α_{t_j∧t}) G(t_j) with the m-free increments themselves.
inline SpMat mfree_defining_sum(const FockSpace& Fk, const Biprocess& X, const MFreeKind& alpha, int t,
                                std::optional<int> support_bound = std::nullopt) {
  check_time(Fk.grid(), t);
  const int h = Fk.grid().h0_dim;
  SpMat out(Fk.full_dim(), Fk.full_dim());
  for (int c = 0; c < t; ++c)
    for (auto& term : X.terms) {
      int j = term.interval_of(c);
      if (j < 0) continue;
      KronOp inc{Mat::Identity(h, h), mfree_increment(Fk, alpha, c, c + 1, support_bound)};
      out += (term.left(Fk, j) * inc * term.right(Fk, j)).materialize() * term.coef;
    }
  return out;
}

// One summand of the m-free measure: µ^η paired with a projection between F and G.
struct MFreeMeasureTerm {
  ProcessKind eta;
  ProjDesc proj;
};

// Summands of ν̂^α for (D, E)-adapted integrands; colors restricted to D(m), E(m).
// The number summand pairs with P^{1..k} rather than the band P[k]: the
// creation half of dA∘(k) does not commute with P[k], and P[k] a*(k) = a*(k) P^{1..k}.
// `band_number` keeps the band pairing for comparison.
inline std::vector<MFreeMeasureTerm> mfree_measure(const MFreeKind& alpha, const Filter& D, const Filter& E, int m,
                                                   bool band_number = false) {
  std::vector<MFreeMeasureTerm> out;
  for (int k = 1; k <= m; ++k) {
    switch (alpha.sort) {
      case MFreeSort::Ann:
        if (E.contains(k)) out.push_back({ProcessKind::ann(k), ProjDesc::of_band(k - 1)});
        break;
      case MFreeSort::Cre:
        if (D.contains(k)) out.push_back({ProcessKind::cre(k), ProjDesc::of_band(k - 1)});
        break;
      case MFreeSort::Num:
        if (D.contains(k) && E.contains(k))
          out.push_back({ProcessKind::num(k), band_number ? ProjDesc::of_band(k) : ProjDesc::of_filter(Filter::first(k))});
        break;
      default: break;
    }
  }
  if (alpha.sort == MFreeSort::Time) out.push_back({ProcessKind::time(), ProjDesc::of_filter(Filter::first(m - 1))});
  return out;
}

// <x, ∫_0^t X # dl^α y> = ∫ (x, F ⊗ G y) # dν̂^α.
inline cplx mfree_matrix_element(const FockSpace& Fk, const ExpState& x, const Biprocess& X, const MFreeKind& alpha,
                                 int t, const ExpState& y, std::optional<int> support_bound = std::nullopt,
                                 bool band_number = false) {
  check_time(Fk.grid(), t);
  const int m = resolve_level(alpha, Fk.grid(), support_bound);
  const int h = Fk.grid().h0_dim;
  Vec xv = x.materialize(Fk), yv = y.materialize(Fk);
  cplx s = 0;
  for (auto& term : X.terms)
    for (auto& mt : mfree_measure(alpha, term.D, term.E, m, band_number)) {
      MeasureDensity dens = mu(mt.eta, x.u, y.u);
      KronOp P{Mat::Identity(h, h), mt.proj.matrix(Fk)};
      for (int j = 0; j < term.intervals(); ++j) {
        auto [c0, c1] = clipped(term, j, t);
        if (c1 <= c0) continue;
        cplx mass = dens.mass(c0, c1);
        if (mass == cplx(0)) continue;
        s += term.coef * mass * xv.dot(term.left(Fk, j).apply(P.apply(term.right(Fk, j).apply(yv))));
      }
    }
  return s;
}

// Bound on the gap between mfree_matrix_element and the truncated defining sum.
inline TruncationBound mfree_oracle_bound(const FockSpace& Fk, const ExpState& x, const Biprocess& X,
                                          const MFreeKind& alpha, int t, const ExpState& y,
                                          std::optional<int> support_bound = std::nullopt) {
  TruncationBound b;
  for (auto& [eta, Y] : mfree_pieces(X, alpha, Fk.grid(), support_bound)) {
    TruncationBound p = oracle_bound(Fk, x, Y, eta, t, y);
    b.trunc += p.trunc;
    b.round += p.round;
  }
  return b;
}

// ---- m-free Itô correction ----

// J1 = ∫ G1 ⊗ F1 # dl^α1 (words (G1, F1), filters (E1, D1)) and
// J2 = ∫ F2 ⊗ G2 # dl^α2. The table correction is G1 ⊗ P(F1F2) G2 # dl^α12
// or G1 P(F1F2) ⊗ G2 # dl^α12, with P the partial trace of the table over
// V = D1 ∩ D2.
// Placements of the partial trace that reproduce the expanded corrections.
// In the two IP1 cells that move between bands only one side works: the band
// shift of dl^(m) or dl^(m)* has to meet the trace on its own side of ⊗.
enum class Placement { Both, Right, Left };

inline Placement table_placement(MFreeSort s1, MFreeSort s2) {
  if (s1 == MFreeSort::Ann && s2 == MFreeSort::Num) return Placement::Right;
  if (s1 == MFreeSort::Num && s2 == MFreeSort::Cre) return Placement::Left;
  return Placement::Both;
}

struct MFreeCorrection {
  std::optional<MFreeKind> integrator;
  std::optional<PartialTrace> trace;
  Biprocess on_right;
  Biprocess on_left;
  Placement placement = Placement::Both;

  const Biprocess& valid() const { return placement == Placement::Left ? on_left : on_right; }
};

inline MFreeCorrection mfree_correction(const SimpleBiprocess& X1, MFreeSort s1, const SimpleBiprocess& X2,
                                        MFreeSort s2, int m, int n_colors) {
  MFreeCorrection r;
  MFreeProduct prod = mfree_table(s1, s2, m);
  r.integrator = prod.kind;
  r.trace = prod.trace;
  r.placement = table_placement(s1, s2);
  if (!prod.kind) return r;
  const Filter E1 = X1.D, D1 = X1.E, D2 = X2.D, E2 = X2.E;
  auto [a, b] = on_common_partition(X1, X2);
  for (int band : trace_bands(D1 & D2, *prod.trace, n_colors)) {
    auto parts = ProjDesc::of_band(band).signed_filters();
    for (auto [s_l, W_l] : parts)
      for (auto [s_r, W_r] : parts) {
        Filter mid = W_l & D1 & D2 & W_r;
        SimpleBiprocess R{a.coef * b.coef * s_l * s_r, a.cuts, {}, {}, E1, mid & E2};
        SimpleBiprocess L{a.coef * b.coef * s_l * s_r, a.cuts, {}, {}, E1 & mid, E2};
        for (int j = 0; j < a.intervals(); ++j) {
          Word w = Word{}.then(Factor::proj(W_l)) * a.G[j] * b.F[j];
          w = w.then(Factor::proj(W_r));
          R.F.push_back(a.F[j]);
          R.G.push_back(w * b.G[j]);
          L.F.push_back(a.F[j] * w);
          L.G.push_back(b.G[j]);
        }
        r.on_right.terms.push_back(std::move(R));
        r.on_left.terms.push_back(std::move(L));
      }
  }
  return r;
}

// Filtered pieces of ∫ X # dl^α, flattened to simple terms.
inline IntegralFamily mfree_family(const SimpleBiprocess& X, const MFreeKind& alpha, const GridSpec& g,
                                   std::optional<int> support_bound = std::nullopt) {
  return flatten(mfree_pieces(Biprocess(X), alpha, g, support_bound));
}

// Sum of the pairwise filtered corrections of the expanded integrals.
inline SpMat pairwise_correction(const FockSpace& Fk, const IntegralFamily& fam1, const IntegralFamily& fam2, int t,
                                 bool on_right = true) {
  SpMat out(Fk.full_dim(), Fk.full_dim());
  for (auto& [e1, X1] : fam1)
    for (auto& [e2, X2] : fam2) {
      ItoCorrection c = ito_correction(X1, e1, X2, e2);
      if (!c.integrator) continue;
      const Biprocess& B = on_right ? c.on_right : c.on_left;
      if (B.terms.empty()) continue;
      out += integral_defining_sum(Fk, B, *c.integrator, t);
    }
  return out;
}

struct MFreeItoCheck {
  ItoCheck filtered;      // expansion into filtered integrals, pairwise corrections
  cplx table = 0;         // matrix element of the table correction
  double tau = 0;
  cplx rhs() const { return filtered.drift1 + filtered.drift2 + filtered.cross + table; }
  double residual() const { return std::abs(filtered.lhs - rhs()); }
};

inline MFreeItoCheck mfree_ito_check(const FockSpace& Fk, const ExpState& x, const SimpleBiprocess& X1,
                                     MFreeSort s1, const SimpleBiprocess& X2, MFreeSort s2, int m, int t,
                                     const ExpState& y) {
  const GridSpec& g = Fk.grid();
  MFreeItoCheck r;
  IntegralFamily f1 = mfree_family(X1, {m, s1}, g), f2 = mfree_family(X2, {m, s2}, g);
  r.filtered = ito_check(Fk, x, f1, f2, t, y);
  r.tau = r.filtered.tau;
  MFreeCorrection c = mfree_correction(X1, s1, X2, s2, m, g.n_colors);
  if (c.integrator) {
    r.table = mfree_matrix_element(Fk, x, c.valid(), *c.integrator, t, y);
    r.tau += mfree_oracle_bound(Fk, x, c.valid(), *c.integrator, t, y).total();
  }
  return r;
}

}  // namespace ffock

#endif  // FILTERED_FOCK_ITO_HPP
