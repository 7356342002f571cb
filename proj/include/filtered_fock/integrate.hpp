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

#ifndef FILTERED_FOCK_INTEGRATE_HPP
#define FILTERED_FOCK_INTEGRATE_HPP

#include <array>
#include <cmath>
#include <vector>

#include "filtered_fock/biprocess.hpp"

namespace ffock {

// Piecewise-constant complex density, one value per grid cell.
struct MeasureDensity {
  double delta = 1.0;
  std::vector<cplx> d;

  static MeasureDensity zero(const GridSpec& g) { return {g.delta(), std::vector<cplx>(g.n_cells, 0.0)}; }
  static MeasureDensity constant(const GridSpec& g, cplx v) { return {g.delta(), std::vector<cplx>(g.n_cells, v)}; }

  int cells() const { return static_cast<int>(d.size()); }
  cplx mass(int c0, int c1) const {
    cplx s = 0;
    for (int c = std::max(c0, 0); c < std::min(c1, cells()); ++c) s += d[c];
    return s * delta;
  }
  cplx mass_of_cell(int c) const { return d[c] * delta; }
  MeasureDensity variation() const {
    MeasureDensity r = *this;
    for (auto& x : r.d) x = std::abs(x);
    return r;
  }
  MeasureDensity operator+(const MeasureDensity& o) const {
    MeasureDensity r = *this;
    for (size_t i = 0; i < d.size(); ++i) r.d[i] += o.d[i];
    return r;
  }
  MeasureDensity operator*(cplx s) const {
    MeasureDensity r = *this;
    for (auto& x : r.d) x *= s;
    return r;
  }
};

// Densities of the boson measures: v^(k), conj(u^(k)), conj(u^(k)) v^(k), 1.
inline MeasureDensity mu(const ProcessKind& eta, const OneParticleVector& u, const OneParticleVector& v) {
  const GridSpec& g = u.grid();
  MeasureDensity m = MeasureDensity::zero(g);
  for (int c = 0; c < g.n_cells; ++c) {
    switch (eta.type) {
      case ProcessKind::Type::Ann: m.d[c] = v.at(c, eta.k); break;
      case ProcessKind::Type::Cre: m.d[c] = std::conj(u.at(c, eta.k)); break;
      case ProcessKind::Type::Num: m.d[c] = std::conj(u.at(c, eta.k)) * v.at(c, eta.k); break;
      default: m.d[c] = 1.0;
    }
  }
  return m;
}

// 0-1 color multiplier of the integral against dA^η for (D,E)-adapted integrands.
inline int multiplier(const ProcessKind& eta, const Filter& D, const Filter& E) {
  switch (eta.type) {
    case ProcessKind::Type::Ann: return E.contains(eta.k);
    case ProcessKind::Type::Cre: return D.contains(eta.k);
    case ProcessKind::Type::Num: return D.contains(eta.k) && E.contains(eta.k);
    default: return 1;
  }
}

inline KronOp increment_op(const FockSpace& Fk, const ProcessKind& eta, int c0, int c1) {
  return {Mat::Identity(Fk.grid().h0_dim, Fk.grid().h0_dim), increment(Fk, eta, c0, c1)};
}

inline void check_time(const GridSpec& g, int t) {
  if (t < 0 || t > g.n_cells) throw std::out_of_range("time off grid");
}

// Interval j of X clipped to [0, t).
inline std::pair<int, int> clipped(const SimpleBiprocess& X, int j, int t) {
  return {X.cuts[j], std::min(X.cuts[j + 1], t)};
}

// ---- defining sum ----

inline Vec integral_apply(const FockSpace& Fk, const SimpleBiprocess& X, const ProcessKind& eta, int t, const Vec& y) {
  check_time(Fk.grid(), t);
  Vec out = Vec::Zero(y.size());
  for (int j = 0; j < X.intervals(); ++j) {
    auto [c0, c1] = clipped(X, j, t);
    if (c1 <= c0) continue;
    Vec z = X.right(Fk, j).apply(y);
    z = increment_op(Fk, eta, c0, c1).apply(z);
    out += X.coef * X.left(Fk, j).apply(z);
  }
  return out;
}

inline Vec integral_apply(const FockSpace& Fk, const Biprocess& X, const ProcessKind& eta, int t, const Vec& y) {
  Vec out = Vec::Zero(y.size());
  for (auto& term : X.terms) out += integral_apply(Fk, term, eta, t, y);
  return out;
}

// Σ F(t_{j-1}) (A_{t_j ∧ t} - A_{t_{j-1} ∧ t}) G(t_{j-1}) as a matrix. The increments
// are split into grid cells and summed in cell order, so any partition with the same
// values gives the same floating-point result.
inline SpMat integral_defining_sum(const FockSpace& Fk, const Biprocess& X, const ProcessKind& eta, int t) {
  check_time(Fk.grid(), t);
  SpMat out(Fk.full_dim(), Fk.full_dim());
  for (int c = 0; c < t; ++c)
    for (auto& term : X.terms) {
      int j = term.interval_of(c);
      if (j < 0) continue;
      KronOp op = term.left(Fk, j) * increment_op(Fk, eta, c, c + 1) * term.right(Fk, j);
      out += op.materialize() * term.coef;
    }
  return out;
}

// I(c) y for c = 0..n_cells.
inline std::vector<Vec> integral_path(const FockSpace& Fk, const Biprocess& X, const ProcessKind& eta, const Vec& y) {
  const int N = Fk.grid().n_cells;
  std::vector<Vec> path(N + 1, Vec::Zero(y.size()));
  for (int c = 0; c < N; ++c) {
    path[c + 1] = path[c];
    for (auto& term : X.terms) {
      int j = term.interval_of(c);
      if (j < 0) continue;
      Vec z = increment_op(Fk, eta, c, c + 1).apply(term.right(Fk, j).apply(y));
      path[c + 1] += term.coef * term.left(Fk, j).apply(z);
    }
  }
  return path;
}

// B(c) y for the pointwise product of a single term.
inline Vec product_apply(const FockSpace& Fk, const SimpleBiprocess& X, int cell, const Vec& y) {
  int j = X.interval_of(cell);
  if (j < 0) return Vec::Zero(y.size());
  return X.coef * X.left(Fk, j).apply(X.right(Fk, j).apply(y));
}

inline Vec product_apply(const FockSpace& Fk, const Biprocess& X, int cell, const Vec& y) {
  Vec out = Vec::Zero(y.size());
  for (auto& t : X.terms) out += product_apply(Fk, t, cell, y);
  return out;
}

// ---- analytic matrix elements ----

// ∫_0^t <x, F(s)G(s) y> dµ^η_{D,E}(s), summed over terms.
inline cplx matrix_element_fast(const FockSpace& Fk, const ExpState& x, const Biprocess& X, const ProcessKind& eta,
                                int t, const ExpState& y) {
  check_time(Fk.grid(), t);
  Vec xv = x.materialize(Fk), yv = y.materialize(Fk);
  MeasureDensity m = mu(eta, x.u, y.u);
  cplx s = 0;
  for (auto& term : X.terms) {
    if (!multiplier(eta, term.D, term.E)) continue;
    for (int j = 0; j < term.intervals(); ++j) {
      auto [c0, c1] = clipped(term, j, t);
      if (c1 <= c0) continue;
      cplx mass = m.mass(c0, c1);
      if (mass == cplx(0)) continue;
      s += term.coef * mass * xv.dot(term.left(Fk, j).apply(term.right(Fk, j).apply(yv)));
    }
  }
  return s;
}

// ---- truncation tails ----

// An operator O with ‖O restricted to degree j‖ <= K max(1, j+L)^{P/2}, changing
// degree by at most L.
struct TailTerm {
  double K = 0;
  int L = 0;
  int P = 0;

  TailTerm operator*(const TailTerm& o) const { return {K * o.K, L + o.L, P + o.P}; }
  TailTerm scaled(double s) const { return {K * s, L, P}; }
};

inline TailTerm word_tail(const Word& w, int t, const GridSpec& g) {
  TailTerm r{w.h0_norm(g.h0_dim), 0, 0};
  for (auto& f : w.factors) {
    int len = (f.until < 0 ? t : f.until) - f.from;
    switch (f.kind) {
      case Factor::Kind::PastCre:
      case Factor::Kind::PastAnn:
        r.K *= std::sqrt(std::max(len, 0) * g.delta());
        r.L += 1;
        r.P += 1;
        break;
      case Factor::Kind::PastNum: r.P += 2; break;
      default: break;
    }
  }
  return r;
}

inline TailTerm increment_tail(const ProcessKind& eta, int c0, int c1, const GridSpec& g) {
  double len = (c1 - c0) * g.delta();
  switch (eta.type) {
    case ProcessKind::Type::Ann:
    case ProcessKind::Type::Cre: return {std::sqrt(len), 1, 1};
    case ProcessKind::Type::Num: return {1.0, 0, 2};
    default: return {len, 0, 0};
  }
}

// Tail of the value of interval j: |coef| F-word ⊗ G-word.
inline TailTerm value_tail(const SimpleBiprocess& X, int j, const GridSpec& g) {
  return (word_tail(X.F[j], X.cuts[j], g) * word_tail(X.G[j], X.cuts[j], g)).scaled(std::abs(X.coef));
}

// Aggregate over a list: summed K, largest L and P.
inline TailTerm tail_sum(const std::vector<TailTerm>& ts) {
  TailTerm r;
  for (auto& t : ts) {
    r.K += t.K;
    r.L = std::max(r.L, t.L);
    r.P = std::max(r.P, t.P);
  }
  return r;
}

// Tail of the integral I^η(t) of a biprocess.
inline TailTerm integral_tail(const Biprocess& X, const ProcessKind& eta, int t, const GridSpec& g) {
  std::vector<TailTerm> ts;
  for (auto& term : X.terms)
    for (int j = 0; j < term.intervals(); ++j) {
      auto [c0, c1] = clipped(term, j, t);
      if (c1 > c0) ts.push_back(value_tail(term, j, g) * increment_tail(eta, c0, c1, g));
    }
  return tail_sum(ts);
}

inline TailTerm product_tail(const Biprocess& X, const GridSpec& g) {
  std::vector<TailTerm> ts;
  for (auto& term : X.terms)
    for (int j = 0; j < term.intervals(); ++j) ts.push_back(value_tail(term, j, g));
  return tail_sum(ts);
}

// Σ_{j>m} max(1, j+L)^{P/2} r^j / √(j!).
inline double tail_series(double r, int m, int L, int P) {
  double s = 0;
  int j0 = std::max(m + 1, 0);
  if (r == 0) return j0 == 0 ? std::pow(std::max(1, L), 0.5 * P) : 0.0;
  double lr = std::log(r);
  for (int j = j0; j < j0 + 400; ++j) {
    double lt = 0.5 * P * std::log(std::max(1, j + L)) + j * lr - 0.5 * std::lgamma(j + 1.0);
    double term = std::exp(lt);
    s += term;
    if (j > j0 + 8 && j > 2 * r * r + P + 8 && term < 1e-18 * s) break;
  }
  return s;
}

// Bound on |<x_n, O_n y_n> - <x, O y>| summed over the terms.
inline double tail_bound(const std::vector<TailTerm>& ts, const ExpState& x, const ExpState& y, int n_max) {
  double ru = x.u.norm(), rv = y.u.norm(), nw = x.w.norm(), nz = y.w.norm();
  double tot = 0;
  for (auto& t : ts) {
    if (t.K == 0) continue;
    int m = n_max - t.L;
    double a = std::exp(0.5 * ru * ru) * tail_series(rv, m, t.L, t.P);
    double b = std::exp(0.5 * rv * rv) * tail_series(ru, m, t.L, t.P);
    tot += 2 * t.K * nw * nz * std::min(a, b);
  }
  return tot;
}

struct TruncationBound {
  double trunc = 0;  // truncation part
  double round = 0;  // floating-point allowance
  double total() const { return trunc + round; }
};

// Bound on |fast - oracle| for matrix_element_fast against the defining sum.
// Degree-preserving words differ only through the top degree:
// fast - oracle = Σ_j mass_j <Q_n x, F_j G_j Q_n y>.
inline TruncationBound oracle_bound(const FockSpace& Fk, const ExpState& x, const Biprocess& X, const ProcessKind& eta,
                                    int t, const ExpState& y) {
  const GridSpec& g = Fk.grid();
  const int n = g.n_max;
  TruncationBound b;
  MeasureDensity m = mu(eta, x.u, y.u);
  double ru = x.u.norm(), rv = y.u.norm();
  double top = x.w.norm() * y.w.norm() * std::pow(ru * rv, n) / std::tgamma(n + 1.0);
  double scale = 0;
  std::vector<TailTerm> generic;
  for (auto& term : X.terms) {
    if (!multiplier(eta, term.D, term.E)) continue;
    for (int j = 0; j < term.intervals(); ++j) {
      auto [c0, c1] = clipped(term, j, t);
      if (c1 <= c0) continue;
      cplx mass = m.mass(c0, c1);
      TailTerm v = value_tail(term, j, g);
      scale += (std::abs(mass) + increment_tail(eta, c0, c1, g).K) * v.K * std::pow(std::max(1, n + v.L), 0.5 * v.P);
      if (eta.is_time()) continue;  // both sides use the same truncated operator
      if (term.F[j].degree_preserving() && term.G[j].degree_preserving()) {
        KronOp L = term.left(Fk, j), R = term.right(Fk, j);
        double mn = spectral_norm(L.h0 * R.h0);
        SpMat D = L.fock * R.fock;
        double dmax = 0;
        for (int s = Fk.degree_begin(n); s < Fk.degree_end(n); ++s) dmax = std::max(dmax, std::abs(D.coeff(s, s)));
        b.trunc += std::abs(term.coef * mass) * mn * dmax * top;
      } else {
        generic.push_back(v.scaled(std::abs(mass)));
        generic.push_back(v * increment_tail(eta, c0, c1, g));
      }
    }
  }
  b.trunc += tail_bound(generic, x, y, n);
  b.round = 1e-13 * (1 + scale * x.w.norm() * y.w.norm() * std::exp(0.5 * (ru * ru + rv * rv)));
  return b;
}

// ---- pair measures ----

// Mass of µ_{1,2} over [c0,c1) from the nontrivial table; zero elsewhere.
inline cplx mu12_mass(const ProcessKind& e1, const ProcessKind& e2, const Filter& D1, const Filter& E1,
                      const Filter& D2, const Filter& E2, const OneParticleVector& u, const OneParticleVector& v,
                      int c0, int c1) {
  using T = ProcessKind::Type;
  if (e1.is_time() || e2.is_time() || e1.k != e2.k) return 0.0;
  int k = e1.k;
  bool d12 = D1.contains(k) && D2.contains(k);
  if (e1.type == T::Cre && e2.type == T::Cre)
    return d12 ? cplx((c1 - c0) * u.grid().delta()) : cplx(0);
  if (e1.type == T::Num && e2.type == T::Cre)
    return d12 && E1.contains(k) ? mu(ProcessKind::cre(k), u, v).mass(c0, c1) : cplx(0);
  if (e1.type == T::Cre && e2.type == T::Num)
    return d12 && E2.contains(k) ? mu(ProcessKind::ann(k), u, v).mass(c0, c1) : cplx(0);
  if (e1.type == T::Num && e2.type == T::Num)
    return d12 && E1.contains(k) && E2.contains(k) ? mu(ProcessKind::num(k), u, v).mass(c0, c1) : cplx(0);
  return 0.0;
}

inline bool nontrivial_pair(const ProcessKind& e1, const ProcessKind& e2) {
  using T = ProcessKind::Type;
  return (e1.type == T::Cre || e1.type == T::Num) && (e2.type == T::Cre || e2.type == T::Num);
}

struct DeltaPair {
  cplx delta = 0;     // <P1 ΔA1 Q1 x, P2 ΔA2 Q2 y> on the truncated space
  cplx isolated = 0;  // Itô coefficient read off from the oracle
  cplx analytic = 0;  // µ_{1,2}([s,t]) from the table
  double tau = 0;
};

// The Itô coefficient is separated from the product term by rotating u on
// [c0,c1) through four phases: the two parts carry different Fourier
// frequencies in every nontrivial cell.
inline DeltaPair delta_pair(const FockSpace& Fk, const ProcessKind& e1, const ProcessKind& e2, const Filter& D1,
                            const Filter& E1, const Filter& D2, const Filter& E2, const ExpState& x,
                            const ExpState& y, int c0, int c1) {
  using T = ProcessKind::Type;
  const GridSpec& g = Fk.grid();
  if (!nontrivial_pair(e1, e2)) throw std::invalid_argument("pair outside the nontrivial table");
  int freq = (e1.type == T::Num) ? -1 : 0;
  SpMat A1 = Fk.projection(D1) * increment(Fk, e1, c0, c1) * Fk.projection(E1);
  SpMat A2 = Fk.projection(D2) * increment(Fk, e2, c0, c1) * Fk.projection(E2);
  Mat I = Mat::Identity(g.h0_dim, g.h0_dim);
  KronOp O1{I, A1}, O2{I, A2};
  Vec b = O2.apply(y.materialize(Fk));
  TailTerm tt = increment_tail(e1, c0, c1, g) * increment_tail(e2, c0, c1, g);
  DeltaPair r;
  for (int m = 0; m < 4; ++m) {
    double th = m * M_PI / 2;
    OneParticleVector ur = x.u;
    for (int c = c0; c < c1; ++c)
      for (int k = 1; k <= g.n_colors; ++k) ur.at(c, k) *= std::polar(1.0, th);
    ExpState xr{x.w, ur};
    cplx dl = O1.apply(xr.materialize(Fk)).dot(b);
    if (m == 0) r.delta = dl;
    cplx den = x.w.dot(y.w) * std::exp(ur.restrict(D1 & E1).inner(y.u.restrict(D2 & E2)));
    r.isolated += dl / den * std::polar(1.0, -freq * th) / 4.0;
    r.tau += tail_bound({tt}, xr, y, g.n_max) / std::abs(den) / 4.0;
  }
  r.analytic = mu12_mass(e1, e2, D1, E1, D2, E2, x.u, y.u, c0, c1);
  r.tau += 1e-12 * (1 + std::abs(r.analytic));
  return r;
}

// µ1 and µ2 densities of the three-integral decomposition of <I1 x, I2 y>.
inline MeasureDensity mu1_density(const ProcessKind& e1, const Filter& D1, const Filter& E1, const Filter& D2,
                                  const Filter& E2, const OneParticleVector& u, const OneParticleVector& v) {
  using T = ProcessKind::Type;
  int k = e1.k;
  switch (e1.type) {
    case T::Ann: return mu(ProcessKind::cre(k), u, v) * cplx(E1.contains(k));
    case T::Cre: return mu(ProcessKind::ann(k), u, v) * cplx(D1.contains(k) && D2.contains(k) && E2.contains(k));
    case T::Num:
      return mu(e1, u, v) * cplx(E1.contains(k) && D1.contains(k) && D2.contains(k) && E2.contains(k));
    default: return MeasureDensity::constant(u.grid(), 1.0);
  }
}

inline MeasureDensity mu2_density(const ProcessKind& e2, const Filter& D1, const Filter& E1, const Filter& D2,
                                  const Filter& E2, const OneParticleVector& u, const OneParticleVector& v) {
  using T = ProcessKind::Type;
  int k = e2.k;
  switch (e2.type) {
    case T::Ann: return mu(e2, u, v) * cplx(E2.contains(k));
    case T::Cre: return mu(e2, u, v) * cplx(E1.contains(k) && D1.contains(k) && D2.contains(k));
    case T::Num:
      return mu(e2, u, v) * cplx(E1.contains(k) && D1.contains(k) && D2.contains(k) && E2.contains(k));
    default: return MeasureDensity::constant(u.grid(), 1.0);
  }
}

struct ItoInner {
  cplx lhs = 0;  // <I1(t) x, I2(t) y> on the truncated space
  cplx term1 = 0, term2 = 0, term3 = 0;
  double tau = 0;
  cplx rhs() const { return term1 + term2 + term3; }
};

// <I1 x, I2 y> = ∫<B1 x, I2 y> dµ1 + ∫<I1 x, B2 y> dµ2 + ∫<B1 x, B2 y> dµ_{1,2}.
// Within a cell I(s) moves linearly in the measure of the other side, which
// contributes half of the product of the two cell masses to each of the first
// two integrals.
inline ItoInner ito_inner(const FockSpace& Fk, const ExpState& x, const SimpleBiprocess& X1, const ProcessKind& e1,
                          const SimpleBiprocess& X2, const ProcessKind& e2, int t, const ExpState& y) {
  const GridSpec& g = Fk.grid();
  check_time(g, t);
  Vec xv = x.materialize(Fk), yv = y.materialize(Fk);
  Biprocess B1(X1), B2(X2);
  auto p1 = integral_path(Fk, B1, e1, xv), p2 = integral_path(Fk, B2, e2, yv);
  MeasureDensity m1 = mu1_density(e1, X1.D, X1.E, X2.D, X2.E, x.u, y.u);
  MeasureDensity m2 = mu2_density(e2, X1.D, X1.E, X2.D, X2.E, x.u, y.u);
  ItoInner r;
  r.lhs = p1[t].dot(p2[t]);
  for (int c = 0; c < t; ++c) {
    Vec b1 = product_apply(Fk, X1, c, xv), b2 = product_apply(Fk, X2, c, yv);
    cplx a1 = m1.mass_of_cell(c), a2 = m2.mass_of_cell(c);
    cplx bb = b1.dot(b2);
    r.term1 += a1 * (b1.dot(p2[c]) + 0.5 * a2 * bb);
    r.term2 += a2 * (p1[c].dot(b2) + 0.5 * a1 * bb);
    r.term3 += mu12_mass(e1, e2, X1.D, X1.E, X2.D, X2.E, x.u, y.u, c, c + 1) * bb;
  }
  // Every piece is <x, O y> for a product of word, increment and scalar factors.
  TailTerm I1 = integral_tail(B1, e1, t, g), I2 = integral_tail(B2, e2, t, g);
  TailTerm V1 = product_tail(B1, g), V2 = product_tail(B2, g);
  double a1 = 0, a2 = 0, a12 = 0;
  for (int c = 0; c < t; ++c) {
    a1 += std::abs(m1.mass_of_cell(c));
    a2 += std::abs(m2.mass_of_cell(c));
    a12 += std::abs(mu12_mass(e1, e2, X1.D, X1.E, X2.D, X2.E, x.u, y.u, c, c + 1));
  }
  std::vector<TailTerm> ts{I1 * I2, (V1 * I2).scaled(a1), (I1 * V2).scaled(a2), (V1 * V2).scaled(a1 * a2 + a12)};
  r.tau = tail_bound(ts, x, y, g.n_max);
  double scale = 0;
  for (auto& tt : ts) scale += tt.K * std::pow(std::max(1, g.n_max + tt.L), 0.5 * tt.P);
  r.tau += 1e-12 * (1 + scale * xv.norm() * yv.norm());
  return r;
}

// ---- norm estimates ----

struct NormEstimate {
  double bound = 0;
  double actual = 0;
};

// σ and ν of the norm estimate for x = w ε(u).
inline std::pair<MeasureDensity, MeasureDensity> sigma_nu(const ProcessKind& eta, const Filter& D, const Filter& E,
                                                          const OneParticleVector& u) {
  using T = ProcessKind::Type;
  const GridSpec& g = u.grid();
  int k = eta.k;
  MeasureDensity zero = MeasureDensity::zero(g);
  bool de = D.contains(k) && E.contains(k);
  switch (eta.type) {
    case T::Ann: return {mu(eta, u, u) * cplx(E.contains(k)), zero};
    case T::Cre:
      return {mu(eta, u, u) * cplx(de), MeasureDensity::constant(g, 1.0) * cplx(D.contains(k))};
    case T::Num: return {mu(eta, u, u) * cplx(de), mu(eta, u, u) * cplx(de)};
    default: return {MeasureDensity::constant(g, 1.0), zero};
  }
}

// ‖I^η(t) x‖² against e^{|σ|([0,t])} ∫ ‖B(s)x‖² (|σ| + ν)(ds).
inline NormEstimate norm_estimate(const FockSpace& Fk, const SimpleBiprocess& X, const ProcessKind& eta, int t,
                                  const ExpState& x) {
  check_time(Fk.grid(), t);
  Vec xv = x.materialize(Fk);
  auto [sigma, nu] = sigma_nu(eta, X.D, X.E, x.u);
  MeasureDensity s = sigma.variation();
  double integral = 0, var = 0;
  for (int c = 0; c < t; ++c) {
    double xi = std::abs(s.mass_of_cell(c)) + std::real(nu.mass_of_cell(c));
    var += std::abs(s.mass_of_cell(c));
    if (xi == 0) continue;
    integral += product_apply(Fk, X, c, xv).squaredNorm() * xi;
  }
  NormEstimate r;
  r.bound = std::exp(var) * integral;
  r.actual = integral_apply(Fk, X, eta, t, xv).squaredNorm();
  return r;
}

// ‖X‖²_{x,t,η} with ξ^η = ξ^η_{FULL,FULL}.
inline double seminorm(const FockSpace& Fk, const Biprocess& X, const ExpState& x, int t, const ProcessKind& eta) {
  check_time(Fk.grid(), t);
  Vec xv = x.materialize(Fk);
  auto [sigma, nu] = sigma_nu(eta, Filter::full(), Filter::full(), x.u);
  double s = 0;
  for (int c = 0; c < t; ++c) {
    double xi = std::abs(sigma.mass_of_cell(c)) + std::real(nu.mass_of_cell(c));
    if (xi != 0) s += product_apply(Fk, X, c, xv).squaredNorm() * xi;
  }
  return s;
}

// ---- sums over η ----

struct SumReport {
  std::vector<Vec> partial;        // I^(n)(t) x for n = 1..C
  std::vector<double> deviation;   // sup_s ‖I^(n)(s)x - I(s)x‖ over grid s <= t
  Vec value;                       // I(t) x
  double norm2 = 0;
  double bound = 0;
  bool ok = true;
};

// ν_u density Σ_k |u^(k)|² + 1.
inline MeasureDensity nu_u(const OneParticleVector& u) {
  const GridSpec& g = u.grid();
  MeasureDensity m = MeasureDensity::constant(g, 1.0);
  for (int c = 0; c < g.n_cells; ++c)
    for (int k = 1; k <= g.n_colors; ++k) m.d[c] += std::norm(u.at(c, k));
  return m;
}

// Members of 𝒯(n, u): annihilation and number colors capped by N(u).
inline bool in_T(const ProcessKind& eta, int n, const OneParticleVector& u) {
  if (eta.is_time()) return true;
  if (eta.k > n) return false;
  if (eta.type == ProcessKind::Type::Cre) return true;
  return eta.k <= u.color_support();
}

inline SumReport sum_integrals(const FockSpace& Fk, const std::vector<std::pair<ProcessKind, Biprocess>>& family,
                               int t, const ExpState& x) {
  const GridSpec& g = Fk.grid();
  check_time(g, t);
  Vec xv = x.materialize(Fk);
  std::vector<std::vector<Vec>> paths;
  for (auto& [eta, X] : family) paths.push_back(integral_path(Fk, X, eta, xv));
  auto level = [&](int n, int s) {
    Vec v = Vec::Zero(xv.size());
    for (size_t i = 0; i < family.size(); ++i)
      if (family[i].first.is_time() || family[i].first.k <= n) v += paths[i][s];
    return v;
  };
  SumReport r;
  for (int n = 1; n <= g.n_colors; ++n) {
    r.partial.push_back(level(n, t));
    double dev = 0;
    for (int s = 0; s <= t; ++s) dev = std::max(dev, (level(n, s) - level(g.n_colors, s)).norm());
    r.deviation.push_back(dev);
  }
  r.value = level(g.n_colors, t);
  r.norm2 = r.value.squaredNorm();
  MeasureDensity nu = nu_u(x.u);
  double integral = 0;
  for (auto& [eta, X] : family) {
    if (!in_T(eta, g.n_colors, x.u)) continue;
    for (int c = 0; c < t; ++c) integral += product_apply(Fk, X, c, xv).squaredNorm() * std::real(nu.mass_of_cell(c));
  }
  r.bound = 2 * std::exp(std::real(nu.mass(0, t))) * integral;
  r.ok = r.norm2 <= r.bound * (1 + 1e-9) + 1e-14;
  return r;
}

}  // namespace ffock

#endif  // FILTERED_FOCK_INTEGRATE_HPP
