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

#ifndef FILTERED_FOCK_BIPROCESS_HPP
#define FILTERED_FOCK_BIPROCESS_HPP

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "filtered_fock/processes.hpp"

namespace ffock {

// One factor of an operator word. Matrix factors act on h0; the others act
// on the Fock factor over the window [from, until), where until < 0 stands
// for the time the word is evaluated at.
struct Factor {
  enum class Kind { Matrix, PastProj, PastNum, PastCre, PastAnn };
  Kind kind = Kind::Matrix;
  std::string name;
  Mat m;
  Filter V;
  int k = 0;
  int from = 0;
  int until = -1;

  static Factor matrix(std::string name, Mat m) { return {Kind::Matrix, std::move(name), std::move(m), {}, 0}; }
  static Factor proj(Filter V) { return {Kind::PastProj, "", {}, V, 0}; }
  static Factor num(int k) { return {Kind::PastNum, "", {}, {}, k}; }
  static Factor cre(int k) { return {Kind::PastCre, "", {}, {}, k}; }
  static Factor ann(int k) { return {Kind::PastAnn, "", {}, {}, k}; }

  bool fixed_window() const { return from != 0 || until >= 0; }

  std::string dsl() const {
    std::string s;
    switch (kind) {
      case Kind::Matrix: return name;
      case Kind::PastProj: s = "P" + V.str(); break;
      case Kind::PastNum: s = "N(" + std::to_string(k) + ")"; break;
      case Kind::PastCre: s = "a*(" + std::to_string(k) + ")"; break;
      default: s = "a(" + std::to_string(k) + ")";
    }
    if (fixed_window()) s += "@" + std::to_string(from) + ":" + std::to_string(until);
    return s;
  }

  SpMat fock(const FockSpace& F, int t) const {
    int a = from, b = until < 0 ? t : until;
    switch (kind) {
      case Kind::PastProj: return F.projection(V, a, b);
      case Kind::PastNum: return F.number(k, a, b);
      case Kind::PastCre: return F.creation(k, a, b);
      case Kind::PastAnn: return F.annihilation(k, a, b);
      default: return F.identity();
    }
  }
};

// Product of factors times a scalar.
struct Word {
  cplx scalar = 1.0;
  std::vector<Factor> factors;

  static Word identity() { return {}; }

  Word operator*(const Word& o) const {
    Word w{scalar * o.scalar, factors};
    w.factors.insert(w.factors.end(), o.factors.begin(), o.factors.end());
    return w;
  }
  Word then(const Factor& f) const {
    Word w = *this;
    w.factors.push_back(f);
    return w;
  }
  Word after(const Factor& f) const {
    Word w = *this;
    w.factors.insert(w.factors.begin(), f);
    return w;
  }

  int ladders() const {
    int n = 0;
    for (auto& f : factors) n += (f.kind == Factor::Kind::PastCre || f.kind == Factor::Kind::PastAnn);
    return n;
  }
  int numbers() const {
    int n = 0;
    for (auto& f : factors) n += (f.kind == Factor::Kind::PastNum);
    return n;
  }
  bool degree_preserving() const { return ladders() == 0; }

  Mat h0(int dim) const {
    Mat M = Mat::Identity(dim, dim) * scalar;
    for (auto& f : factors)
      if (f.kind == Factor::Kind::Matrix) M = M * f.m;
    return M;
  }
  SpMat fock(const FockSpace& F, int t) const {
    SpMat M = F.identity();
    for (auto& f : factors)
      if (f.kind != Factor::Kind::Matrix) M = M * f.fock(F, t);
    return M;
  }
  double h0_norm(int dim) const;

  std::string dsl() const {
    std::string s;
    if (scalar != cplx(1.0)) {
      s += "(" + fmt_num(scalar.real()) + (scalar.imag() < 0 ? "" : "+") + fmt_num(scalar.imag()) + "i)";
    }
    for (auto& f : factors) s += (s.empty() ? "" : " ") + f.dsl();
    return s.empty() ? "I" : s;
  }

 private:
  static std::string fmt_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  }
};

inline double Word::h0_norm(int dim) const {
  Eigen::JacobiSVD<Mat> svd(h0(dim));
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

inline double spectral_norm(const Mat& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(M);
  return svd.singularValues()(0);
}

// Step (D,E)-adapted biprocess F ⊗ G. Interval j is [cuts[j], cuts[j+1]);
// the value is zero from cuts.back() on.
struct SimpleBiprocess {
  cplx coef = 1.0;
  std::vector<int> cuts;
  std::vector<Word> F, G;
  Filter D = Filter::full(), E = Filter::full();

  int intervals() const { return static_cast<int>(cuts.size()) - 1; }
  int interval_of(int cell) const {
    for (int j = 0; j < intervals(); ++j)
      if (cell >= cuts[j] && cell < cuts[j + 1]) return j;
    return -1;
  }

  void validate(const GridSpec& g) const {
    if (cuts.size() < 2 || cuts.front() != 0) throw std::invalid_argument("partition must start at 0");
    for (size_t i = 1; i < cuts.size(); ++i)
      if (cuts[i] <= cuts[i - 1]) throw std::invalid_argument("partition must increase");
    if (cuts.back() > g.n_cells) throw std::out_of_range("time off grid");
    if (F.size() != cuts.size() - 1 || G.size() != cuts.size() - 1)
      throw std::invalid_argument("one value per partition interval");
    g.check_filter(D);
    g.check_filter(E);
  }

  // F(t_j) = F̃(t_j) ⊗ P^(D) on the future of t_j.
  KronOp left(const FockSpace& Fk, int j) const {
    int t = cuts[j];
    return {F[j].h0(Fk.grid().h0_dim), SpMat(F[j].fock(Fk, t) * Fk.future_projection(D, t))};
  }
  KronOp right(const FockSpace& Fk, int j) const {
    int t = cuts[j];
    return {G[j].h0(Fk.grid().h0_dim), SpMat(G[j].fock(Fk, t) * Fk.future_projection(E, t))};
  }

  // Same values on a finer partition containing every current cut. A new
  // cut c inside interval [t_j, t_{j+1}) freezes the windows of the words
  // at t_j and moves the filter projection on [t_j, c) into the words.
  SimpleBiprocess refined(const std::vector<int>& new_cuts) const {
    for (int c : cuts)
      if (c < cuts.back() && std::find(new_cuts.begin(), new_cuts.end(), c) == new_cuts.end())
        throw std::invalid_argument("refinement must contain the original cuts");
    SimpleBiprocess r{coef, {}, {}, {}, D, E};
    for (int c : new_cuts) {
      if (c >= cuts.back()) break;
      int j = interval_of(c);
      r.cuts.push_back(c);
      if (c == cuts[j]) {
        r.F.push_back(F[j]);
        r.G.push_back(G[j]);
      } else {
        r.F.push_back(freeze(F[j], cuts[j], c, D));
        r.G.push_back(freeze(G[j], cuts[j], c, E));
      }
    }
    r.cuts.push_back(cuts.back());
    return r;
  }

  static Word freeze(Word w, int t0, int c, const Filter& V) {
    for (auto& f : w.factors)
      if (f.kind != Factor::Kind::Matrix && f.until < 0) f.until = t0;
    if (!V.is_full()) {
      Factor p = Factor::proj(V);
      p.from = t0;
      p.until = c;
      w.factors.push_back(p);
    }
    return w;
  }

  bool has_past_factors() const {
    for (auto* side : {&F, &G})
      for (auto& w : *side)
        for (auto& f : w.factors)
          if (f.kind != Factor::Kind::Matrix) return true;
    return false;
  }
};

struct Biprocess {
  std::vector<SimpleBiprocess> terms;

  Biprocess() = default;
  Biprocess(std::initializer_list<SimpleBiprocess> t) : terms(t) {}
  explicit Biprocess(SimpleBiprocess t) : terms{std::move(t)} {}

  Biprocess operator+(const Biprocess& o) const {
    Biprocess r = *this;
    r.terms.insert(r.terms.end(), o.terms.begin(), o.terms.end());
    return r;
  }
  Biprocess operator*(cplx s) const {
    Biprocess r = *this;
    for (auto& t : r.terms) t.coef *= s;
    return r;
  }
};

// Constant biprocess (M_F | D) ⊗ (M_G | E) on [0, t_end).
inline SimpleBiprocess constant_biprocess(const Word& f, Filter D, const Word& g, Filter E, int t_end) {
  return SimpleBiprocess{1.0, {0, t_end}, {f}, {g}, D, E};
}

// ---- rewrite of filtered integrands ----

inline SimpleBiprocess project_left(SimpleBiprocess X, const Filter& V) {
  if (!V.is_full())
    for (auto& w : X.F) w = w.then(Factor::proj(V));
  X.D = X.D & V;
  return X;
}
inline SimpleBiprocess project_right(SimpleBiprocess X, const Filter& V) {
  if (!V.is_full())
    for (auto& w : X.G) w = w.after(Factor::proj(V));
  X.E = X.E & V;
  return X;
}

// X[η, proj]: the integrand against dA^η equivalent to X against the
// projected process. Creation projects G from the left; the other kinds
// project F from the right.
inline Biprocess rewrite_projected(const Biprocess& X, const ProcessKind& eta, const ProjDesc& proj) {
  Biprocess out;
  for (const auto& t : X.terms)
    for (auto [sign, V] : proj.signed_filters()) {
      SimpleBiprocess r = eta.type == ProcessKind::Type::Cre ? project_right(t, V) : project_left(t, V);
      r.coef *= sign;
      out.terms.push_back(std::move(r));
    }
  return out;
}

inline Biprocess rewrite_filtered_integrand(const Biprocess& X, const FilteredKind& fk) {
  return rewrite_projected(X, fk.eta, ProjDesc::of_filter(fk.effective()));
}

// ---- products B = FG ----

struct AdaptedTerm {
  cplx coef = 1.0;
  std::vector<int> cuts;
  std::vector<Word> values;
  Filter V = Filter::full();

  KronOp value(const FockSpace& Fk, int j) const {
    int t = cuts[j];
    return {values[j].h0(Fk.grid().h0_dim), SpMat(values[j].fock(Fk, t) * Fk.future_projection(V, t))};
  }
  int interval_of(int cell) const {
    for (int j = 0; j + 1 < static_cast<int>(cuts.size()); ++j)
      if (cell >= cuts[j] && cell < cuts[j + 1]) return j;
    return -1;
  }
};

struct AdaptedProcess {
  std::vector<AdaptedTerm> terms;

  // H(s) y for s in cell `cell`.
  Vec apply(const FockSpace& Fk, int cell, const Vec& y) const {
    Vec out = Vec::Zero(y.size());
    for (auto& t : terms) {
      int j = t.interval_of(cell);
      if (j >= 0) out += t.coef * t.value(Fk, j).apply(y);
    }
    return out;
  }
  SpMat matrix(const FockSpace& Fk, int cell) const {
    SpMat out(Fk.full_dim(), Fk.full_dim());
    for (auto& t : terms) {
      int j = t.interval_of(cell);
      if (j >= 0) out += t.value(Fk, j).materialize() * t.coef;
    }
    return out;
  }
};

// Pointwise products F_i G_i with filter D_i ∩ E_i.
inline AdaptedProcess biprocess_product(const Biprocess& X) {
  AdaptedProcess B;
  for (auto& t : X.terms) {
    AdaptedTerm a{t.coef, t.cuts, {}, t.D & t.E};
    for (int j = 0; j < t.intervals(); ++j) a.values.push_back(t.F[j] * t.G[j]);
    B.terms.push_back(std::move(a));
  }
  return B;
}

// ---- adaptedness ----

struct AdaptednessResult {
  bool ok = true;
  int witness = -1;  // full-space basis index of a failing column
  double residual = 0.0;
};

// Checks H = H̃ ⊗ P^(V) across the split at t. H acts on h0 ⊗ Fock; H̃ is
// read off from the columns of future-vacuum basis states.
inline AdaptednessResult check_adapted(const FockSpace& Fk, const SpMat& H, int t, const Filter& V) {
  const int nf = Fk.dim(), h = Fk.grid().h0_dim;
  Eigen::SparseMatrix<cplx, Eigen::ColMajor> Hc(H);
  double scale = std::max(1.0, max_abs(H));
  uint32_t allowed = V.mask_on(Fk.grid().n_colors);
  AdaptednessResult res;
  std::vector<cplx> expect(static_cast<size_t>(nf) * h);
  std::vector<int> touched;
  for (int col = 0; col < nf * h; ++col) {
    int a = col / nf, s = col % nf;
    auto [p, f] = Fk.split(s, t);
    int ref_col = a * nf + p;  // (a, p, Ω)
    touched.clear();
    bool pass = (Fk.color_mask(f, t, Fk.grid().n_cells) & ~allowed) == 0;
    if (pass) {
      for (Eigen::SparseMatrix<cplx, Eigen::ColMajor>::InnerIterator it(Hc, ref_col); it; ++it) {
        int a2 = it.row() / nf, s2 = it.row() % nf;
        auto [p2, f2] = Fk.split(s2, t);
        if (f2 != 0) {  // H̃ must not touch the future
          res.ok = false;
          res.witness = ref_col;
          res.residual = std::abs(it.value());
          return res;
        }
        int j = Fk.join(p2, f);
        if (j < 0) continue;
        int row = a2 * nf + j;
        expect[row] += it.value();
        touched.push_back(row);
      }
    }
    for (Eigen::SparseMatrix<cplx, Eigen::ColMajor>::InnerIterator it(Hc, col); it; ++it) {
      expect[it.row()] -= it.value();
      touched.push_back(static_cast<int>(it.row()));
    }
    double worst = 0;
    for (int r : touched) {
      worst = std::max(worst, std::abs(expect[r]));
      expect[r] = 0;
    }
    if (worst > 1e-12 * scale) {
      res.ok = false;
      res.witness = col;
      res.residual = worst;
      return res;
    }
  }
  return res;
}

inline AdaptednessResult check_adaptedness(const FockSpace& Fk, const SpMat& F, const SpMat& G, int t,
                                           const Filter& D, const Filter& E) {
  auto r = check_adapted(Fk, F, t, D);
  if (!r.ok) return r;
  return check_adapted(Fk, G, t, E);
}

// Smallest filter V with H = H̃ ⊗ P^(V) at t, searched by increasing size.
// A result equal to {1..C} is reported as FULL, since the two coincide on the
// truncated space. Returns nullopt when H is not adapted for any filter.
inline std::optional<Filter> minimal_filter(const FockSpace& Fk, const SpMat& H, int t) {
  const int C = Fk.grid().n_colors;
  const uint32_t top = (1u << C) - 1u;
  std::vector<uint32_t> masks;
  for (uint32_t m = 0; m <= top; ++m) masks.push_back(m);
  std::stable_sort(masks.begin(), masks.end(),
                   [](uint32_t a, uint32_t b) { return __builtin_popcount(a) < __builtin_popcount(b); });
  for (uint32_t m : masks)
    if (check_adapted(Fk, H, t, Filter::from_mask(m)).ok) return m == top ? Filter::full() : Filter::from_mask(m);
  return std::nullopt;
}

// Minimal (p, q) of the color-invariance condition for input colors
// {1..r-1}: G̃ maps them into colors {1..p-1} and F̃ maps those into
// colors {1..q-1}.
inline std::pair<int, int> color_bounds(const FockSpace& Fk, const SimpleBiprocess& X, int r) {
  auto out_support = [&](const Word& w, int t, int in_bound) {
    SpMat M = w.fock(Fk, t);
    int worst = 0;
    for (int row = 0; row < M.outerSize(); ++row)
      for (SpMat::InnerIterator it(M, row); it; ++it) {
        if (it.value() == cplx(0)) continue;
        if (Fk.max_color(static_cast<int>(it.col())) >= in_bound) continue;
        worst = std::max(worst, Fk.max_color(static_cast<int>(it.row())));
      }
    return worst + 1;
  };
  int p = 1, q = 1;
  for (int j = 0; j < X.intervals(); ++j) {
    int pj = std::max(r, out_support(X.G[j], X.cuts[j], r));
    p = std::max(p, pj);
  }
  for (int j = 0; j < X.intervals(); ++j) q = std::max(q, std::max(p, out_support(X.F[j], X.cuts[j], p)));
  return {p, q};
}

}  // namespace ffock

#endif  // FILTERED_FOCK_BIPROCESS_HPP
