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

#ifndef FILTERED_FOCK_SDE_HPP
#define FILTERED_FOCK_SDE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "filtered_fock/integrate.hpp"

namespace ffock {

// ---- filter collections ----

inline std::vector<Filter> intersection_closure(std::vector<Filter> fs) {
  auto normalize = [](std::vector<Filter>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  normalize(fs);
  for (bool grew = true; grew;) {
    grew = false;
    const size_t n = fs.size();
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) {
        Filter c = fs[i] & fs[j];
        if (std::find(fs.begin(), fs.end(), c) == fs.end()) {
          fs.push_back(c);
          grew = true;
        }
      }
    normalize(fs);
  }
  return fs;
}

// Strictly increasing chain ending in FULL. FULL counts as strictly larger
// than every finite filter.
inline bool admissible_check(std::vector<Filter> P0) {
  if (P0.empty()) return false;
  std::sort(P0.begin(), P0.end());
  if (!P0.back().is_full()) return false;
  for (size_t i = 0; i + 1 < P0.size(); ++i)
    if (P0[i] == P0[i + 1] || !P0[i].subset_of(P0[i + 1])) return false;
  return true;
}

// Each member after the first adds a color of the grid not in the earlier
// ones. On the grid FULL and {1..C} are the same projection, so FULL has to
// add an on-grid color too.
inline bool new_color_condition(const std::vector<Filter>& P0, int n_colors) {
  uint32_t seen = 0;
  for (size_t i = 0; i < P0.size(); ++i) {
    uint32_t m = P0[i].mask_on(n_colors);
    if (i > 0 && (m & ~seen) == 0) return false;
    seen |= m;
  }
  return true;
}

// 𝒫₀^(m) = {{1..k-1} : k = 1..m+1} ∪ {FULL}.
inline std::vector<Filter> mfree_filters(int m) {
  std::vector<Filter> out;
  for (int k = 1; k <= m + 1; ++k) out.push_back(Filter::first(k - 1));
  out.push_back(Filter::full());
  return out;
}

// ---- systems ----

inline bool bounded_word(const Word& w) {
  for (auto& f : w.factors)
    if (f.kind != Factor::Kind::Matrix && f.kind != Factor::Kind::PastProj) return false;
  return true;
}

// Coefficient X^η_{C,D}; C and D are the filters of X.
struct SDETerm {
  ProcessKind eta;
  SimpleBiprocess X;
};

struct SDESystem {
  std::vector<Filter> P0;
  std::vector<SDETerm> terms;
  std::vector<Mat> initial;  // Ī_V aligned with P0; an empty matrix is 0

  int index_of(const Filter& V) const {
    for (size_t i = 0; i < P0.size(); ++i)
      if (P0[i] == V) return static_cast<int>(i);
    return -1;
  }

  Mat initial_of(int v, int dim) const {
    return initial[v].size() ? initial[v] : Mat::Zero(dim, dim);
  }

  void validate(const GridSpec& g) const {
    if (P0.empty()) throw std::invalid_argument("empty filter collection");
    for (size_t i = 0; i < P0.size(); ++i) {
      g.check_filter(P0[i]);
      for (size_t j = 0; j < P0.size(); ++j) {
        if (i != j && P0[i] == P0[j]) throw std::invalid_argument("duplicate filter " + P0[i].str());
        if (index_of(P0[i] & P0[j]) < 0)
          throw std::invalid_argument("filter collection not closed under intersections: " + P0[i].str() +
                                      " & " + P0[j].str());
      }
    }
    for (auto& t : terms) {
      t.X.validate(g);
      if (!t.eta.is_time()) g.check_color(t.eta.k);
      if (index_of(t.X.D) < 0 || index_of(t.X.E) < 0)
        throw std::invalid_argument("coefficient filters " + t.X.D.str() + "," + t.X.E.str() +
                                    " outside the filter collection");
      for (auto* side : {&t.X.F, &t.X.G})
        for (auto& w : *side)
          if (!bounded_word(w)) throw std::invalid_argument("coefficient " + w.dsl() + " is not locally bounded");
    }
    if (initial.size() != P0.size()) throw std::invalid_argument("one initial value per filter");
    for (auto& m : initial)
      if (m.size() && (m.rows() != g.h0_dim || m.cols() != g.h0_dim))
        throw std::invalid_argument("initial value has the wrong dimension");
  }
};

// Single-filter system {FULL} with U(0) = 1.
inline SDESystem boson_system(const GridSpec& g, std::vector<SDETerm> terms) {
  return {{Filter::full()}, std::move(terms), {Mat::Identity(g.h0_dim, g.h0_dim)}};
}

// Constant coefficient M ⊗ 1 on [0, n_cells).
inline SDETerm ampliation_term(const GridSpec& g, const ProcessKind& eta, const std::string& name, const Mat& M) {
  return {eta, constant_biprocess(Word{}.then(Factor::matrix(name, M)), Filter::full(), Word{}, Filter::full(),
                                  g.n_cells)};
}

// ---- probes ----

inline double exp_norm2(const ExpState& x) { return x.w.squaredNorm() * std::exp(std::pow(x.u.norm(), 2)); }

// 16 fixed exponential states and n_random seeded ones, all with ‖u‖ <= 0.5.
inline std::vector<ExpState> probe_catalog(const GridSpec& g, uint64_t seed = 1, int n_random = 16) {
  std::vector<ExpState> out;
  auto scaled = [](OneParticleVector u, double r) {
    double n = u.norm();
    return n > 0 ? u * cplx(r / n) : u;
  };
  for (int i = 0; i < 16; ++i) {
    Vec w = Vec::Zero(g.h0_dim);
    w(i % g.h0_dim) = 1.0;
    if (i % 3 == 2) w = Vec::Ones(g.h0_dim) / std::sqrt(double(g.h0_dim));
    OneParticleVector u(g);
    if (i > 0) {
      int k = 1 + i % g.n_colors;
      for (int c = (i / 4) % g.n_cells; c < g.n_cells; ++c) u.at(c, k) = cplx(1.0, 0.25 * (i % 5));
      if (i % 2) u.at(g.n_cells - 1, 1 + (k % g.n_colors)) += 0.5;
    }
    out.push_back({w, scaled(u, 0.5 * (1 + i % 4) / 4.0)});
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> radius(0.0, 0.5);
  for (int i = 0; i < n_random; ++i) {
    Vec w(g.h0_dim);
    for (int a = 0; a < g.h0_dim; ++a) w(a) = cplx(gauss(rng), gauss(rng));
    w.normalize();
    Vec v(g.modes());
    for (int j = 0; j < g.modes(); ++j) v(j) = cplx(gauss(rng), gauss(rng));
    out.push_back({w, scaled(OneParticleVector(g, v), radius(rng))});
  }
  return out;
}

// The same step function on a grid whose cells split each cell into r.
inline ExpState refine_probe(const ExpState& x, const GridSpec& fine) {
  const GridSpec& g = x.u.grid();
  if (fine.n_cells % g.n_cells || fine.n_colors != g.n_colors) throw std::invalid_argument("grids do not nest");
  int r = fine.n_cells / g.n_cells;
  OneParticleVector u(fine);
  for (int c = 0; c < fine.n_cells; ++c)
    for (int k = 1; k <= g.n_colors; ++k) u.at(c, k) = x.u.at(c / r, k);
  return {x.w, u};
}

inline int worker_threads() {
  const char* s = std::getenv("FILTERED_FOCK_THREADS");
  int n = s ? std::atoi(s) : 1;
  return std::max(1, n);
}

// Runs fn(i) for i < n on up to worker_threads() threads.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  int workers = std::min(worker_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

namespace detail {

// Cached operators of a system on one grid.
class SystemOps {
 public:
  SystemOps(const FockSpace& Fk, const SDESystem& sys, int t_end) : Fk_(Fk), sys_(sys), t_end_(t_end) {
    sys.validate(Fk.grid());
    check_time(Fk.grid(), t_end);
    const int nv = static_cast<int>(sys.P0.size());
    for (auto& t : sys.terms) {
      std::vector<KronOp> l, r;
      for (int j = 0; j < t.X.intervals(); ++j) {
        l.push_back(t.X.left(Fk, j));
        r.push_back(t.X.right(Fk, j));
      }
      left_.push_back(std::move(l));
      right_.push_back(std::move(r));
      std::map<int, std::vector<int>> groups;
      for (int e = 0; e < nv; ++e) groups[sys.index_of(t.X.D & t.X.E & sys.P0[e])].push_back(e);
      targets_.emplace_back(groups.begin(), groups.end());
      if (!t.eta.is_time())
        for (int c = 0; c < t_end; ++c) {
          auto key = std::make_tuple(static_cast<int>(t.eta.type), t.eta.k, c);
          if (!inc_.count(key)) inc_.emplace(key, increment(Fk, t.eta, c, c + 1));
        }
    }
    for (int v = 0; v < nv; ++v) init_.push_back({sys.initial_of(v, Fk.grid().h0_dim), Fk.projection(sys.P0[v])});
  }

  const FockSpace& fock() const { return Fk_; }
  const SDESystem& system() const { return sys_; }
  int t_end() const { return t_end_; }
  int terms() const { return static_cast<int>(sys_.terms.size()); }
  int components() const { return static_cast<int>(sys_.P0.size()); }
  const std::vector<std::pair<int, std::vector<int>>>& targets(int i) const { return targets_[i]; }
  bool is_time(int i) const { return sys_.terms[i].eta.is_time(); }
  bool active(int i, int c) const { return sys_.terms[i].X.interval_of(c) >= 0; }

  Vec initial(int v, const Vec& x) const { return init_[v].apply(x); }

  // coef · F(c) G(c) v
  Vec drift(int i, int c, const Vec& v) const {
    int j = sys_.terms[i].X.interval_of(c);
    return sys_.terms[i].X.coef * left_[i][j].apply(right_[i][j].apply(v));
  }
  // coef · F(c) ΔA_c G(c) v
  Vec noise(int i, int c, const Vec& v) const {
    int j = sys_.terms[i].X.interval_of(c);
    return sys_.terms[i].X.coef * left_[i][j].apply(inc_apply(i, c, right_[i][j].apply(v), false));
  }
  Vec drift_adjoint(int i, int c, const Vec& v) const {
    int j = sys_.terms[i].X.interval_of(c);
    return std::conj(sys_.terms[i].X.coef) * right_[i][j].adjoint().apply(left_[i][j].adjoint().apply(v));
  }
  Vec noise_adjoint(int i, int c, const Vec& v) const {
    int j = sys_.terms[i].X.interval_of(c);
    Vec z = inc_apply(i, c, left_[i][j].adjoint().apply(v), true);
    return std::conj(sys_.terms[i].X.coef) * right_[i][j].adjoint().apply(z);
  }

 private:
  Vec inc_apply(int i, int c, const Vec& v, bool adjoint) const {
    const ProcessKind& eta = sys_.terms[i].eta;
    const SpMat& A = inc_.at(std::make_tuple(static_cast<int>(eta.type), eta.k, c));
    const int nf = Fk_.dim(), d = Fk_.grid().h0_dim;
    Eigen::Map<const Mat> X(v.data(), nf, d);
    Mat Y = adjoint ? Mat(A.adjoint() * X) : Mat(A * X);
    return Eigen::Map<const Vec>(Y.data(), Y.size());
  }

  const FockSpace& Fk_;
  const SDESystem& sys_;
  int t_end_;
  std::vector<std::vector<KronOp>> left_, right_;
  std::vector<std::vector<std::pair<int, std::vector<int>>>> targets_;
  std::map<std::tuple<int, int, int>, SpMat> inc_;
  std::vector<KronOp> init_;
};

// I_V(cΔ + τ) x = Σ_p cell[v][c][p] τ^p inside cell c; end[v] at t_end.
struct IterateState {
  std::vector<std::vector<std::vector<Vec>>> cell;
  std::vector<Vec> end;

  const Vec& at(int v, int c) const { return c < static_cast<int>(cell[v].size()) ? cell[v][c][0] : end[v]; }
};

inline IterateState constant_state(const SystemOps& ops, const std::vector<Vec>& values) {
  IterateState s;
  for (auto& v : values) {
    s.cell.emplace_back(ops.t_end(), std::vector<Vec>{v});
    s.end.push_back(v);
  }
  return s;
}

// One application of the right-hand side of the integral equation.
inline IterateState picard_map(const SystemOps& ops, const IterateState& prev, const std::vector<Vec>& base) {
  const int nv = ops.components(), T = ops.t_end();
  const double delta = ops.fock().grid().delta();
  const Eigen::Index n = base[0].size();
  IterateState next;
  next.cell.assign(nv, std::vector<std::vector<Vec>>(T));
  std::vector<Vec> run = base;
  for (int c = 0; c < T; ++c) {
    std::vector<Vec> inc(nv, Vec::Zero(n));
    for (int v = 0; v < nv; ++v) next.cell[v][c] = {run[v]};
    for (int i = 0; i < ops.terms(); ++i) {
      if (!ops.active(i, c)) continue;
      for (auto& [tgt, es] : ops.targets(i)) {
        if (!ops.is_time(i)) {
          Vec s = Vec::Zero(n);
          for (int e : es) s += prev.cell[e][c][0];
          inc[tgt] += ops.noise(i, c, s);
          continue;
        }
        size_t deg = 0;
        for (int e : es) deg = std::max(deg, prev.cell[e][c].size());
        auto& poly = next.cell[tgt][c];
        if (poly.size() < deg + 1) poly.resize(deg + 1, Vec::Zero(n));
        for (size_t p = 0; p < deg; ++p) {
          Vec s = Vec::Zero(n);
          for (int e : es)
            if (p < prev.cell[e][c].size()) s += prev.cell[e][c][p];
          Vec w = ops.drift(i, c, s);
          poly[p + 1] += w / double(p + 1);
          inc[tgt] += w * (std::pow(delta, double(p + 1)) / double(p + 1));
        }
      }
    }
    for (int v = 0; v < nv; ++v) {
      run[v] += inc[v];
      auto& poly = next.cell[v][c];
      double scale = 1.0 + poly[0].norm();
      while (poly.size() > 1 && poly.back().norm() * std::pow(delta, double(poly.size() - 1)) <= 1e-18 * scale)
        poly.pop_back();
    }
  }
  next.end = run;
  return next;
}

}  // namespace detail

// ---- Picard iteration ----

struct ProbePath {
  std::vector<std::vector<Vec>> comp;  // comp[v][c] = I_V(c) x, c = 0..t_end

  Vec total(int c) const {
    Vec s = Vec::Zero(comp[0][c].size());
    for (auto& p : comp) s += p[c];
    return s;
  }
};

struct IterateRecord {
  int n = 0;
  double max_deviation = 0;  // sup over probes, filters and grid times of ‖(I^(n) - I^(n-1))x‖
  double max_log_ratio = -std::numeric_limits<double>::infinity();  // log(measured² / bound)
};

struct PicardOptions {
  int n_iter = 40;
  double tol = 1e-9;
  std::vector<Mat> start;  // zeroth iterate Ī'_V ⊗ P^(V); empty means I^(0)
  bool check_bound = true;
};

struct PicardReport {
  int p0_size = 0;
  double l0 = 0, kT = 0;
  std::vector<double> nu_T, x_norm2;
  std::vector<std::vector<double>> nu_t;  // per probe, per grid time
  std::vector<IterateRecord> iterates;
  bool converged = false;
  int iterations = 0;
  double residual = 0;
  std::vector<ProbePath> solution;

  // log of 2^n |P0|^{6n} e^{n ν(T)} k_T^n l0 ‖x‖² ν(t)^n / n!
  double log_bound(int n, int probe, int c) const {
    if (kT <= 0 || l0 <= 0 || (c == 0 && n > 0)) return -std::numeric_limits<double>::infinity();
    return n * std::log(2.0) + 6.0 * n * std::log(double(p0_size)) + n * nu_T[probe] + n * std::log(kT) +
           std::log(l0) + std::log(x_norm2[probe]) + n * std::log(nu_t[probe][c]) - std::lgamma(n + 1.0);
  }
  bool bound_ok() const {
    for (auto& r : iterates)
      if (r.max_log_ratio > 1e-9) return false;
    return true;
  }
};

// sup_t ‖Σ_i coef_i F_i G_i‖ per cell, computed blockwise: the Fock parts of
// bounded words are diagonal 0-1 matrices.
inline double coefficient_norm(const FockSpace& Fk, const std::vector<const SimpleBiprocess*>& Xs, int c) {
  const int d = Fk.grid().h0_dim;
  std::vector<Mat> M;
  std::vector<Eigen::VectorXd> diag;
  for (auto* X : Xs) {
    int j = X->interval_of(c);
    if (j < 0) continue;
    KronOp l = X->left(Fk, j), r = X->right(Fk, j);
    M.push_back(X->coef * l.h0 * r.h0);
    SpMat P = l.fock * r.fock;
    Eigen::VectorXd dg = Eigen::VectorXd::Zero(Fk.dim());
    for (int row = 0; row < P.outerSize(); ++row)
      for (SpMat::InnerIterator it(P, row); it; ++it)
        if (it.row() == it.col()) dg(row) = std::abs(it.value());
    diag.push_back(dg);
  }
  if (M.empty()) return 0;
  if (M.size() > 63) {
    double s = 0;
    for (auto& m : M) s += spectral_norm(m);
    return s;
  }
  std::map<uint64_t, double> seen;
  double worst = 0;
  for (int s = 0; s < Fk.dim(); ++s) {
    uint64_t key = 0;
    for (size_t i = 0; i < M.size(); ++i)
      if (diag[i](s) > 0.5) key |= uint64_t(1) << i;
    if (!key || seen.count(key)) continue;
    Mat sum = Mat::Zero(d, d);
    for (size_t i = 0; i < M.size(); ++i)
      if (key >> i & 1) sum += M[i];
    worst = std::max(worst, seen[key] = spectral_norm(sum));
  }
  return worst;
}

// k_T = max over (C, D) of Σ_η sup_{t < T} ‖B^η_{C,D}(t)‖².
inline double coefficient_constant(const FockSpace& Fk, const SDESystem& sys, int t_end) {
  std::map<std::pair<int, int>, std::map<std::pair<int, int>, std::vector<const SimpleBiprocess*>>> groups;
  for (auto& t : sys.terms)
    groups[{sys.index_of(t.X.D), sys.index_of(t.X.E)}][{static_cast<int>(t.eta.type), t.eta.k}].push_back(&t.X);
  double kT = 0;
  for (auto& [cd, by_eta] : groups) {
    double s = 0;
    for (auto& [eta, Xs] : by_eta) {
      double sup = 0;
      for (int c = 0; c < t_end; ++c) sup = std::max(sup, coefficient_norm(Fk, Xs, c));
      s += sup * sup;
    }
    kT = std::max(kT, s);
  }
  return kT;
}

inline PicardReport picard_solve(const FockSpace& Fk, const SDESystem& sys, const std::vector<ExpState>& probes,
                                 int t_end, const PicardOptions& opt = {}) {
  detail::SystemOps ops(Fk, sys, t_end);
  const GridSpec& g = Fk.grid();
  const int nv = ops.components(), np = static_cast<int>(probes.size());
  if (!opt.start.empty() && opt.start.size() != sys.P0.size())
    throw std::invalid_argument("one starting value per filter");
  PicardReport rep;
  rep.p0_size = nv;
  for (int v = 0; v < nv; ++v) rep.l0 = std::max(rep.l0, std::pow(spectral_norm(sys.initial_of(v, g.h0_dim)), 2));
  rep.kT = coefficient_constant(Fk, sys, t_end);
  for (auto& x : probes) {
    MeasureDensity nu = nu_u(x.u);
    std::vector<double> path;
    for (int c = 0; c <= t_end; ++c) path.push_back(std::real(nu.mass(0, c)));
    rep.nu_t.push_back(path);
    rep.nu_T.push_back(path.back());
    rep.x_norm2.push_back(exp_norm2(x));
  }
  const bool check = opt.check_bound && opt.start.empty();

  std::vector<std::vector<Vec>> base(np);
  std::vector<detail::IterateState> cur(np);
  for (int q = 0; q < np; ++q) {
    Vec xv = probes[q].materialize(Fk);
    for (int v = 0; v < nv; ++v) base[q].push_back(ops.initial(v, xv));
    if (opt.start.empty()) {
      cur[q] = detail::constant_state(ops, base[q]);
    } else {
      std::vector<Vec> s;
      for (int v = 0; v < nv; ++v) {
        Mat m = opt.start[v].size() ? opt.start[v] : Mat::Zero(g.h0_dim, g.h0_dim);
        s.push_back(KronOp{m, Fk.projection(sys.P0[v])}.apply(xv));
      }
      cur[q] = detail::constant_state(ops, s);
    }
  }

  auto step = [&](int n, std::vector<detail::IterateState>& state) {
    IterateRecord rec{n};
    std::vector<double> dev(np, 0), ratio(np, -std::numeric_limits<double>::infinity());
    parallel_for(np, [&](int q) {
      detail::IterateState next = detail::picard_map(ops, state[q], base[q]);
      for (int v = 0; v < nv; ++v)
        for (int c = 0; c <= t_end; ++c) {
          double d2 = (next.at(v, c) - state[q].at(v, c)).squaredNorm();
          dev[q] = std::max(dev[q], std::sqrt(d2));
          if (!check || d2 <= 1e-30) continue;
          ratio[q] = std::max(ratio[q], std::log(d2) - rep.log_bound(n, q, c));
        }
      state[q] = std::move(next);
    });
    for (int q = 0; q < np; ++q) {
      rec.max_deviation = std::max(rec.max_deviation, dev[q]);
      rec.max_log_ratio = std::max(rec.max_log_ratio, ratio[q]);
    }
    rep.iterates.push_back(rec);
    if (check && rec.max_log_ratio > 1e-9) throw std::logic_error("Picard deviation exceeds the a priori bound");
    return rec.max_deviation;
  };

  for (int n = 1; n <= opt.n_iter; ++n) {
    rep.iterations = n;
    if (step(n, cur) < opt.tol) {
      rep.converged = true;
      break;
    }
  }
  std::vector<detail::IterateState> probe_state = cur;
  rep.residual = step(rep.iterations + 1, probe_state);
  rep.iterates.pop_back();
  for (int q = 0; q < np; ++q) {
    ProbePath p;
    for (int v = 0; v < nv; ++v) {
      std::vector<Vec> path;
      for (int c = 0; c <= t_end; ++c) path.push_back(cur[q].at(v, c));
      p.comp.push_back(std::move(path));
    }
    rep.solution.push_back(std::move(p));
  }
  return rep;
}

// ---- one-step form of the total solution ----

// I(c+1) = M_c I(c) with M_c = exp(Δ B⁰_c) + Σ_{η ≠ 0} coef F ΔA^η_c G. Valid for
// the total I = Σ_V I_V of every system, since the sum over E of I_E is I.
class StepEvolution {
 public:
  StepEvolution(const FockSpace& Fk, const SDESystem& sys, int t_end) : ops_(Fk, sys, t_end) {}

  Vec step(int c, const Vec& v, bool adjoint) const {
    const double delta = ops_.fock().grid().delta();
    Vec out = v, term = v;
    for (int p = 1; p < 200; ++p) {
      Vec nxt = Vec::Zero(v.size());
      bool any = false;
      for (int i = 0; i < ops_.terms(); ++i)
        if (ops_.is_time(i) && ops_.active(i, c)) {
          nxt += adjoint ? ops_.drift_adjoint(i, c, term) : ops_.drift(i, c, term);
          any = true;
        }
      if (!any) break;
      term = nxt * (delta / p);
      out += term;
      if (term.norm() <= 1e-18 * (1.0 + out.norm())) break;
    }
    for (int i = 0; i < ops_.terms(); ++i)
      if (!ops_.is_time(i) && ops_.active(i, c)) out += adjoint ? ops_.noise_adjoint(i, c, v) : ops_.noise(i, c, v);
    return out;
  }

  Vec initial(const Vec& x, bool adjoint) const {
    Vec s = Vec::Zero(x.size());
    for (int v = 0; v < ops_.components(); ++v) {
      KronOp op{ops_.system().initial_of(v, ops_.fock().grid().h0_dim), ops_.fock().projection(ops_.system().P0[v])};
      s += adjoint ? op.adjoint().apply(x) : op.apply(x);
    }
    return s;
  }

  // I(t) x
  Vec apply(const Vec& x, int t) const {
    Vec v = initial(x, false);
    for (int c = 0; c < t; ++c) v = step(c, v, false);
    return v;
  }
  // I(t)* x
  Vec apply_adjoint(const Vec& x, int t) const {
    Vec v = x;
    for (int c = t - 1; c >= 0; --c) v = step(c, v, true);
    return initial(v, true);
  }

 private:
  detail::SystemOps ops_;
};

// ---- independence of adaptedness types ----

struct IndependenceResult {
  bool applicable = true;
  bool independent = true;  // no component detected as nonzero
  bool sum_vanishes = true;  // Σ Y_V x = 0 on every probe used
  std::optional<Filter> witness;
  std::optional<ExpState> witness_probe;
  double witness_norm = 0;
};

// Components Y_V(t) = Ỹ_V ⊗ P^(V) on the future of t, listed in an order
// satisfying the new-color condition. Peels off the last component with a
// probe whose future part lives on a color only that component contains.
inline IndependenceResult independence_test(const FockSpace& Fk, const std::vector<std::pair<Filter, SpMat>>& comps,
                                            int t, const std::vector<ExpState>& past_probes, double amplitude = 0.5) {
  const GridSpec& g = Fk.grid();
  check_time(g, t);
  IndependenceResult res;
  std::vector<Filter> order;
  for (auto& c : comps) order.push_back(c.first);
  if (!new_color_condition(order, g.n_colors) || t >= g.n_cells) {
    res.applicable = false;
    return res;
  }
  auto sum_apply = [&](int upto, const Vec& x) {
    Vec s = Vec::Zero(x.size());
    for (int i = 0; i <= upto; ++i) s += comps[i].second * x;
    return s;
  };
  double scale = 1.0;
  for (auto& c : comps) scale = std::max(scale, max_abs(c.second));
  const double thresh = 1e-10 * scale;
  for (int i = static_cast<int>(comps.size()) - 1; i >= 0; --i) {
    uint32_t earlier = 0;
    for (int j = 0; j < i; ++j) earlier |= order[j].mask_on(g.n_colors);
    uint32_t fresh = order[i].mask_on(g.n_colors) & ~earlier;
    for (auto& p : past_probes) {
      ExpState xp{p.w, p.u.past(t)};
      Vec xv = xp.materialize(Fk);
      Vec sp = sum_apply(i, xv);
      if (i == static_cast<int>(comps.size()) - 1 && sp.norm() > thresh) res.sum_vanishes = false;
      if (fresh == 0) {
        // only the first member adds no color; it is the last one left
        if (sp.norm() > thresh) {
          res.independent = false;
          res.witness = order[i];
          res.witness_probe = xp;
          res.witness_norm = sp.norm();
          return res;
        }
        continue;
      }
      int k = __builtin_ctz(fresh) + 1;
      ExpState x{p.w, xp.u + indicator(g, t, g.n_cells, k) * cplx(amplitude)};
      Vec s = sum_apply(i, x.materialize(Fk));
      if (i == static_cast<int>(comps.size()) - 1 && s.norm() > thresh) res.sum_vanishes = false;
      double diff = (s - sp).norm();
      if (diff > thresh) {
        res.independent = false;
        res.witness = order[i];
        res.witness_probe = x;
        res.witness_norm = diff;
        return res;
      }
    }
  }
  return res;
}

// ---- m-free equations ----

// F_i ⊗ G_i against l^(m), l^(m)*, l^(m)∘ and l^(m)· in this order.
struct MFreeSystem {
  std::array<Biprocess, 4> X;
  std::vector<std::pair<Filter, Mat>> initial;
};

inline MFreeSort mfree_sort_of(int i) {
  static const MFreeSort s[4] = {MFreeSort::Ann, MFreeSort::Cre, MFreeSort::Num, MFreeSort::Time};
  return s[i];
}

// The filtered system: creation projects G by P^[k-1], annihilation F by
// P^[k-1], number F by P^[k] and time F by P^(m). Its filter collection is the
// intersection closure of 𝒫₀^(m) and the filters the coefficients use.
inline SDESystem mfree_sde_expand(const MFreeSystem& s, int m, const GridSpec& g) {
  if (m < 1 || m > g.n_colors) throw std::out_of_range("level must be in 1..C");
  std::vector<SDETerm> terms;
  std::vector<Filter> filters = mfree_filters(m);
  for (int i = 0; i < 4; ++i)
    for (const auto& e : expansion(MFreeKind{m, mfree_sort_of(i)}))
      for (auto& t : rewrite_projected(s.X[i], e.eta, e.proj).terms) {
        terms.push_back({e.eta, t});
        filters.push_back(t.D);
        filters.push_back(t.E);
      }
  for (auto& [V, M] : s.initial) filters.push_back(V);
  SDESystem sys;
  sys.P0 = intersection_closure(filters);
  sys.terms = std::move(terms);
  sys.initial.assign(sys.P0.size(), Mat());
  for (auto& [V, M] : s.initial) {
    int v = sys.index_of(V);
    sys.initial[v] = sys.initial[v].size() ? Mat(sys.initial[v] + M) : M;
  }
  return sys;
}

// Number of (η, projection) summands per sort, before the signed split.
inline int mfree_eta_terms(int m) {
  int n = 0;
  for (int i = 0; i < 4; ++i) n += static_cast<int>(expansion(MFreeKind{m, mfree_sort_of(i)}).size());
  return n;
}

// F ranges inside colors 1..p: the filter of F and its past projections sit in {1..p}.
inline bool range_within(const SimpleBiprocess& X, int p) {
  Filter lim = Filter::first(p);
  if (!X.D.subset_of(lim)) return false;
  for (auto& w : X.F) {
    Filter past = Filter::full();
    for (auto& f : w.factors)
      if (f.kind == Factor::Kind::PastProj && !f.fixed_window()) past = past & f.V;
    if (!past.subset_of(lim)) return false;
  }
  return true;
}

struct StabilizationReport {
  std::vector<int> m_list;
  std::vector<double> diff_to_next;  // sup over probes and grid times of ‖(I_(m) - I_(m'))x‖
  int m_star = -1;                   // -1 when no stabilization inside m_list
  double tolerance = 1e-12;
  bool stabilized() const { return m_star > 0; }
};

inline std::vector<std::vector<Vec>> total_paths(const PicardReport& r) {
  std::vector<std::vector<Vec>> out;
  for (auto& p : r.solution) {
    std::vector<Vec> path;
    for (size_t c = 0; c < p.comp[0].size(); ++c) path.push_back(p.total(static_cast<int>(c)));
    out.push_back(std::move(path));
  }
  return out;
}

// Solves the expanded system for each m with a fixed iteration count and
// reports the first m after which all solutions agree.
inline StabilizationReport stabilization_sweep(const FockSpace& Fk, const MFreeSystem& s, int p,
                                               const std::vector<int>& m_list, const std::vector<ExpState>& probes,
                                               int t_end, int n_iter = 40) {
  for (auto& X : s.X)
    for (auto& t : X.terms)
      if (!range_within(t, p)) throw std::invalid_argument("coefficient range exceeds the color-support bound");
  StabilizationReport rep;
  rep.m_list = m_list;
  std::vector<std::vector<std::vector<Vec>>> sols;
  PicardOptions opt;
  opt.n_iter = n_iter;
  opt.tol = 0;
  opt.check_bound = false;
  for (int m : m_list) sols.push_back(total_paths(picard_solve(Fk, mfree_sde_expand(s, m, Fk.grid()), probes, t_end, opt)));
  auto diff = [&](size_t a, size_t b) {
    double d = 0;
    for (size_t q = 0; q < probes.size(); ++q)
      for (size_t c = 0; c < sols[a][q].size(); ++c) d = std::max(d, (sols[a][q][c] - sols[b][q][c]).norm());
    return d;
  };
  for (size_t i = 0; i + 1 < m_list.size(); ++i) rep.diff_to_next.push_back(diff(i, i + 1));
  for (size_t i = 0; i < m_list.size(); ++i) {
    bool ok = true;
    for (size_t j = i + 1; j < m_list.size() && ok; ++j) ok = diff(i, j) <= rep.tolerance;
    if (ok && i + 1 < m_list.size()) {
      rep.m_star = m_list[i];
      break;
    }
  }
  return rep;
}

// ---- unitarity ----

struct UnitarityCoefficients {
  std::vector<SpMat> ann, cre, num;  // B^(k), B^(k)*, B^(k)∘ for k = 1..C
  SpMat time;                        // B^(0)
};

// B^η(t) = Σ_{(D,E)} 1^η_{D,E} B^η_{D,E}(t) at a grid cell.
inline UnitarityCoefficients assemble_coefficients(const FockSpace& Fk, const SDESystem& sys, int cell) {
  const int n = Fk.full_dim(), C = Fk.grid().n_colors;
  UnitarityCoefficients B;
  B.ann.assign(C, SpMat(n, n));
  B.cre.assign(C, SpMat(n, n));
  B.num.assign(C, SpMat(n, n));
  B.time = SpMat(n, n);
  for (auto& t : sys.terms) {
    int j = t.X.interval_of(cell);
    if (j < 0 || !multiplier(t.eta, t.X.D, t.X.E)) continue;
    SpMat P = (t.X.left(Fk, j) * t.X.right(Fk, j)).materialize() * t.X.coef;
    switch (t.eta.type) {
      case ProcessKind::Type::Ann: B.ann[t.eta.k - 1] += P; break;
      case ProcessKind::Type::Cre: B.cre[t.eta.k - 1] += P; break;
      case ProcessKind::Type::Num: B.num[t.eta.k - 1] += P; break;
      default: B.time += P;
    }
  }
  return B;
}

// [F]_k = Σ_{V ∋ k} F_V.
inline SpMat color_slice(const std::vector<std::pair<Filter, SpMat>>& comps, int k) {
  if (comps.empty()) throw std::invalid_argument("no components");
  SpMat s(comps[0].second.rows(), comps[0].second.cols());
  for (auto& [V, F] : comps)
    if (V.contains(k)) s += F;
  return s;
}

inline SpMat sp_identity(int n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

struct UnitarityReport {
  std::vector<double> cond_i, cond_ii, cond_iii;  // per grid cell, max over k; residuals are largest entries
  double tolerance = 1e-10;

  static double worst(const std::vector<double>& v) { return v.empty() ? 0 : *std::max_element(v.begin(), v.end()); }
  bool pass_i() const { return worst(cond_i) <= tolerance; }
  bool pass_ii() const { return worst(cond_ii) <= tolerance; }
  bool pass_iii() const { return worst(cond_iii) <= tolerance; }
  bool pass() const { return pass_i() && pass_ii() && pass_iii(); }
  double max_residual() const { return std::max({worst(cond_i), worst(cond_ii), worst(cond_iii)}); }
  std::string failing() const {
    std::string s;
    if (!pass_i()) s += "(i)";
    if (!pass_ii()) s += std::string(s.empty() ? "" : ",") + "(ii)";
    if (!pass_iii()) s += std::string(s.empty() ? "" : ",") + "(iii)";
    return s;
  }
};

inline void unitarity_residuals(const UnitarityCoefficients& B, double& r1, double& r2, double& r3) {
  const int n = static_cast<int>(B.time.rows());
  SpMat I = sp_identity(n);
  r1 = r2 = 0;
  SpMat iii = B.time + SpMat(B.time.adjoint());
  for (size_t k = 0; k < B.num.size(); ++k) {
    SpMat W = B.num[k] + I;
    SpMat Wa = W.adjoint();
    r1 = std::max({r1, max_abs(SpMat(SpMat(Wa * W) - I)), max_abs(SpMat(SpMat(W * Wa) - I))});
    SpMat La = B.cre[k].adjoint();
    r2 = std::max(r2, max_abs(SpMat(La + B.ann[k] + SpMat(La * B.num[k]))));
    iii += SpMat(La * B.cre[k]);
  }
  r3 = max_abs(iii);
}

inline UnitarityReport unitarity_check(const FockSpace& Fk, const SDESystem& sys, int t_end) {
  sys.validate(Fk.grid());
  check_time(Fk.grid(), t_end);
  UnitarityReport rep;
  for (int c = 0; c < t_end; ++c) {
    double r1, r2, r3;
    unitarity_residuals(assemble_coefficients(Fk, sys, c), r1, r2, r3);
    rep.cond_i.push_back(r1);
    rep.cond_ii.push_back(r2);
    rep.cond_iii.push_back(r3);
  }
  return rep;
}

// Hudson-Parthasarathy generator: L_k dA*(k), -L_k* S_k dA(k), (S_k - 1) dN(k),
// -(iH + ½ Σ L_k* L_k) dT.
inline SDESystem hp_system(const GridSpec& g, const std::vector<Mat>& L, const std::vector<Mat>& S, const Mat& H) {
  const int d = g.h0_dim;
  std::vector<SDETerm> terms;
  Mat K = cplx(0, -1) * H;
  for (size_t i = 0; i < L.size(); ++i) {
    int k = static_cast<int>(i) + 1;
    terms.push_back(ampliation_term(g, ProcessKind::cre(k), "L" + std::to_string(k), L[i]));
    terms.push_back(ampliation_term(g, ProcessKind::ann(k), "-L" + std::to_string(k) + "*S" + std::to_string(k),
                                    -L[i].adjoint() * S[i]));
    terms.push_back(
        ampliation_term(g, ProcessKind::num(k), "S" + std::to_string(k) + "-1", S[i] - Mat::Identity(d, d)));
    K -= 0.5 * L[i].adjoint() * L[i];
  }
  terms.push_back(ampliation_term(g, ProcessKind::time(), "K", K));
  return boson_system(g, std::move(terms));
}

// ---- m-free unitarity ----

struct MFreeUnitarityReport {
  double general_i = 0, general_ii = 0, general_iii = 0;  // on the expanded system
  double truncated_ii = 0;   // ‖(F1 + G2*) P^(m)‖
  double truncated_iii = 0;  // ‖F4 P^(m) G4 + G4* P^(m) F4* + G2* P^(m) G2‖
  double displayed_iii = 0;  // the same with G2* G2 in the last term
  double free_ii = 0;        // ‖F1 + G2*‖
  double free_iii = 0;       // ‖F4 G4 + G4* F4* + G2* G2‖
};

// Σ coef F(c) P G(c) over the terms of X.
inline SpMat sandwich(const FockSpace& Fk, const Biprocess& X, int cell, const SpMat* P) {
  SpMat s(Fk.full_dim(), Fk.full_dim());
  for (auto& t : X.terms) {
    int j = t.interval_of(cell);
    if (j < 0) continue;
    SpMat l = t.left(Fk, j).materialize(), r = t.right(Fk, j).materialize();
    s += (P ? SpMat(l * *P * r) : SpMat(l * r)) * t.coef;
  }
  return s;
}

inline bool identity_side(const Biprocess& X, bool left) {
  for (auto& t : X.terms) {
    if (!(left ? t.D : t.E).is_full()) return false;
    for (auto& w : left ? t.F : t.G)
      if (!w.factors.empty() || w.scalar != cplx(1.0)) return false;
  }
  return true;
}

// Requires F3 = G3 = 0, F2 = 1 and G1 = 1.
inline MFreeUnitarityReport mfree_unitarity_check(const FockSpace& Fk, const MFreeSystem& s, int m, int t_end) {
  if (!s.X[2].terms.empty() || !identity_side(s.X[1], true) || !identity_side(s.X[0], false))
    throw std::invalid_argument("needs F3 = G3 = 0, F2 = 1 and G1 = 1");
  MFreeUnitarityReport rep;
  UnitarityReport gen = unitarity_check(Fk, mfree_sde_expand(s, m, Fk.grid()), t_end);
  rep.general_i = UnitarityReport::worst(gen.cond_i);
  rep.general_ii = UnitarityReport::worst(gen.cond_ii);
  rep.general_iii = UnitarityReport::worst(gen.cond_iii);
  KronOp Pm{Mat::Identity(Fk.grid().h0_dim, Fk.grid().h0_dim), Fk.projection(Filter::first(m - 1))};
  SpMat P = Pm.materialize();
  for (int c = 0; c < t_end; ++c) {
    SpMat F1 = sandwich(Fk, s.X[0], c, nullptr), G2 = sandwich(Fk, s.X[1], c, nullptr);
    SpMat A = sandwich(Fk, s.X[3], c, &P), Afree = sandwich(Fk, s.X[3], c, nullptr);
    SpMat G2a = G2.adjoint();
    SpMat sum = F1 + G2a;
    rep.truncated_ii = std::max(rep.truncated_ii, max_abs(SpMat(sum * P)));
    rep.free_ii = std::max(rep.free_ii, max_abs(sum));
    SpMat head = A + SpMat(A.adjoint());
    rep.truncated_iii = std::max(rep.truncated_iii, max_abs(SpMat(head + SpMat(G2a * P * G2))));
    rep.displayed_iii = std::max(rep.displayed_iii, max_abs(SpMat(head + SpMat(G2a * G2))));
    rep.free_iii = std::max(rep.free_iii, max_abs(SpMat(Afree + SpMat(Afree.adjoint()) + SpMat(G2a * G2))));
  }
  return rep;
}

// ---- unitary evolution on refining meshes ----

inline bool is_ampliation(const SimpleBiprocess& X, int n_colors) {
  auto check = [&](const std::vector<Word>& side, const Filter& V) {
    for (auto& w : side) {
      Filter past = Filter::full();
      for (auto& f : w.factors) {
        if (f.kind == Factor::Kind::Matrix) continue;
        if (f.kind != Factor::Kind::PastProj || f.fixed_window()) return false;
        past = past & f.V;
      }
      if (past.mask_on(n_colors) != V.mask_on(n_colors) && !(past.is_full() && V.is_full())) return false;
    }
    return true;
  };
  return check(X.F, X.D) && check(X.G, X.E);
}

struct MeshDefect {
  int n_cells = 0;
  double isometry = 0;    // sup |<U x, U y> - <x, y>|
  double coisometry = 0;  // sup |<U* x, U* y> - <x, y>|
  double picard_vs_step = 0;
  int picard_iterations = 0;
  bool picard_converged = false;
};

struct DefectReport {
  std::vector<MeshDefect> meshes;
  std::vector<double> orders;  // log2 of successive isometry-defect ratios
  double mean_order() const {
    double s = 0;
    for (double o : orders) s += o;
    return orders.empty() ? 0 : s / orders.size();
  }
  bool order_within(double lo, double hi) const {
    double m = mean_order();
    return !orders.empty() && m >= lo && m <= hi;
  }
};

using SystemBuilder = std::function<SDESystem(const GridSpec&)>;

// Probes are given on base and refined to each mesh, so every mesh sees the
// same exponential states.
inline DefectReport evolve_and_test_unitary(const GridSpec& base, const SystemBuilder& build,
                                            const std::vector<int>& meshes, const std::vector<ExpState>& probes,
                                            const PicardOptions& opt = {}) {
  DefectReport rep;
  for (int N : meshes) {
    GridSpec g = base;
    g.n_cells = N;
    FockSpace Fk(g);
    SDESystem sys = build(g);
    if (!admissible_check(sys.P0)) throw std::invalid_argument("filter collection is not admissible");
    for (auto& t : sys.terms)
      if (!is_ampliation(t.X, g.n_colors)) throw std::invalid_argument("coefficients must be ampliations");
    std::vector<ExpState> xs;
    for (auto& p : probes) xs.push_back(refine_probe(p, g));
    PicardReport pr = picard_solve(Fk, sys, xs, N, opt);
    StepEvolution ev(Fk, sys, N);
    MeshDefect md{N};
    md.picard_iterations = pr.iterations;
    md.picard_converged = pr.converged;
    std::vector<Vec> xv, Ux, Usx;
    for (size_t q = 0; q < xs.size(); ++q) {
      xv.push_back(xs[q].materialize(Fk));
      Ux.push_back(pr.solution[q].total(N));
      md.picard_vs_step = std::max(md.picard_vs_step, (Ux.back() - ev.apply(xv.back(), N)).norm());
      Usx.push_back(ev.apply_adjoint(xv.back(), N));
    }
    for (size_t a = 0; a < xs.size(); ++a)
      for (size_t b = 0; b < xs.size(); ++b) {
        cplx ref = xv[a].dot(xv[b]);
        md.isometry = std::max(md.isometry, std::abs(Ux[a].dot(Ux[b]) - ref));
        md.coisometry = std::max(md.coisometry, std::abs(Usx[a].dot(Usx[b]) - ref));
      }
    rep.meshes.push_back(md);
  }
  for (size_t i = 0; i + 1 < rep.meshes.size(); ++i)
    rep.orders.push_back(std::log2(rep.meshes[i].isometry / rep.meshes[i + 1].isometry));
  return rep;
}

}  // namespace ffock

#endif  // FILTERED_FOCK_SDE_HPP
