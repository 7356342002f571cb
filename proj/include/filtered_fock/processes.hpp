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

#ifndef FILTERED_FOCK_PROCESSES_HPP
#define FILTERED_FOCK_PROCESSES_HPP

#include <optional>
#include <string>
#include <vector>

#include "filtered_fock/fock.hpp"

namespace ffock {

// Index set of fundamental processes: annihilation (k), creation (k)*,
// number (k)o and time (0).
struct ProcessKind {
  enum class Type { Ann, Cre, Num, Time };
  Type type = Type::Time;
  int k = 0;

  static ProcessKind ann(int k) { return {Type::Ann, k}; }
  static ProcessKind cre(int k) { return {Type::Cre, k}; }
  static ProcessKind num(int k) { return {Type::Num, k}; }
  static ProcessKind time() { return {Type::Time, 0}; }

  bool is_time() const { return type == Type::Time; }
  ProcessKind dual() const {
    switch (type) {
      case Type::Ann: return cre(k);
      case Type::Cre: return ann(k);
      default: return *this;
    }
  }
  bool operator==(const ProcessKind& o) const { return type == o.type && k == o.k; }
  bool operator!=(const ProcessKind& o) const { return !(*this == o); }

  std::string dsl() const {
    switch (type) {
      case Type::Ann: return "dA(" + std::to_string(k) + ")";
      case Type::Cre: return "dA*(" + std::to_string(k) + ")";
      case Type::Num: return "dN(" + std::to_string(k) + ")";
      default: return "dT";
    }
  }
};

// All kinds over colors 1..C, in canonical order.
inline std::vector<ProcessKind> all_kinds(int n_colors) {
  std::vector<ProcessKind> v;
  for (int k = 1; k <= n_colors; ++k) v.push_back(ProcessKind::ann(k));
  for (int k = 1; k <= n_colors; ++k) v.push_back(ProcessKind::cre(k));
  for (int k = 1; k <= n_colors; ++k) v.push_back(ProcessKind::num(k));
  v.push_back(ProcessKind::time());
  return v;
}

// A^η_{c1Δ} - A^η_{c0Δ} on the Fock factor.
inline SpMat increment(const FockSpace& F, const ProcessKind& eta, int c0, int c1) {
  if (c0 < 0 || c1 > F.grid().n_cells || c0 > c1) throw std::out_of_range("time off grid");
  switch (eta.type) {
    case ProcessKind::Type::Ann: return F.annihilation(eta.k, c0, c1);
    case ProcessKind::Type::Cre: return F.creation(eta.k, c0, c1);
    case ProcessKind::Type::Num: return F.number(eta.k, c0, c1);
    default: return F.identity() * cplx((c1 - c0) * F.grid().delta());
  }
}

// CCR process value A^η_t at grid index t.
inline SpMat fundamental(const FockSpace& F, const ProcessKind& eta, int t) { return increment(F, eta, 0, t); }

struct FilteredKind {
  ProcessKind eta;
  Filter V;

  // Number uses V ∪ {k}.
  Filter effective() const { return eta.type == ProcessKind::Type::Num ? V.with(eta.k) : V; }
};

inline SpMat filtered_increment(const FockSpace& F, const FilteredKind& fk, int c0, int c1) {
  SpMat A = increment(F, fk.eta, c0, c1);
  SpMat P = F.projection(fk.effective());
  switch (fk.eta.type) {
    case ProcessKind::Type::Cre: return A * P;
    case ProcessKind::Type::Ann: return P * A;
    case ProcessKind::Type::Num: return A * P;
    default: return P * cplx((c1 - c0) * F.grid().delta());
  }
}

inline SpMat filtered(const FockSpace& F, const FilteredKind& fk, int t) { return filtered_increment(F, fk, 0, t); }

// ---- m-free processes ----

enum class MFreeSort { Ann, Cre, Num, Time };

struct MFreeKind {
  static constexpr int kInf = 0;
  int m = 1;  // kInf for m = ∞
  MFreeSort sort = MFreeSort::Ann;

  bool infinite() const { return m == kInf; }
  std::string level() const { return infinite() ? "inf" : std::to_string(m); }
  std::string dsl() const {
    switch (sort) {
      case MFreeSort::Ann: return "l(" + level() + ")";
      case MFreeSort::Cre: return "l*(" + level() + ")";
      case MFreeSort::Num: return "lN(" + level() + ")";
      default: return "lT(" + level() + ")";
    }
  }
  bool operator==(const MFreeKind& o) const { return m == o.m && sort == o.sort; }
};

// Projection descriptor: a filter projection P^(V) or a band P^[k].
struct ProjDesc {
  bool is_band = false;
  Filter filter;
  int band = 0;

  static ProjDesc of_filter(Filter f) { return {false, f, 0}; }
  static ProjDesc of_band(int k) { return {true, Filter::first(k), k}; }

  // The set the descriptor is labelled with; a band k is labelled {1..k}.
  Filter label() const { return is_band ? Filter::first(band) : filter; }
  std::string str() const { return is_band ? "P[" + std::to_string(band) + "]" : "P" + filter.str(); }
  bool operator==(const ProjDesc& o) const {
    return is_band == o.is_band && (is_band ? band == o.band : filter == o.filter);
  }

  // Signed filter decomposition: P[0] = P{}, P[k] = P{1..k} - P{1..k-1}.
  std::vector<std::pair<double, Filter>> signed_filters() const {
    if (!is_band) return {{1.0, filter}};
    if (band == 0) return {{1.0, Filter::empty()}};
    return {{1.0, Filter::first(band)}, {-1.0, Filter::first(band - 1)}};
  }

  SpMat matrix(const FockSpace& F) const { return is_band ? F.band(band) : F.projection(filter); }
};

struct ExpansionEntry {
  ProcessKind eta;
  ProjDesc proj;
};

// Summands of an extended m-free process in terms of CCR processes.
inline std::vector<ExpansionEntry> expansion(const MFreeKind& mk) {
  if (mk.infinite()) throw std::invalid_argument("infinite level needs a color-support bound");
  if (mk.m < 1) throw std::invalid_argument("level must be positive");
  std::vector<ExpansionEntry> out;
  switch (mk.sort) {
    case MFreeSort::Cre:
      for (int k = 1; k <= mk.m; ++k) out.push_back({ProcessKind::cre(k), ProjDesc::of_band(k - 1)});
      break;
    case MFreeSort::Ann:
      for (int k = 1; k <= mk.m; ++k) out.push_back({ProcessKind::ann(k), ProjDesc::of_band(k - 1)});
      break;
    case MFreeSort::Num:
      for (int k = 1; k <= mk.m; ++k) out.push_back({ProcessKind::num(k), ProjDesc::of_band(k)});
      break;
    default:
      out.push_back({ProcessKind::time(), ProjDesc::of_filter(Filter::first(mk.m - 1))});
  }
  return out;
}

// Level used for m = ∞ on vectors of color support <= r.
inline int resolve_level(const MFreeKind& mk, const GridSpec& g, std::optional<int> support_bound) {
  if (!mk.infinite()) {
    if (mk.m > g.n_colors) throw std::out_of_range("level exceeds color count");
    return mk.m;
  }
  if (!support_bound) throw std::invalid_argument("infinite level needs a color-support bound");
  if (*support_bound > g.n_colors - 1) throw std::out_of_range("support bound must be <= C-1");
  return *support_bound + 1;
}

// l^α_{c1Δ} - l^α_{c0Δ}. Creation carries the projection on the right,
// the other sorts on the left.
inline SpMat mfree_increment(const FockSpace& F, const MFreeKind& mk, int c0, int c1,
                             std::optional<int> support_bound = std::nullopt) {
  MFreeKind fin{resolve_level(mk, F.grid(), support_bound), mk.sort};
  SpMat out(F.dim(), F.dim());
  for (const auto& e : expansion(fin)) {
    SpMat A = increment(F, e.eta, c0, c1);
    SpMat P = e.proj.matrix(F);
    if (e.eta.type == ProcessKind::Type::Cre) out += SpMat(A * P);
    else out += SpMat(P * A);
  }
  return out;
}

inline SpMat mfree(const FockSpace& F, const MFreeKind& mk, int t, std::optional<int> support_bound = std::nullopt) {
  return mfree_increment(F, mk, 0, t, support_bound);
}

}  // namespace ffock

#endif  // FILTERED_FOCK_PROCESSES_HPP
