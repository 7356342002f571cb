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

#ifndef FILTERED_FOCK_SCENARIO_HPP
#define FILTERED_FOCK_SCENARIO_HPP

#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "filtered_fock/ito.hpp"
#include "filtered_fock/sde.hpp"

namespace ffock {

// ---- diagnostics ----

struct Span {
  int line = 0, col = 0, len = 0;
};

// Codes: E1xx syntax, E2xx names, E3xx grid and range, E4xx values.
struct Diagnostic {
  std::string code;
  Span span;
  std::string message;

  std::string str(const std::string& file = "") const {
    std::string where = file.empty() ? "" : file + ":";
    return where + std::to_string(span.line) + ":" + std::to_string(span.col) + ": error[" + code + "]: " + message;
  }
};

struct ScenarioError : std::runtime_error {
  std::vector<Diagnostic> diagnostics;
  explicit ScenarioError(std::vector<Diagnostic> d)
      : std::runtime_error(d.empty() ? "scenario error" : d.front().str()), diagnostics(std::move(d)) {}
};

namespace diag {
inline const char* kSyntax = "E101";
inline const char* kUnterminated = "E102";
inline const char* kUnknownStatement = "E103";
inline const char* kUndefined = "E201";
inline const char* kDuplicate = "E202";
inline const char* kWrongKind = "E203";
inline const char* kOffGrid = "E301";
inline const char* kFilterRange = "E302";
inline const char* kColorRange = "E303";
inline const char* kBadValue = "E401";
inline const char* kMissingGrid = "E402";
}  // namespace diag

// ---- tokens ----

struct Token {
  enum class Kind { Ident, Number, Punct, Tensor, End };
  Kind kind = Kind::End;
  std::string text;
  Span span;

  bool is(const char* p) const { return (kind == Kind::Punct || kind == Kind::Ident) && text == p; }
  bool operator==(const Token& o) const { return kind == o.kind && text == o.text; }
};

namespace detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'; }

// Splits one line. Columns count code points from 1.
inline std::vector<Token> lex(const std::string& line, int line_no) {
  std::vector<Token> out;
  size_t i = 0;
  int col = 1;
  auto advance = [&](size_t n) {
    for (size_t k = 0; k < n; ++k, ++i)
      if ((static_cast<unsigned char>(line[i]) & 0xC0) != 0x80) ++col;
  };
  while (i < line.size()) {
    char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.span = {line_no, col, 0};
    int start_col = col;
    if (line.compare(i, 3, "\xE2\x8A\x97") == 0) {
      t.kind = Token::Kind::Tensor;
      t.text = "\xE2\x8A\x97";
      advance(3);
    } else if (ident_start(c)) {
      size_t j = i + 1;
      while (j < line.size() && ident_char(line[j]) && !(line[j] == '-' && j + 1 < line.size() && line[j + 1] == '-')) ++j;
      if (j < line.size() && line[j] == '*' && j + 1 < line.size() && line[j + 1] == '(') ++j;
      t.kind = Token::Kind::Ident;
      t.text = line.substr(i, j - i);
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
               ((c == '-' || c == '+') && i + 1 < line.size() &&
                (std::isdigit(static_cast<unsigned char>(line[i + 1])) || line[i + 1] == '.'))) {
      size_t j = i + 1;
      while (j < line.size()) {
        char d = line[j];
        if (std::isdigit(static_cast<unsigned char>(d)) || d == '.') {
          ++j;
        } else if ((d == 'e' || d == 'E') && j + 1 < line.size()) {
          j += (line[j + 1] == '-' || line[j + 1] == '+') ? 2 : 1;
        } else {
          break;
        }
      }
      t.kind = Token::Kind::Number;
      t.text = line.substr(i, j - i);
      advance(j - i);
    } else if (std::string("={}[](),|+:@;").find(c) != std::string::npos) {
      t.kind = Token::Kind::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      throw ScenarioError({{diag::kSyntax, {line_no, col, 1}, "unexpected character '" + std::string(1, c) + "'"}});
    }
    t.span.len = col - start_col;
    out.push_back(t);
  }
  Token end;
  end.span = {line_no, col, 0};
  out.push_back(end);
  return out;
}

inline bool word_like(const Token& t) { return t.kind == Token::Kind::Ident || t.kind == Token::Kind::Number; }

// Canonical spacing used by the pretty printer.
inline std::string join_tokens(const std::vector<Token>& ts) {
  std::string s;
  const Token* prev = nullptr;
  for (auto& t : ts) {
    if (t.kind == Token::Kind::End) break;
    if (prev) {
      bool spaced = (word_like(*prev) && word_like(t)) || prev->is(",") || prev->is("|") || t.is("|") ||
                    prev->is("+") || t.is("+") || prev->is("=") || t.is("=") || prev->kind == Token::Kind::Tensor ||
                    t.kind == Token::Kind::Tensor || (prev->is("]") && word_like(t)) ||
                    (word_like(*prev) && t.is("[")) || (prev->is(")") && word_like(t)) ||
                    (prev->is("}") && word_like(t)) || (prev->is(")") && t.is("[")) || (prev->is("]") && t.is("[")) || (prev->is("on") && t.is("(")) ||
                    (prev->kind == Token::Kind::Ident && prev->text != "P" && t.is("{"));
      if (spaced) s += ' ';
    }
    s += t.text;
    prev = &t;
  }
  return s;
}

}  // namespace detail

// ---- syntax tree ----

// One statement: a keyword, an optional name and the canonical tokens of the
// rest of the line. Blocks (sde, mfree) hold nested statements.
struct Stmt {
  std::string keyword;
  Token name;
  std::vector<Token> body;
  std::vector<Stmt> block;
  Span span;

  bool operator==(const Stmt& o) const {
    return keyword == o.keyword && name == o.name && body == o.body && block == o.block;
  }
};

struct Ast {
  std::vector<Stmt> stmts;
  bool operator==(const Ast& o) const { return stmts == o.stmts; }
};

inline std::string print_stmt(const Stmt& s, int indent = 0) {
  std::string pad(indent, ' ');
  std::string line = pad + s.keyword;
  if (s.name.kind != Token::Kind::End) line += " " + s.name.text;
  std::string body = detail::join_tokens(s.body);
  bool decl = s.keyword == "filter" || s.keyword == "matrix" || s.keyword == "u" || s.keyword == "biproc";
  if (decl) {
    line += " = " + body;
  } else if (s.name.kind == Token::Kind::End && s.keyword != "grid") {
    // block line: the keyword may be a kind such as dA*(1)
    std::vector<Token> all{Token{Token::Kind::Ident, s.keyword, s.span}};
    all.insert(all.end(), s.body.begin(), s.body.end());
    line = pad + detail::join_tokens(all);
  } else if (!body.empty()) {
    line += " " + body;
  }
  if (s.keyword == "sde" || s.keyword == "mfree") {
    line += " {\n";
    for (auto& b : s.block) line += print_stmt(b, indent + 2);
    line += pad + "}";
  }
  return line + "\n";
}

inline std::string print_ast(const Ast& a) {
  std::string s;
  for (auto& st : a.stmts) s += print_stmt(st);
  return s;
}

// S-expression dump, one statement per line.
inline std::string dump_stmt(const Stmt& s) {
  std::string out = "(" + s.keyword;
  if (s.name.kind != Token::Kind::End) out += " " + s.name.text;
  out += " [";
  for (size_t i = 0; i < s.body.size(); ++i) {
    if (s.body[i].kind == Token::Kind::End) break;
    out += (i ? " " : "") + s.body[i].text;
  }
  out += "]";
  for (auto& b : s.block) out += " " + dump_stmt(b);
  return out + ")";
}

inline std::string dump_ast(const Ast& a) {
  std::string s;
  for (auto& st : a.stmts) s += dump_stmt(st) + "\n";
  return s;
}

namespace detail {

inline const std::set<std::string>& keywords() {
  static const std::set<std::string> k{"grid", "filter", "matrix", "u", "biproc", "sde", "mfree", "task"};
  return k;
}

// Task and grid lines are whitespace-separated words; key=value words stay
// single tokens so that lists like mesh=8,16,32 keep their spelling.
inline std::vector<Token> word_tokens(const std::string& line, size_t from, int line_no) {
  std::vector<Token> out;
  size_t i = from;
  while (i < line.size()) {
    if (line[i] == '#') break;
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) && line[j] != '#') ++j;
    int col = 1;
    for (size_t k = 0; k < i; ++k)
      if ((static_cast<unsigned char>(line[k]) & 0xC0) != 0x80) ++col;
    Token t{Token::Kind::Ident, line.substr(i, j - i), {line_no, col, static_cast<int>(j - i)}};
    out.push_back(t);
    i = j;
  }
  Token end;
  end.span = {line_no, static_cast<int>(line.size()) + 1, 0};
  out.push_back(end);
  return out;
}

}  // namespace detail

inline Ast parse_syntax(const std::string& text) {
  Ast ast;
  std::vector<Diagnostic> errs;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  Stmt* open = nullptr;
  Span open_span;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      size_t first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      if (line[first] == '}') {
        if (!open) throw ScenarioError({{diag::kSyntax, {line_no, static_cast<int>(first) + 1, 1}, "unmatched '}'"}});
        open = nullptr;
        continue;
      }
      std::vector<Token> toks = detail::lex(line, line_no);
      const Token& kw = toks[0];
      Stmt st;
      st.span = kw.span;
      if (open) {
        // block line: everything is body
        st.keyword = kw.text;
        st.body.assign(toks.begin() + 1, toks.end());
        if (kw.kind == Token::Kind::End) continue;
        open->block.push_back(st);
        continue;
      }
      if (kw.kind != Token::Kind::Ident || !detail::keywords().count(kw.text))
        throw ScenarioError({{diag::kUnknownStatement, kw.span, "unknown statement '" + kw.text + "'"}});
      st.keyword = kw.text;
      if (kw.text == "grid" || kw.text == "task") {
        size_t after = line.find(kw.text, first) + kw.text.size();
        auto words = detail::word_tokens(line, after, line_no);
        if (kw.text == "task") {
          if (words[0].kind == Token::Kind::End)
            throw ScenarioError({{diag::kSyntax, words[0].span, "task needs a kind"}});
          st.name = words[0];
          st.body.assign(words.begin() + 1, words.end());
        } else {
          st.body = words;
        }
        ast.stmts.push_back(st);
        continue;
      }
      if (toks[1].kind != Token::Kind::Ident)
        throw ScenarioError({{diag::kSyntax, toks[1].span, "expected a name after '" + kw.text + "'"}});
      st.name = toks[1];
      if (kw.text == "sde" || kw.text == "mfree") {
        if (!toks[2].is("{") || toks[3].kind != Token::Kind::End)
          throw ScenarioError({{diag::kSyntax, toks[2].span, "expected '{' at the end of the line"}});
        st.body = {toks[3]};
        ast.stmts.push_back(st);
        open = &ast.stmts.back();
        open_span = kw.span;
        continue;
      }
      if (!toks[2].is("=")) throw ScenarioError({{diag::kSyntax, toks[2].span, "expected '='"}});
      st.body.assign(toks.begin() + 3, toks.end());
      if (st.body.front().kind == Token::Kind::End)
        throw ScenarioError({{diag::kSyntax, st.body.front().span, "missing value"}});
      ast.stmts.push_back(st);
    } catch (const ScenarioError& e) {
      errs.insert(errs.end(), e.diagnostics.begin(), e.diagnostics.end());
    }
  }
  if (open) errs.push_back({diag::kUnterminated, open_span, "block is not closed"});
  if (!errs.empty()) throw ScenarioError(errs);
  return ast;
}

// ---- typed scenario ----

struct TaskSpec {
  std::string kind;
  std::vector<Token> args;
  std::map<std::string, Token> opts;
  Span span;

  std::string opt(const std::string& k, const std::string& dflt) const {
    auto it = opts.find(k);
    return it == opts.end() ? dflt : it->second.text;
  }
};

struct Scenario {
  Ast ast;
  GridSpec grid;
  std::map<std::string, Filter> filters;
  std::map<std::string, Mat> matrices;
  std::map<std::string, OneParticleVector> vectors;
  std::map<std::string, Biprocess> biprocs;
  std::map<std::string, SDESystem> systems;
  std::map<std::string, MFreeSystem> mfree_systems;
  std::vector<TaskSpec> tasks;
};

namespace detail {

[[noreturn]] inline void fail(const char* code, const Span& s, const std::string& msg) {
  throw ScenarioError({{code, s, msg}});
}

struct Cursor {
  const std::vector<Token>& t;
  size_t i = 0;

  const Token& peek(size_t k = 0) const { return t[std::min(i + k, t.size() - 1)]; }
  const Token& next() { return t[std::min(i++, t.size() - 1)]; }
  bool accept(const char* p) {
    if (peek().kind == Token::Kind::Punct && peek().text == p) {
      ++i;
      return true;
    }
    return false;
  }
  const Token& expect(const char* p) {
    if (!accept(p)) fail(diag::kSyntax, peek().span, std::string("expected '") + p + "'" + found());
    return t[i - 1];
  }
  std::string found() const {
    return peek().kind == Token::Kind::End ? " at end of line" : ", found '" + peek().text + "'";
  }
  bool at_end() const { return peek().kind == Token::Kind::End; }
  void expect_end() const {
    if (!at_end()) fail(diag::kSyntax, peek().span, "unexpected '" + peek().text + "'");
  }
};

inline double to_double(const Token& t) {
  if (t.kind != Token::Kind::Number) fail(diag::kSyntax, t.span, "expected a number, found '" + t.text + "'");
  try {
    size_t n = 0;
    double v = std::stod(t.text, &n);
    if (n != t.text.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    fail(diag::kBadValue, t.span, "malformed number '" + t.text + "'");
  }
}

inline int to_int(const Token& t) {
  double v = to_double(t);
  if (v != std::floor(v)) fail(diag::kBadValue, t.span, "expected an integer, found '" + t.text + "'");
  return static_cast<int>(v);
}

// number or (re, im)
inline cplx parse_scalar(Cursor& c) {
  if (c.accept("(")) {
    double re = to_double(c.next());
    c.expect(",");
    double im = to_double(c.next());
    c.expect(")");
    return {re, im};
  }
  return to_double(c.next());
}

class Builder {
 public:
  explicit Builder(Scenario& s) : s_(s) {}

  void run() {
    std::vector<Diagnostic> errs;
    bool have_grid = false;
    for (auto& st : s_.ast.stmts) {
      try {
        if (st.keyword == "grid") {
          if (have_grid) fail(diag::kDuplicate, st.span, "grid declared twice");
          grid(st);
          have_grid = true;
          continue;
        }
        if (!have_grid) fail(diag::kMissingGrid, st.span, "the grid must be declared first");
        if (st.keyword != "task") declare(st.name);
        if (st.keyword == "filter") filter_decl(st);
        else if (st.keyword == "matrix") matrix_decl(st);
        else if (st.keyword == "u") vector_decl(st);
        else if (st.keyword == "biproc") biproc_decl(st);
        else if (st.keyword == "sde") sde_decl(st);
        else if (st.keyword == "mfree") mfree_decl(st);
        else task_decl(st);
      } catch (const ScenarioError& e) {
        // later uses of a broken declaration are not reported again
        if (st.keyword != "task" && st.keyword != "grid") failed_.insert(st.name.text);
        errs.insert(errs.end(), e.diagnostics.begin(), e.diagnostics.end());
      }
    }
    if (!have_grid && errs.empty()) errs.push_back({diag::kMissingGrid, {1, 1, 0}, "missing grid statement"});
    if (!errs.empty()) throw ScenarioError(errs);
  }

 private:
  const GridSpec& g() const { return s_.grid; }

  void declare(const Token& name) {
    if (!names_.insert(name.text).second) fail(diag::kDuplicate, name.span, "'" + name.text + "' already declared");
  }

  template <class M>
  const typename M::mapped_type& lookup(const M& m, const Token& t, const char* what) const {
    auto it = m.find(t.text);
    if (it != m.end()) return it->second;
    if (failed_.count(t.text)) throw ScenarioError({});
    if (names_.count(t.text)) fail(diag::kWrongKind, t.span, "'" + t.text + "' is declared, but not as a " + std::string(what));
    fail(diag::kUndefined, t.span, "undefined " + std::string(what) + " '" + t.text + "'");
  }

  void grid(const Stmt& st) {
    GridSpec gs;
    for (auto& w : st.body) {
      if (w.kind == Token::Kind::End) break;
      auto eq = w.text.find('=');
      if (eq == std::string::npos) fail(diag::kSyntax, w.span, "expected key=value, found '" + w.text + "'");
      std::string k = w.text.substr(0, eq);
      Token v{Token::Kind::Number, w.text.substr(eq + 1), {w.span.line, w.span.col + static_cast<int>(eq) + 1, 0}};
      if (k == "T") gs.horizon = to_double(v);
      else if (k == "cells") gs.n_cells = to_int(v);
      else if (k == "colors") gs.n_colors = to_int(v);
      else if (k == "nmax") gs.n_max = to_int(v);
      else if (k == "h0") gs.h0_dim = to_int(v);
      else fail(diag::kSyntax, w.span, "unknown grid key '" + k + "'");
    }
    try {
      gs.validate();
    } catch (const std::exception& e) {
      fail(diag::kBadValue, st.span, e.what());
    }
    s_.grid = gs;
  }

  int color(const Token& t) const {
    int k = to_int(t);
    if (k < 1 || k > g().n_colors)
      fail(diag::kColorRange, t.span, "color " + t.text + " outside 1.." + std::to_string(g().n_colors));
    return k;
  }

  int time_index(const Token& t) const {
    double v = to_double(t);
    try {
      return g().cell_index(v);
    } catch (const std::exception&) {
      fail(diag::kOffGrid, t.span, "time " + t.text + " is not a grid time");
    }
  }

  // {1,2} | FULL | NAME
  Filter filter(Cursor& c) const {
    const Token& first = c.peek();
    if (c.accept("{")) {
      Filter f;
      if (!c.accept("}")) {
        do {
          const Token& k = c.next();
          int v = to_int(k);
          if (v < 1 || v > g().n_colors)
            fail(diag::kFilterRange, k.span, "filter color " + k.text + " outside 1.." + std::to_string(g().n_colors));
          f.add(v);
        } while (c.accept(","));
        c.expect("}");
      }
      return f;
    }
    const Token& t = c.next();
    if (t.kind != Token::Kind::Ident) fail(diag::kSyntax, first.span, "expected a filter" + std::string(", found '") + t.text + "'");
    if (t.text == "FULL") return Filter::full();
    return lookup(s_.filters, t, "filter");
  }

  Mat matrix_literal(Cursor& c) const {
    const Token& open = c.expect("[");
    std::vector<std::vector<cplx>> rows;
    do {
      c.expect("[");
      std::vector<cplx> row;
      do row.push_back(parse_scalar(c));
      while (c.accept(","));
      c.expect("]");
      rows.push_back(row);
    } while (c.accept(","));
    c.expect("]");
    const int d = g().h0_dim;
    if (static_cast<int>(rows.size()) != d)
      fail(diag::kBadValue, open.span, "matrix needs " + std::to_string(d) + " rows");
    Mat M(d, d);
    for (int i = 0; i < d; ++i) {
      if (static_cast<int>(rows[i].size()) != d)
        fail(diag::kBadValue, open.span, "matrix row " + std::to_string(i + 1) + " needs " + std::to_string(d) + " entries");
      for (int j = 0; j < d; ++j) M(i, j) = rows[i][j];
    }
    return M;
  }

  Mat matrix_ref(const Token& t) const {
    if (t.text == "I") return Mat::Identity(g().h0_dim, g().h0_dim);
    return lookup(s_.matrices, t, "matrix");
  }

  Factor window(Cursor& c, Factor f) const {
    if (c.accept("@")) {
      f.from = time_index(c.next());
      c.expect(":");
      f.until = time_index(c.next());
      if (f.until < f.from) fail(diag::kBadValue, c.peek().span, "window must not be reversed");
    }
    return f;
  }

  // Factors up to '|'.
  Word word(Cursor& c) const {
    Word w;
    while (!c.peek().is("|")) {
      const Token& t = c.peek();
      if (t.kind == Token::Kind::End) fail(diag::kSyntax, t.span, "expected '|'");
      if (t.kind == Token::Kind::Number || t.is("(")) {
        w.scalar *= parse_scalar(c);
        continue;
      }
      if (t.kind != Token::Kind::Ident) fail(diag::kSyntax, t.span, "unexpected '" + t.text + "' in operator word");
      c.next();
      if (t.text == "P") {
        Filter V;
        if (c.accept("(")) {
          V = filter(c);
          c.expect(")");
        } else {
          V = filter(c);
        }
        w.factors.push_back(window(c, Factor::proj(V)));
      } else if (t.text == "PFULL") {
        w.factors.push_back(window(c, Factor::proj(Filter::full())));
      } else if (t.text == "N" || t.text == "a*" || t.text == "a") {
        c.expect("(");
        int k = color(c.next());
        c.expect(")");
        Factor f = t.text == "N" ? Factor::num(k) : t.text == "a" ? Factor::ann(k) : Factor::cre(k);
        w.factors.push_back(window(c, f));
      } else if (t.text == "I") {
        continue;
      } else {
        w.factors.push_back(Factor::matrix(t.text, matrix_ref(t)));
      }
    }
    return w;
  }

  SimpleBiprocess term(Cursor& c) const {
    SimpleBiprocess X;
    c.expect("[");
    Word F = word(c);
    c.expect("|");
    X.D = filter(c);
    c.expect("]");
    if (c.peek().kind == Token::Kind::Tensor) c.next();
    else fail(diag::kSyntax, c.peek().span, "expected '\xE2\x8A\x97'" + c.found());
    c.expect("[");
    Word G = word(c);
    c.expect("|");
    X.E = filter(c);
    c.expect("]");
    const Token& on = c.next();
    if (!on.is("on")) fail(diag::kSyntax, on.span, "expected 'on', found '" + on.text + "'");
    c.expect("(");
    std::vector<int> cuts;
    std::vector<Span> spans;
    do {
      spans.push_back(c.peek().span);
      cuts.push_back(time_index(c.next()));
    } while (c.accept(","));
    c.expect(")");
    if (cuts.size() < 2) fail(diag::kBadValue, spans[0], "an interval needs two times");
    for (size_t i = 1; i < cuts.size(); ++i)
      if (cuts[i] <= cuts[i - 1]) fail(diag::kBadValue, spans[i], "times must increase");
    if (cuts.front() > 0) {
      // zero on [0, first), keeping the factors so range checks still see them
      Word zero = F;
      zero.scalar = 0.0;
      X.cuts.push_back(0);
      X.F.push_back(zero);
      X.G.push_back(G);
    }
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
      X.cuts.push_back(cuts[i]);
      X.F.push_back(F);
      X.G.push_back(G);
    }
    X.cuts.push_back(cuts.back());
    return X;
  }

  Biprocess biproc_expr(Cursor& c) const {
    Biprocess B;
    do {
      if (c.peek().kind == Token::Kind::Ident) {
        B = B + lookup(s_.biprocs, c.next(), "biprocess");
      } else {
        B.terms.push_back(term(c));
      }
    } while (c.accept("+"));
    c.expect_end();
    return B;
  }

  void filter_decl(const Stmt& st) {
    Cursor c{st.body};
    Filter f = filter(c);
    c.expect_end();
    s_.filters[st.name.text] = f;
  }

  void matrix_decl(const Stmt& st) {
    Cursor c{st.body};
    Mat M = matrix_literal(c);
    c.expect_end();
    s_.matrices[st.name.text] = M;
  }

  // [(cell, color, re, im), ...]
  void vector_decl(const Stmt& st) {
    Cursor c{st.body};
    OneParticleVector u(g());
    c.expect("[");
    if (!c.accept("]")) {
      do {
        c.expect("(");
        const Token& ct = c.next();
        int cell = to_int(ct);
        if (cell < 0 || cell >= g().n_cells) fail(diag::kOffGrid, ct.span, "cell " + ct.text + " outside the grid");
        c.expect(",");
        int k = color(c.next());
        c.expect(",");
        double re = to_double(c.next());
        c.expect(",");
        double im = to_double(c.next());
        c.expect(")");
        u.at(cell, k) += cplx(re, im);
      } while (c.accept(","));
      c.expect("]");
    }
    c.expect_end();
    s_.vectors.emplace(st.name.text, u);
  }

  void biproc_decl(const Stmt& st) {
    Cursor c{st.body};
    s_.biprocs[st.name.text] = biproc_expr(c);
  }

  static ProcessKind process_kind(const Token& t, const GridSpec& g) {
    const std::string& s = t.text;
    auto colored = [&](const std::string& head) -> std::optional<int> {
      if (s.rfind(head + "(", 0) != 0 || s.back() != ')') return std::nullopt;
      std::string inner = s.substr(head.size() + 1, s.size() - head.size() - 2);
      try {
        size_t n = 0;
        int k = std::stoi(inner, &n);
        if (n != inner.size()) return std::nullopt;
        if (k < 1 || k > g.n_colors) fail(diag::kColorRange, t.span, "color " + inner + " out of range");
        return k;
      } catch (const std::invalid_argument&) {
        return std::nullopt;
      }
    };
    if (s == "dT") return ProcessKind::time();
    if (auto k = colored("dA*")) return ProcessKind::cre(*k);
    if (auto k = colored("dA")) return ProcessKind::ann(*k);
    if (auto k = colored("dN")) return ProcessKind::num(*k);
    fail(diag::kSyntax, t.span, "expected dA(k), dA*(k), dN(k) or dT, found '" + s + "'");
  }

  // Rejoins a kind written as tokens, e.g. dA* ( 1 ).
  static Token kind_token(Cursor& c) {
    Token t = c.next();
    if (c.peek().is("(")) {
      c.next();
      const Token& k = c.next();
      c.expect(")");
      t.text += "(" + k.text + ")";
    }
    return t;
  }

  void sde_decl(const Stmt& st) {
    SDESystem sys;
    std::vector<std::pair<Filter, Mat>> init;
    std::vector<Span> init_spans;
    for (auto& line : st.block) {
      std::vector<Token> all{Token{Token::Kind::Ident, line.keyword, line.span}};
      all.insert(all.end(), line.body.begin(), line.body.end());
      Cursor c{all};
      if (line.keyword == "filters") {
        c.next();
        do sys.P0.push_back(filter(c));
        while (c.accept(","));
        c.expect_end();
      } else if (line.keyword == "init") {
        c.next();
        Filter V = filter(c);
        init.push_back({V, matrix_ref(c.next())});
        init_spans.push_back(line.span);
        c.expect_end();
      } else {
        Token kt = kind_token(c);
        ProcessKind eta = process_kind(kt, g());
        Biprocess B = biproc_expr(c);
        for (auto& t : B.terms) sys.terms.push_back({eta, t});
      }
    }
    if (sys.P0.empty()) fail(diag::kBadValue, st.span, "system '" + st.name.text + "' needs a filters line");
    sys.initial.assign(sys.P0.size(), Mat());
    for (size_t i = 0; i < init.size(); ++i) {
      int v = sys.index_of(init[i].first);
      if (v < 0) fail(diag::kBadValue, init_spans[i], "initial filter " + init[i].first.str() + " not in the collection");
      sys.initial[v] = init[i].second;
    }
    try {
      sys.validate(g());
    } catch (const std::exception& e) {
      fail(diag::kBadValue, st.span, e.what());
    }
    s_.systems[st.name.text] = sys;
  }

  void mfree_decl(const Stmt& st) {
    MFreeSystem sys;
    static const std::map<std::string, int> sorts{{"ann", 0}, {"cre", 1}, {"num", 2}, {"time", 3}};
    for (auto& line : st.block) {
      Cursor c{line.body};
      if (line.keyword == "init") {
        Filter V = filter(c);
        sys.initial.push_back({V, matrix_ref(c.next())});
        c.expect_end();
        continue;
      }
      auto it = sorts.find(line.keyword);
      if (it == sorts.end()) fail(diag::kSyntax, line.span, "expected ann, cre, num, time or init");
      sys.X[it->second] = sys.X[it->second] + biproc_expr(c);
    }
    for (auto& X : sys.X)
      for (auto& t : X.terms)
        for (auto* side : {&t.F, &t.G})
          for (auto& w : *side)
            if (!bounded_word(w)) fail(diag::kBadValue, st.span, "coefficient " + w.dsl() + " is not locally bounded");
    s_.mfree_systems[st.name.text] = sys;
  }

  void task_decl(const Stmt& st) {
    static const std::map<std::string, std::pair<int, std::set<std::string>>> spec{
        {"solve", {1, {"t", "tol", "iter", "probes"}}},
        {"check-unitarity", {1, {"t"}}},
        {"evolve", {1, {"mesh", "order", "probes", "scale"}}},
        {"sweep-m", {1, {"p", "m", "iter", "probes"}}},
        {"mfree-unitarity", {1, {"m", "t"}}},
        {"verify-ito", {4, {"t", "trials", "m"}}},
        {"ito-table", {1, {}}},
    };
    auto it = spec.find(st.name.text);
    if (it == spec.end()) fail(diag::kUnknownStatement, st.name.span, "unknown task '" + st.name.text + "'");
    TaskSpec t;
    t.kind = st.name.text;
    t.span = st.span;
    for (auto& w : st.body) {
      if (w.kind == Token::Kind::End) break;
      auto eq = w.text.find('=');
      if (eq == std::string::npos) {
        t.args.push_back(w);
        continue;
      }
      std::string k = w.text.substr(0, eq);
      if (!it->second.second.count(k)) fail(diag::kSyntax, w.span, "unknown option '" + k + "' for " + t.kind);
      Token v = w;
      v.text = w.text.substr(eq + 1);
      v.span.col += static_cast<int>(eq) + 1;
      v.span.len -= static_cast<int>(eq) + 1;
      t.opts[k] = v;
    }
    if (static_cast<int>(t.args.size()) != it->second.first)
      fail(diag::kSyntax, st.span, t.kind + " takes " + std::to_string(it->second.first) + " argument(s)");
    check_task(t);
    s_.tasks.push_back(t);
  }

  std::vector<double> number_list(const Token& v, char sep) const {
    std::vector<double> out;
    std::stringstream ss(v.text);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(to_double(Token{Token::Kind::Number, item, v.span}));
    if (out.empty()) fail(diag::kBadValue, v.span, "empty list");
    return out;
  }

  void check_task(const TaskSpec& t) const {
    auto num = [&](const char* k) {
      if (t.opts.count(k)) to_double(Token{Token::Kind::Number, t.opts.at(k).text, t.opts.at(k).span});
    };
    for (auto* k : {"tol", "iter", "probes", "p", "trials", "scale"}) num(k);
    if (t.opts.count("t")) time_index(Token{Token::Kind::Number, t.opts.at("t").text, t.opts.at("t").span});
    if (t.opts.count("mesh")) number_list(t.opts.at("mesh"), ',');
    if (t.opts.count("m")) number_list(t.opts.at("m"), ',');
    if (t.opts.count("order") && number_list(t.opts.at("order"), ':').size() != 2)
      fail(diag::kBadValue, t.opts.at("order").span, "order range is lo:hi");
    if (t.kind == "solve" || t.kind == "check-unitarity" || t.kind == "evolve") lookup(s_.systems, t.args[0], "sde system");
    if (t.kind == "sweep-m" || t.kind == "mfree-unitarity") lookup(s_.mfree_systems, t.args[0], "m-free system");
    if (t.kind == "verify-ito") {
      lookup(s_.biprocs, t.args[0], "biprocess");
      lookup(s_.biprocs, t.args[2], "biprocess");
      for (int i : {1, 3}) ito_kind(t.args[i]);
    }
    if (t.kind == "ito-table") table_kind(t.args[0]);
    if (t.opts.count("probes")) {
      // a count or declared vectors
      const Token& v = t.opts.at("probes");
      if (!std::isdigit(static_cast<unsigned char>(v.text[0]))) {
        std::stringstream ss(v.text);
        std::string item;
        while (std::getline(ss, item, ',')) lookup(s_.vectors, Token{Token::Kind::Ident, item, v.span}, "vector");
      }
    }
  }

 public:
  // dA(k)-style kinds or m-free sorts l(m), l*(m), lN(m), lT(m).
  std::variant<ProcessKind, MFreeKind> ito_kind(const Token& t) const {
    static const std::map<std::string, MFreeSort> sorts{
        {"l", MFreeSort::Ann}, {"l*", MFreeSort::Cre}, {"lN", MFreeSort::Num}, {"lT", MFreeSort::Time}};
    auto open = t.text.find('(');
    if (open != std::string::npos && t.text.back() == ')') {
      auto it = sorts.find(t.text.substr(0, open));
      if (it != sorts.end()) {
        Token inner{Token::Kind::Number, t.text.substr(open + 1, t.text.size() - open - 2), t.span};
        int m = to_int(inner);
        if (m < 1 || m > g().n_colors) fail(diag::kColorRange, t.span, "level outside 1..C");
        return MFreeKind{m, it->second};
      }
    }
    return process_kind(t, g());
  }

  std::optional<int> table_kind(const Token& t) const {
    if (t.text == "boson") return std::nullopt;
    if (t.text.rfind("mfree:", 0) == 0) {
      int m = to_int(Token{Token::Kind::Number, t.text.substr(6), t.span});
      if (m < 1) fail(diag::kBadValue, t.span, "level must be positive");
      return m;
    }
    fail(diag::kBadValue, t.span, "calculus is boson or mfree:m");
  }

 private:
  Scenario& s_;
  std::set<std::string> names_, failed_;
};

}  // namespace detail

inline Scenario build_scenario(Ast ast) {
  Scenario s;
  s.ast = std::move(ast);
  detail::Builder(s).run();
  return s;
}

inline Scenario parse_scenario(const std::string& text) { return build_scenario(parse_syntax(text)); }

// ---- running ----

struct Metric {
  std::string name;
  nlohmann::ordered_json value;
  std::optional<double> bound;
  std::optional<bool> pass;
};

struct TaskResult {
  int index = 0;
  std::string task, target;
  bool pass = true;
  std::string message;
  std::vector<Metric> metrics;
};

struct Report {
  uint64_t seed = 1;
  std::vector<TaskResult> tasks;
  int passed() const {
    int n = 0;
    for (auto& t : tasks) n += t.pass;
    return n;
  }
  bool all_pass() const { return passed() == static_cast<int>(tasks.size()); }
};

struct RunOptions {
  uint64_t seed = 1;
  bool strict = false;
  std::optional<int> n_max;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline double num_opt(const TaskSpec& t, const std::string& k, double dflt) {
  auto it = t.opts.find(k);
  return it == t.opts.end() ? dflt : std::stod(it->second.text);
}

inline std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(std::stod(item)));
  return out;
}

inline std::vector<ExpState> task_probes(const Scenario& sc, const GridSpec& g, const TaskSpec& t, uint64_t seed,
                                         int dflt) {
  std::string p = t.opt("probes", std::to_string(dflt));
  if (std::isdigit(static_cast<unsigned char>(p[0]))) {
    auto all = probe_catalog(g, seed);
    int n = std::min<int>(std::stoi(p), static_cast<int>(all.size()));
    std::vector<ExpState> out;
    // stride through fixed and seeded probes
    for (int i = 0; i < n; ++i) out.push_back(all[(i * 5) % all.size()]);
    return out;
  }
  std::vector<ExpState> out;
  std::stringstream ss(p);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Vec w = Vec::Zero(g.h0_dim);
    w(0) = 1.0;
    out.push_back({w, OneParticleVector(g, sc.vectors.at(item).values())});
  }
  return out;
}

// Same biprocess on a grid with r times as many cells.
inline SimpleBiprocess rescaled(SimpleBiprocess X, int r) {
  for (auto& c : X.cuts) c *= r;
  for (auto* side : {&X.F, &X.G})
    for (auto& w : *side)
      for (auto& f : w.factors) {
        f.from *= r;
        if (f.until >= 0) f.until *= r;
      }
  return X;
}

inline std::string grid_str(const GridSpec& g) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "T=%g cells=%d colors=%d nmax=%d h0=%d", g.horizon, g.n_cells, g.n_colors, g.n_max,
                g.h0_dim);
  return buf;
}

// Largest truncated dimension the mesh-refinement task will build.
inline constexpr double kMaxEvolveDim = 4e4;

inline void run_task(const Scenario& sc, const GridSpec& g, const TaskSpec& t, uint64_t seed, TaskResult& r) {
  FockSpace Fk(g);
  auto add = [&](const std::string& name, nlohmann::ordered_json v, std::optional<double> bound = std::nullopt,
                 std::optional<bool> pass = std::nullopt) {
    r.metrics.push_back({name, std::move(v), bound, pass});
    if (pass && !*pass) r.pass = false;
  };
  int t_end = t.opts.count("t") ? g.cell_index(std::stod(t.opts.at("t").text)) : g.n_cells;
  if (t.kind == "solve") {
    const SDESystem& sys = sc.systems.at(t.args[0].text);
    PicardOptions opt;
    opt.tol = num_opt(t, "tol", opt.tol);
    opt.n_iter = static_cast<int>(num_opt(t, "iter", opt.n_iter));
    auto probes = task_probes(sc, g, t, seed, 32);
    PicardReport rep = picard_solve(Fk, sys, probes, t_end, opt);
    double worst = -std::numeric_limits<double>::infinity();
    for (auto& it : rep.iterates) worst = std::max(worst, it.max_log_ratio);
    add("probes", static_cast<int>(probes.size()));
    add("iterations", rep.iterations);
    add("converged", rep.converged, std::nullopt, rep.converged);
    add("bound_log_margin", std::isfinite(worst) ? nlohmann::ordered_json(worst) : nlohmann::ordered_json("none"), 0.0,
        rep.bound_ok());
    add("residual", rep.residual, 10 * opt.tol, rep.residual <= 10 * opt.tol);
    if (!r.pass) r.message = rep.converged ? "residual or bound check failed" : "no convergence within n_iter";
  } else if (t.kind == "check-unitarity") {
    UnitarityReport u = unitarity_check(Fk, sc.systems.at(t.args[0].text), t_end);
    add("cond_i", UnitarityReport::worst(u.cond_i), u.tolerance, u.pass_i());
    add("cond_ii", UnitarityReport::worst(u.cond_ii), u.tolerance, u.pass_ii());
    add("cond_iii", UnitarityReport::worst(u.cond_iii), u.tolerance, u.pass_iii());
    if (!u.pass()) r.message = "failed " + u.failing();
  } else if (t.kind == "evolve") {
    const SDESystem& sys = sc.systems.at(t.args[0].text);
    std::vector<int> meshes = int_list(t.opt("mesh", "8,16,32"));
    std::vector<double> range{0.8, 1.2};
    if (t.opts.count("order")) {
      std::string o = t.opts.at("order").text;
      range = {std::stod(o.substr(0, o.find(':'))), std::stod(o.substr(o.find(':') + 1))};
    }
    for (int N : meshes) {
      if (N <= 0 || N % g.n_cells) throw std::invalid_argument("mesh " + std::to_string(N) + " does not refine the grid");
      // dimension of the truncated space on the mesh: binom(modes + n_max, n_max) * h0
      double dim = g.h0_dim;
      for (int j = 1; j <= g.n_max; ++j) dim *= double(N * g.n_colors + j) / j;
      if (dim > kMaxEvolveDim)
        throw std::invalid_argument("mesh " + std::to_string(N) + " needs dimension " + detail::fmt_double(dim) +
                                    ", above the limit " + detail::fmt_double(kMaxEvolveDim));
    }
    auto probes = task_probes(sc, g, t, seed, 8);
    double scale = num_opt(t, "scale", 1.0);
    for (auto& p : probes) p.u = p.u * cplx(scale);
    auto build = [&](const GridSpec& gg) {
      SDESystem s = sys;
      for (auto& term : s.terms) term.X = rescaled(term.X, gg.n_cells / g.n_cells);
      return s;
    };
    DefectReport d = evolve_and_test_unitary(g, build, meshes, probes);
    for (auto& m : d.meshes) {
      std::string n = std::to_string(m.n_cells);
      add("isometry_defect_" + n, m.isometry);
      add("coisometry_defect_" + n, m.coisometry);
      add("picard_vs_step_" + n, m.picard_vs_step, 1e-9, m.picard_vs_step <= 1e-9);
    }
    for (size_t i = 0; i < d.orders.size(); ++i) {
      bool ok = d.orders[i] >= range[0] && d.orders[i] <= range[1];
      add("order_" + std::to_string(meshes[i]) + "_" + std::to_string(meshes[i + 1]), d.orders[i], std::nullopt, ok);
    }
    if (!r.pass) r.message = "defect order outside range";
  } else if (t.kind == "sweep-m") {
    const MFreeSystem& s = sc.mfree_systems.at(t.args[0].text);
    int p = static_cast<int>(num_opt(t, "p", 0));
    std::vector<int> ms = int_list(t.opt("m", "1,2,3"));
    auto probes = task_probes(sc, g, t, seed, 8);
    StabilizationReport rep = stabilization_sweep(Fk, s, p, ms, probes, t_end, static_cast<int>(num_opt(t, "iter", 30)));
    for (size_t i = 0; i < rep.diff_to_next.size(); ++i)
      add("diff_" + std::to_string(ms[i]) + "_" + std::to_string(ms[i + 1]), rep.diff_to_next[i]);
    bool ok = rep.stabilized() && rep.m_star <= p + 1;
    add("m_star", rep.m_star, p + 1.0, ok);
    if (!ok) r.message = rep.stabilized() ? "stabilized late" : "no stabilization within the m list";
  } else if (t.kind == "mfree-unitarity") {
    const MFreeSystem& s = sc.mfree_systems.at(t.args[0].text);
    int m = static_cast<int>(num_opt(t, "m", 1));
    MFreeUnitarityReport u = mfree_unitarity_check(Fk, s, m, t_end);
    double d2 = std::abs(u.general_ii - u.truncated_ii), d3 = std::abs(u.general_iii - u.truncated_iii);
    add("general_ii", u.general_ii);
    add("general_iii", u.general_iii);
    add("truncated_ii", u.truncated_ii);
    add("truncated_iii", u.truncated_iii);
    add("displayed_iii", u.displayed_iii);
    add("free_ii", u.free_ii);
    add("free_iii", u.free_iii);
    add("equivalence_ii", d2, 1e-10, d2 <= 1e-10);
    add("equivalence_iii", d3, 1e-10, d3 <= 1e-10);
    add("unitary", u.general_ii <= 1e-10 && u.general_iii <= 1e-10 && u.general_i <= 1e-10);
    if (!r.pass) r.message = "truncated conditions differ from the general ones";
  } else if (t.kind == "verify-ito") {
    Scenario tmp;
    tmp.grid = g;
    detail::Builder b(tmp);
    auto k1 = b.ito_kind(t.args[1]), k2 = b.ito_kind(t.args[3]);
    const Biprocess &X1 = sc.biprocs.at(t.args[0].text), &X2 = sc.biprocs.at(t.args[2].text);
    int trials = static_cast<int>(num_opt(t, "trials", 4));
    auto probes = probe_catalog(g, seed);
    double worst = 0, worst_tau = 0, margin = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int i = 0; i < trials; ++i) {
      const ExpState &x = probes[(2 * i) % probes.size()], &y = probes[(2 * i + 17) % probes.size()];
      for (auto& a : X1.terms)
        for (auto& c : X2.terms) {
          double res, tau;
          if (std::holds_alternative<ProcessKind>(k1) && std::holds_alternative<ProcessKind>(k2)) {
            ItoCheck ch = ito_check(Fk, x, a, std::get<ProcessKind>(k1), c, std::get<ProcessKind>(k2), t_end, y);
            res = ch.residual();
            tau = ch.tau;
          } else if (std::holds_alternative<MFreeKind>(k1) && std::holds_alternative<MFreeKind>(k2)) {
            MFreeKind m1 = std::get<MFreeKind>(k1), m2 = std::get<MFreeKind>(k2);
            if (m1.m != m2.m) throw std::invalid_argument("m-free kinds need the same level");
            MFreeItoCheck ch = mfree_ito_check(Fk, x, a, m1.sort, c, m2.sort, m1.m, t_end, y);
            res = ch.residual();
            tau = ch.tau;
          } else {
            throw std::invalid_argument("cannot mix CCR and m-free kinds");
          }
          worst = std::max(worst, res);
          worst_tau = std::max(worst_tau, tau);
          margin = std::min(margin, tau - res);
          ok = ok && res <= tau;
        }
    }
    add("max_residual", worst);
    add("max_tau", worst_tau);
    add("within_tau", ok, std::nullopt, ok);
    if (!ok) r.message = "Ito identity residual exceeds the truncation bound";
  } else if (t.kind == "ito-table") {
    Scenario tmp;
    tmp.grid = g;
    auto m = detail::Builder(tmp).table_kind(t.args[0]);
    add("table", m ? format_mfree_table(*m) : format_boson_table());
  }
}

}  // namespace detail

inline Report run_scenario(const Scenario& sc, const RunOptions& opt = {}) {
  Report rep;
  rep.seed = opt.seed;
  GridSpec g = sc.grid;
  if (opt.n_max) g.n_max = *opt.n_max;
  g.validate();
  for (size_t i = 0; i < sc.tasks.size(); ++i) {
    const TaskSpec& t = sc.tasks[i];
    TaskResult r;
    r.index = static_cast<int>(i);
    r.task = t.kind;
    r.target = t.args.empty() ? "" : t.args[0].text;
    for (size_t a = 1; a < t.args.size(); ++a) r.target += " " + t.args[a].text;
    try {
      detail::run_task(sc, g, t, opt.seed, r);
    } catch (const std::exception& e) {
      r.pass = false;
      r.message = e.what();
    }
    rep.tasks.push_back(r);
    if (opt.strict && !r.pass) break;
  }
  return rep;
}

// ---- report output ----

inline nlohmann::ordered_json report_json(const Report& rep) {
  using J = nlohmann::ordered_json;
  J tasks = J::array();
  for (auto& t : rep.tasks) {
    J metrics = J::array();
    for (auto& m : t.metrics) {
      J row{{"name", m.name}, {"value", m.value}};
      if (m.bound) row["bound"] = *m.bound;
      if (m.pass) row["pass"] = *m.pass;
      metrics.push_back(row);
    }
    tasks.push_back(J{{"index", t.index}, {"task", t.task}, {"target", t.target}, {"pass", t.pass},
                      {"message", t.message}, {"metrics", metrics}});
  }
  return J{{"schema", 1},
           {"seed", rep.seed},
           {"tasks", tasks},
           {"summary", {{"tasks", rep.tasks.size()}, {"passed", rep.passed()},
                        {"failed", static_cast<int>(rep.tasks.size()) - rep.passed()}}}};
}

inline std::string format_json(const Report& rep) { return report_json(rep).dump(2) + "\n"; }

namespace detail {

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::string csv_value(const nlohmann::ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return fmt_double(v.get<double>());
  return v.dump();
}

}  // namespace detail

// One row per metric plus one status row per task.
inline std::string format_csv(const Report& rep) {
  std::string s = "index,task,target,metric,value,bound,pass\n";
  for (auto& t : rep.tasks) {
    std::string head = std::to_string(t.index) + "," + detail::csv_cell(t.task) + "," + detail::csv_cell(t.target) + ",";
    for (auto& m : t.metrics)
      s += head + detail::csv_cell(m.name) + "," + detail::csv_cell(detail::csv_value(m.value)) + "," +
           (m.bound ? detail::fmt_double(*m.bound) : "") + "," + (m.pass ? (*m.pass ? "true" : "false") : "") + "\n";
    s += head + "status," + detail::csv_cell(t.message) + ",," + (t.pass ? "true" : "false") + "\n";
  }
  return s;
}

}  // namespace ffock

#endif  // FILTERED_FOCK_SCENARIO_HPP
