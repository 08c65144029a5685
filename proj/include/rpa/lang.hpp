/* Copyright 2026 The rpasynth Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Programs, statements, actions and value paths, with their text encodings
// and the structural utilities the synthesizer keys on.

#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rpa/dom.hpp"

namespace rpa {

using InputData = Json;

// ---------------------------------------------------------------------------
// Value paths

struct VPStep {
  bool is_index = false;
  std::string key;
  int index = 0;
  static VPStep Key(std::string k) { return VPStep{false, std::move(k), 0}; }
  static VPStep Index(int i) { return VPStep{true, {}, i}; }
  friend bool operator==(const VPStep&, const VPStep&) = default;
  friend auto operator<=>(const VPStep&, const VPStep&) = default;
};

using VPSteps = std::vector<VPStep>;

// Concrete value path, rooted at the input variable x.
struct ValuePath {
  VPSteps steps;
  friend bool operator==(const ValuePath&, const ValuePath&) = default;
  friend auto operator<=>(const ValuePath&, const ValuePath&) = default;
};

inline void append_vp_steps(std::string& out, const VPSteps& steps) {
  for (const auto& s : steps) {
    if (s.is_index) {
      out += '[' + std::to_string(s.index) + ']';
    } else {
      out += "['" + s.key + "']";
    }
  }
}

inline std::string to_string(const ValuePath& v) {
  std::string out = "x";
  append_vp_steps(out, v.steps);
  return out;
}

inline VPSteps parse_vp_steps(std::string_view s, std::size_t i) {
  VPSteps out;
  while (i < s.size()) {
    if (s[i] != '[') throw ParseError("expected '['", i);
    ++i;
    if (i < s.size() && s[i] == '\'') {
      std::size_t b = ++i;
      while (i < s.size() && s[i] != '\'') ++i;
      if (i >= s.size()) throw ParseError("unterminated key", b);
      out.push_back(VPStep::Key(std::string(s.substr(b, i - b))));
      ++i;
    } else {
      std::size_t b = i;
      long v = 0;
      while (i < s.size() && s[i] >= '0' && s[i] <= '9') v = v * 10 + (s[i++] - '0');
      if (b == i || v < 1) throw ParseError("expected a 1-based index", b);
      out.push_back(VPStep::Index(static_cast<int>(v)));
    }
    if (i >= s.size() || s[i] != ']') throw ParseError("expected ']'", i);
    ++i;
  }
  return out;
}

inline ValuePath parse_value_path(std::string_view s) {
  if (s.empty() || s[0] != 'x') throw ParseError("value path must start with x", 0);
  return ValuePath{parse_vp_steps(s, 1)};
}

// Navigates I along a value path; nullptr when the path is missing.
inline const Json* lookup_value(const InputData& data, const VPSteps& steps) {
  const Json* cur = &data;
  for (const auto& s : steps) {
    if (s.is_index) {
      if (!cur->is_array() || s.index < 1 || static_cast<std::size_t>(s.index) > cur->size())
        return nullptr;
      cur = &(*cur)[static_cast<std::size_t>(s.index - 1)];
    } else {
      if (!cur->is_object()) return nullptr;
      auto it = cur->find(s.key);
      if (it == cur->end()) return nullptr;
      cur = &*it;
    }
  }
  return cur;
}

inline std::optional<std::string> value_string(const InputData& data, const ValuePath& v) {
  const Json* j = lookup_value(data, v.steps);
  if (!j) return std::nullopt;
  if (j->is_string()) return j->get<std::string>();
  if (j->is_number_integer()) return std::to_string(j->get<long long>());
  return j->dump();
}

// ---------------------------------------------------------------------------
// Actions

enum class ActionKind : std::uint8_t {
  Click,
  ScrapeText,
  ScrapeLink,
  Download,
  GoBack,
  ExtractURL,
  SendKeys,
  EnterData,
};

inline const char* kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::Click: return "Click";
    case ActionKind::ScrapeText: return "ScrapeText";
    case ActionKind::ScrapeLink: return "ScrapeLink";
    case ActionKind::Download: return "Download";
    case ActionKind::GoBack: return "GoBack";
    case ActionKind::ExtractURL: return "ExtractURL";
    case ActionKind::SendKeys: return "SendKeys";
    case ActionKind::EnterData: return "EnterData";
  }
  return "?";
}

inline ActionKind kind_from_name(std::string_view s) {
  static const std::pair<const char*, ActionKind> table[] = {
      {"Click", ActionKind::Click},         {"ScrapeText", ActionKind::ScrapeText},
      {"ScrapeLink", ActionKind::ScrapeLink}, {"Download", ActionKind::Download},
      {"GoBack", ActionKind::GoBack},       {"ExtractURL", ActionKind::ExtractURL},
      {"SendKeys", ActionKind::SendKeys},   {"EnterData", ActionKind::EnterData},
  };
  for (const auto& [n, k] : table)
    if (s == n) return k;
  throw ParseError("unknown action kind '" + std::string(s) + "'", 0);
}

inline bool has_selector(ActionKind k) {
  return k != ActionKind::GoBack && k != ActionKind::ExtractURL;
}

struct Action {
  ActionKind kind = ActionKind::Click;
  Selector selector;
  std::string text;      // SendKeys
  ValuePath value_path;  // EnterData
  friend bool operator==(const Action&, const Action&) = default;
};

using ActionTrace = std::vector<Action>;

inline std::string to_string(const Action& a) {
  std::string out = kind_name(a.kind);
  out += '(';
  if (has_selector(a.kind)) out += to_string(a.selector);
  if (a.kind == ActionKind::SendKeys) out += ", \"" + a.text + "\"";
  if (a.kind == ActionKind::EnterData) out += ", " + to_string(a.value_path);
  out += ')';
  return out;
}

inline Json action_to_json(const Action& a) {
  Json j = {{"kind", kind_name(a.kind)}};
  if (has_selector(a.kind)) j["selector"] = to_string(a.selector);
  if (a.kind == ActionKind::SendKeys) j["text"] = a.text;
  if (a.kind == ActionKind::EnterData) j["value_path"] = to_string(a.value_path);
  return j;
}

inline Action action_from_json(const Json& j) {
  Action a;
  a.kind = kind_from_name(j.at("kind").get<std::string>());
  if (has_selector(a.kind)) a.selector = parse_selector(j.at("selector").get<std::string>());
  if (a.kind == ActionKind::SendKeys) a.text = j.at("text").get<std::string>();
  if (a.kind == ActionKind::EnterData)
    a.value_path = parse_value_path(j.at("value_path").get<std::string>());
  return a;
}

// ---------------------------------------------------------------------------
// Statements and programs

using VarId = int;  // 0 stands for the root (selectors) or x (value paths)

inline VarId fresh_var() {
  static std::atomic<int> next{1};
  return next.fetch_add(1);
}

// A selector whose head is the root or a loop variable.
struct SymSelector {
  VarId var = 0;
  Steps steps;
  bool is_concrete() const { return var == 0; }
  Selector concrete() const { return Selector{steps}; }
  friend bool operator==(const SymSelector&, const SymSelector&) = default;
};

struct SymValuePath {
  VarId var = 0;
  VPSteps steps;
  bool is_concrete() const { return var == 0; }
  ValuePath concrete() const { return ValuePath{steps}; }
  friend bool operator==(const SymValuePath&, const SymValuePath&) = default;
};

inline SymSelector sym(const Selector& s) { return SymSelector{0, s.steps}; }
inline SymValuePath sym(const ValuePath& v) { return SymValuePath{0, v.steps}; }

enum class StmtKind : std::uint8_t { Atomic, ForSelectors, ForValuePaths, While };
enum class Collection : std::uint8_t { Children, Dscts };

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;
using Program = std::vector<StmtPtr>;

struct Stmt {
  StmtKind kind = StmtKind::Atomic;
  // Atomic
  ActionKind action = ActionKind::Click;
  SymSelector sel;
  std::string text;
  SymValuePath vp;
  // ForSelectors: foreach var in coll(base, pred); ForValuePaths: foreach var in ValuePaths(array)
  VarId var = 0;
  Collection coll = Collection::Children;
  SymSelector base;
  Predicate pred;
  SymValuePath array;
  // loop bodies; for While the last statement is the guarding Click
  Program body;

  bool is_loop() const { return kind != StmtKind::Atomic; }
};

struct ScopeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline StmtPtr make_atomic(ActionKind k, SymSelector sel = {}, std::string text = {},
                           SymValuePath vp = {}) {
  auto s = std::make_shared<Stmt>();
  s->kind = StmtKind::Atomic;
  s->action = k;
  s->sel = std::move(sel);
  s->text = std::move(text);
  s->vp = std::move(vp);
  return s;
}

inline StmtPtr make_action_stmt(const Action& a) {
  return make_atomic(a.kind, sym(a.selector), a.text, sym(a.value_path));
}

inline StmtPtr make_for_selectors(VarId var, Collection c, SymSelector base, Predicate pred,
                                  Program body) {
  if (body.empty()) throw ScopeError("loop body must not be empty");
  auto s = std::make_shared<Stmt>();
  s->kind = StmtKind::ForSelectors;
  s->var = var;
  s->coll = c;
  s->base = std::move(base);
  s->pred = std::move(pred);
  s->body = std::move(body);
  return s;
}

inline StmtPtr make_for_value_paths(VarId var, SymValuePath array, Program body) {
  if (body.empty()) throw ScopeError("loop body must not be empty");
  auto s = std::make_shared<Stmt>();
  s->kind = StmtKind::ForValuePaths;
  s->var = var;
  s->array = std::move(array);
  s->body = std::move(body);
  return s;
}

inline StmtPtr make_while(Program body) {
  if (body.empty() || body.back()->kind != StmtKind::Atomic ||
      body.back()->action != ActionKind::Click)
    throw ScopeError("while body must end with a Click");
  auto s = std::make_shared<Stmt>();
  s->kind = StmtKind::While;
  s->body = std::move(body);
  return s;
}

inline Program program_of(const ActionTrace& A) {
  Program p;
  for (const auto& a : A) p.push_back(make_action_stmt(a));
  return p;
}

// ---------------------------------------------------------------------------
// Size

inline int statement_size(const Stmt& s);

inline int program_size(const Program& p) {
  int n = 0;
  for (const auto& s : p) n += statement_size(*s);
  return n;
}

inline int statement_size(const Stmt& s) {
  switch (s.kind) {
    case StmtKind::Atomic:
      return 1 + static_cast<int>(s.sel.steps.size() + s.vp.steps.size());
    case StmtKind::ForSelectors:
      return 2 + static_cast<int>(s.base.steps.size()) + program_size(s.body);
    case StmtKind::ForValuePaths:
      return 2 + static_cast<int>(s.array.steps.size()) + program_size(s.body);
    case StmtKind::While:
      return 2 + program_size(s.body);
  }
  return 0;
}

inline int statement_count(const Program& p) { return static_cast<int>(p.size()); }

// ---------------------------------------------------------------------------
// Canonical form: bound variables become de Bruijn indices (#0 is the
// innermost binder), free variables keep their id.

namespace detail {

inline std::string pred_string(const Predicate& p) {
  std::string out = p.tag;
  if (p.attr) out += "[@" + p.attr->first + "='" + p.attr->second + "']";
  return out;
}

struct Canon {
  std::vector<VarId> binders;
  std::string out;

  void var(VarId v) {
    for (std::size_t d = 0; d < binders.size(); ++d) {
      if (binders[binders.size() - 1 - d] == v) {
        out += '#' + std::to_string(d);
        return;
      }
    }
    out += "?" + std::to_string(v);
  }
  void sel(const SymSelector& s) {
    if (s.var) var(s.var);
    out += steps_to_string(s.steps);
  }
  void vp(const SymValuePath& v) {
    if (v.var) {
      var(v.var);
    } else {
      out += 'x';
    }
    append_vp_steps(out, v.steps);
  }
  void prog(const Program& p) {
    out += '{';
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i) out += ';';
      stmt(*p[i]);
    }
    out += '}';
  }
  void stmt(const Stmt& s) {
    switch (s.kind) {
      case StmtKind::Atomic:
        out += kind_name(s.action);
        out += '(';
        if (has_selector(s.action)) sel(s.sel);
        if (s.action == ActionKind::SendKeys) out += ",\"" + s.text + "\"";
        if (s.action == ActionKind::EnterData) {
          out += ',';
          vp(s.vp);
        }
        out += ')';
        break;
      case StmtKind::ForSelectors:
        out += s.coll == Collection::Children ? "forC(" : "forD(";
        sel(s.base);
        out += ',' + pred_string(s.pred) + ')';
        binders.push_back(s.var);
        prog(s.body);
        binders.pop_back();
        break;
      case StmtKind::ForValuePaths:
        out += "forV(";
        vp(s.array);
        out += ')';
        binders.push_back(s.var);
        prog(s.body);
        binders.pop_back();
        break;
      case StmtKind::While:
        out += "while";
        prog(s.body);
        break;
    }
  }
};

}  // namespace detail

inline std::string canonical_form(const Program& p) {
  detail::Canon c;
  c.prog(p);
  return c.out;
}

inline std::string canonical_form(const Stmt& s) {
  detail::Canon c;
  c.stmt(s);
  return c.out;
}

// Pairwise structural walk with a binder bijection.
namespace detail {

struct Alpha {
  std::vector<std::pair<VarId, VarId>> env;

  bool var(VarId a, VarId b) const {
    for (auto it = env.rbegin(); it != env.rend(); ++it) {
      if (it->first == a || it->second == b) return it->first == a && it->second == b;
    }
    return a == b;
  }
  bool sel(const SymSelector& a, const SymSelector& b) const {
    if ((a.var == 0) != (b.var == 0)) return false;
    if (a.var && !var(a.var, b.var)) return false;
    return a.steps == b.steps;
  }
  bool vp(const SymValuePath& a, const SymValuePath& b) const {
    if ((a.var == 0) != (b.var == 0)) return false;
    if (a.var && !var(a.var, b.var)) return false;
    return a.steps == b.steps;
  }
  bool prog(const Program& a, const Program& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!stmt(*a[i], *b[i])) return false;
    return true;
  }
  bool stmt(const Stmt& a, const Stmt& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case StmtKind::Atomic:
        if (a.action != b.action) return false;
        if (has_selector(a.action) && !sel(a.sel, b.sel)) return false;
        if (a.action == ActionKind::SendKeys && a.text != b.text) return false;
        if (a.action == ActionKind::EnterData && !vp(a.vp, b.vp)) return false;
        return true;
      case StmtKind::ForSelectors: {
        if (a.coll != b.coll || !(a.pred == b.pred) || !sel(a.base, b.base)) return false;
        env.emplace_back(a.var, b.var);
        bool ok = prog(a.body, b.body);
        env.pop_back();
        return ok;
      }
      case StmtKind::ForValuePaths: {
        if (!vp(a.array, b.array)) return false;
        env.emplace_back(a.var, b.var);
        bool ok = prog(a.body, b.body);
        env.pop_back();
        return ok;
      }
      case StmtKind::While:
        return prog(a.body, b.body);
    }
    return false;
  }
};

}  // namespace detail

inline bool alpha_equivalent(const Program& a, const Program& b) {
  detail::Alpha w;
  return w.prog(a, b);
}

inline bool alpha_equivalent(const Stmt& a, const Stmt& b) {
  detail::Alpha w;
  return w.stmt(a, b);
}

// ---------------------------------------------------------------------------
// Scope checking

namespace detail {

enum class VarSort { Selector, ValuePath };

inline void check_scope(const Program& p, std::vector<std::pair<VarId, VarSort>>& env);

inline void check_var(VarId v, VarSort sort, const std::vector<std::pair<VarId, VarSort>>& env) {
  if (v == 0) return;
  for (auto it = env.rbegin(); it != env.rend(); ++it)
    if (it->first == v) {
      if (it->second != sort) throw ScopeError("variable used at the wrong sort");
      return;
    }
  throw ScopeError("unbound variable " + std::to_string(v));
}

inline void check_scope(const Stmt& s, std::vector<std::pair<VarId, VarSort>>& env) {
  switch (s.kind) {
    case StmtKind::Atomic:
      if (has_selector(s.action)) check_var(s.sel.var, VarSort::Selector, env);
      if (s.action == ActionKind::EnterData) check_var(s.vp.var, VarSort::ValuePath, env);
      return;
    case StmtKind::ForSelectors:
    case StmtKind::ForValuePaths: {
      bool is_sel = s.kind == StmtKind::ForSelectors;
      if (is_sel) {
        check_var(s.base.var, VarSort::Selector, env);
      } else {
        check_var(s.array.var, VarSort::ValuePath, env);
      }
      if (s.var == 0) throw ScopeError("loop variable missing");
      for (const auto& e : env)
        if (e.first == s.var) throw ScopeError("loop variable is not fresh");
      env.emplace_back(s.var, is_sel ? VarSort::Selector : VarSort::ValuePath);
      check_scope(s.body, env);
      env.pop_back();
      return;
    }
    case StmtKind::While:
      if (s.body.empty() || s.body.back()->kind != StmtKind::Atomic ||
          s.body.back()->action != ActionKind::Click)
        throw ScopeError("while body must end with a Click");
      check_scope(s.body, env);
      return;
  }
}

inline void check_scope(const Program& p, std::vector<std::pair<VarId, VarSort>>& env) {
  for (const auto& s : p) check_scope(*s, env);
}

}  // namespace detail

// Throws ScopeError if a variable is used outside its binder.
inline void check_well_scoped(const Program& p) {
  if (p.empty()) throw ScopeError("program must contain at least one statement");
  std::vector<std::pair<VarId, detail::VarSort>> env;
  detail::check_scope(p, env);
}

inline bool well_scoped(const Program& p) {
  try {
    check_well_scoped(p);
    return true;
  } catch (const ScopeError&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Program text: a JSON AST. Loop variables are named r<n> (selectors) and
// v<n> (value paths), numbered by binder depth so the output is stable.

namespace detail {

struct Writer {
  std::vector<std::pair<VarId, std::string>> names;

  std::string name(VarId v) const {
    for (auto it = names.rbegin(); it != names.rend(); ++it)
      if (it->first == v) return it->second;
    return "?" + std::to_string(v);
  }
  std::string sel(const SymSelector& s) const {
    return (s.var ? name(s.var) : std::string()) + steps_to_string(s.steps);
  }
  std::string vp(const SymValuePath& v) const {
    std::string out = v.var ? name(v.var) : std::string("x");
    append_vp_steps(out, v.steps);
    return out;
  }
  Json prog(const Program& p) {
    Json a = Json::array();
    for (const auto& s : p) a.push_back(stmt(*s));
    return a;
  }
  Json stmt(const Stmt& s) {
    switch (s.kind) {
      case StmtKind::Atomic: {
        Json j = {{"kind", kind_name(s.action)}};
        if (has_selector(s.action)) j["selector"] = sel(s.sel);
        if (s.action == ActionKind::SendKeys) j["text"] = s.text;
        if (s.action == ActionKind::EnterData) j["value_path"] = vp(s.vp);
        return j;
      }
      case StmtKind::ForSelectors: {
        std::string nm = "r" + std::to_string(names.size() + 1);
        Json j = {{"kind", "ForEachSelectors"},
                  {"var", nm},
                  {"collection",
                   {{"kind", s.coll == Collection::Children ? "Children" : "Dscts"},
                    {"base", sel(s.base)},
                    {"pred", pred_string(s.pred)}}}};
        names.emplace_back(s.var, nm);
        j["body"] = prog(s.body);
        names.pop_back();
        return j;
      }
      case StmtKind::ForValuePaths: {
        std::string nm = "v" + std::to_string(names.size() + 1);
        Json j = {{"kind", "ForEachValuePaths"}, {"var", nm}, {"collection", {{"kind", "ValuePaths"}, {"base", vp(s.array)}}}};
        names.emplace_back(s.var, nm);
        j["body"] = prog(s.body);
        names.pop_back();
        return j;
      }
      case StmtKind::While:
        return Json{{"kind", "While"}, {"body", prog(s.body)}};
    }
    return Json();
  }
};

inline std::size_t head_length(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] != '/' && s[i] != '[') ++i;
  return i;
}

struct Reader {
  std::vector<std::pair<std::string, std::pair<VarId, VarSort>>> names;

  VarId lookup(const std::string& n, VarSort sort) const {
    for (auto it = names.rbegin(); it != names.rend(); ++it)
      if (it->first == n) {
        if (it->second.second != sort) throw ScopeError("variable '" + n + "' used at the wrong sort");
        return it->second.first;
      }
    throw ScopeError("unbound variable '" + n + "'");
  }
  SymSelector sel(const std::string& s) const {
    std::size_t h = head_length(s);
    SymSelector out;
    if (h) out.var = lookup(s.substr(0, h), VarSort::Selector);
    out.steps = parse_steps(s, h);
    return out;
  }
  SymValuePath vp(const std::string& s) const {
    std::size_t h = head_length(s);
    if (h == 0) throw ParseError("value path needs a head", 0);
    SymValuePath out;
    std::string head = s.substr(0, h);
    if (head != "x") out.var = lookup(head, VarSort::ValuePath);
    out.steps = parse_vp_steps(s, h);
    return out;
  }
  Predicate pred(const std::string& s) const {
    std::size_t h = head_length(s);
    Predicate p{s.substr(0, h), std::nullopt};
    if (p.tag.empty()) throw ParseError("predicate needs a tag", 0);
    if (h < s.size()) {
      // reuse the step parser on "/tag[@k='v'][1]"
      auto st = parse_steps("/" + s + "[1]");
      if (st.size() != 1) throw ParseError("bad predicate '" + s + "'", 0);
      p = st[0].pred;
    }
    return p;
  }
  Program prog(const Json& a) {
    if (!a.is_array()) throw ParseError("program must be an array", 0);
    Program p;
    for (const auto& s : a) p.push_back(stmt(s));
    return p;
  }
  StmtPtr bind_and_read(const std::string& nm, VarSort sort, VarId v, const Json& body,
                        Program& out) {
    for (const auto& e : names)
      if (e.first == nm) throw ScopeError("loop variable '" + nm + "' is not fresh");
    names.push_back({nm, {v, sort}});
    out = prog(body);
    names.pop_back();
    return nullptr;
  }
  StmtPtr stmt(const Json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "ForEachSelectors") {
      const Json& c = j.at("collection");
      std::string ck = c.at("kind").get<std::string>();
      if (ck != "Children" && ck != "Dscts") throw ParseError("bad collection kind '" + ck + "'", 0);
      SymSelector base = sel(c.at("base").get<std::string>());
      Predicate pr = pred(c.at("pred").get<std::string>());
      VarId v = fresh_var();
      Program body;
      bind_and_read(j.at("var").get<std::string>(), VarSort::Selector, v, j.at("body"), body);
      return make_for_selectors(v, ck == "Children" ? Collection::Children : Collection::Dscts,
                                std::move(base), std::move(pr), std::move(body));
    }
    if (kind == "ForEachValuePaths") {
      const Json& c = j.at("collection");
      SymValuePath arr = vp(c.at("base").get<std::string>());
      VarId v = fresh_var();
      Program body;
      bind_and_read(j.at("var").get<std::string>(), VarSort::ValuePath, v, j.at("body"), body);
      return make_for_value_paths(v, std::move(arr), std::move(body));
    }
    if (kind == "While") return make_while(prog(j.at("body")));
    ActionKind k = kind_from_name(kind);
    auto s = std::make_shared<Stmt>();
    s->action = k;
    if (has_selector(k)) s->sel = sel(j.at("selector").get<std::string>());
    if (k == ActionKind::SendKeys) s->text = j.at("text").get<std::string>();
    if (k == ActionKind::EnterData) s->vp = vp(j.at("value_path").get<std::string>());
    return s;
  }
};

}  // namespace detail

inline Json program_to_json(const Program& p) {
  detail::Writer w;
  return w.prog(p);
}

inline Program program_from_json(const Json& j) {
  detail::Reader r;
  Program p = r.prog(j);
  check_well_scoped(p);
  return p;
}

inline std::string serialize(const Program& p) { return program_to_json(p).dump(); }

inline Program deserialize_program(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  return program_from_json(j);
}

inline Json trace_to_json(const ActionTrace& A) {
  Json a = Json::array();
  for (const auto& x : A) a.push_back(action_to_json(x));
  return a;
}

inline ActionTrace trace_from_json(const Json& j) {
  ActionTrace A;
  for (const auto& x : j) A.push_back(action_from_json(x));
  return A;
}

inline std::string serialize(const ActionTrace& A) { return trace_to_json(A).dump(); }
inline std::string serialize(const Action& a) { return action_to_json(a).dump(); }

// ---------------------------------------------------------------------------
// Human-readable surface syntax (not parsed back).

namespace detail {

struct Pretty {
  std::vector<std::pair<VarId, std::string>> names;
  std::ostringstream out;

  std::string name(VarId v) const {
    for (auto it = names.rbegin(); it != names.rend(); ++it)
      if (it->first == v) return it->second;
    return "?" + std::to_string(v);
  }
  std::string sel(const SymSelector& s) const {
    if (!s.var && s.steps.empty()) return "ε";
    return (s.var ? name(s.var) : std::string()) + steps_to_string(s.steps);
  }
  std::string vp(const SymValuePath& v) const {
    std::string o = v.var ? name(v.var) : std::string("x");
    append_vp_steps(o, v.steps);
    return o;
  }
  void indent(int d) {
    for (int i = 0; i < d; ++i) out << "  ";
  }
  void prog(const Program& p, int d) {
    for (const auto& s : p) stmt(*s, d);
  }
  void stmt(const Stmt& s, int d) {
    indent(d);
    switch (s.kind) {
      case StmtKind::Atomic:
        out << kind_name(s.action) << '(';
        if (has_selector(s.action)) out << sel(s.sel);
        if (s.action == ActionKind::SendKeys) out << ", \"" << s.text << '"';
        if (s.action == ActionKind::EnterData) out << ", " << vp(s.vp);
        out << ")\n";
        return;
      case StmtKind::ForSelectors: {
        std::string nm = "r" + std::to_string(names.size() + 1);
        out << "foreach " << nm << " in " << (s.coll == Collection::Children ? "Children" : "Dscts")
            << '(' << sel(s.base) << ", " << pred_string(s.pred) << ") {\n";
        names.emplace_back(s.var, nm);
        prog(s.body, d + 1);
        names.pop_back();
        break;
      }
      case StmtKind::ForValuePaths: {
        std::string nm = "v" + std::to_string(names.size() + 1);
        out << "foreach " << nm << " in ValuePaths(" << vp(s.array) << ") {\n";
        names.emplace_back(s.var, nm);
        prog(s.body, d + 1);
        names.pop_back();
        break;
      }
      case StmtKind::While:
        out << "while {\n";
        prog(s.body, d + 1);
        break;
    }
    indent(d);
    out << "}\n";
  }
};

}  // namespace detail

inline std::string pretty(const Program& p) {
  detail::Pretty pr;
  pr.prog(p, 0);
  return pr.out.str();
}

}  // namespace rpa
