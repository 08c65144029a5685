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

// Speculate-and-validate synthesizer: a worklist of partially rolled-up
// programs, loop speculation by anti-unification and parametrization, and
// validation by re-execution against the recorded trace.

#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "rpa/dom.hpp"
#include "rpa/lang.hpp"
#include "rpa/semantics.hpp"

namespace rpa {

struct SynthOptions {
  std::chrono::milliseconds budget{1000};
  bool selector_search = true;      // false: AlternativeSelectors(p) = {p}
  AltOptions unify_alts{0, 2, true, true};
  AltOptions param_alts{5, 2, true, true};
  std::size_t max_variants = 8;     // loop statements kept per slice
  std::size_t max_bodies = 64;      // parametrized bodies per speculation tuple
  std::size_t max_unifiers = 24;    // anti-unification results per statement pair
  bool check_invariants = false;    // assert I1/I2 on every enqueued entry
};

struct SelectorsExpr {
  Collection coll = Collection::Dscts;
  Selector base;
  Predicate pred;
  Selector first() const {
    Selector s = base;
    s.steps.push_back(Step{coll == Collection::Children ? Axis::Child : Axis::Descendant, pred, 1});
    return s;
  }
  friend bool operator==(const SelectorsExpr&, const SelectorsExpr&) = default;
};

struct ValuePathsExpr {
  ValuePath array;
  ValuePath first() const {
    ValuePath v = array;
    v.steps.push_back(VPStep::Index(1));
    return v;
  }
  friend bool operator==(const ValuePathsExpr&, const ValuePathsExpr&) = default;
};

struct Unifier {
  StmtPtr stmt;  // S_p generalized over `var`
  VarId var = 0;
  std::variant<SelectorsExpr, ValuePathsExpr> collection;
};

// ---------------------------------------------------------------------------
// Anti-unification of selectors (a selector in iteration 1 vs iteration 2)

struct SelectorTemplate {
  SelectorsExpr coll;
  Steps suffix;  // the generalized selector is var + suffix
};

namespace detail {

struct Decomp {
  std::string key;  // prefix | axis | pred | suffix, with the split index removed
  SelectorTemplate tmpl;
};

// Ways to read `alts` as prefix/pred[idx]/suffix.
inline std::vector<Decomp> decompositions(const std::vector<Steps>& alts, int idx) {
  std::vector<Decomp> out;
  for (const auto& s : alts) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (s[t].index != idx) continue;
      Steps prefix(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(t));
      Steps suffix(s.begin() + static_cast<std::ptrdiff_t>(t) + 1, s.end());
      Step bare = s[t];
      bare.index = 1;
      std::string key = steps_to_string(prefix) + "|" + steps_to_string({bare}) + "|" +
                        steps_to_string(suffix);
      SelectorTemplate tm{SelectorsExpr{s[t].axis == Axis::Child ? Collection::Children
                                                                  : Collection::Dscts,
                                        Selector{prefix}, s[t].pred},
                          suffix};
      out.push_back(Decomp{std::move(key), std::move(tm)});
    }
  }
  return out;
}

inline std::vector<SelectorTemplate> match_decomps(const std::vector<Decomp>& d1,
                                                   const std::vector<Decomp>& d2,
                                                   std::size_t limit) {
  std::unordered_map<std::string_view, const Decomp*> idx;
  for (const auto& d : d2) idx.emplace(d.key, &d);
  std::vector<SelectorTemplate> out;
  std::unordered_set<std::string_view> seen;
  for (const auto& d : d1) {
    if (limit && out.size() >= limit) break;
    if (idx.count(d.key) && seen.insert(d.key).second) out.push_back(d.tmpl);
  }
  return out;
}

}  // namespace detail

// Templates n with r1' = n[var -> base/pred[1]] and r2' = n[var -> base/pred[2]]
// for alternatives r1' of r1 (on pi1) and r2' of r2 (on pi2).
inline std::vector<SelectorTemplate> anti_unify_selectors(const Selector& r1, const DomTree& pi1,
                                                          const Selector& r2, const DomTree& pi2,
                                                          const AltOptions& alts = {0, 2, true, true},
                                                          std::size_t limit = 0) {
  if (!valid(r1, pi1) || !valid(r2, pi2)) return {};
  auto a1 = alternative_steps(r1.steps, pi1, pi1.root(), alts);
  auto a2 = alternative_steps(r2.steps, pi2, pi2.root(), alts);
  return detail::match_decomps(detail::decompositions(a1, 1), detail::decompositions(a2, 2), limit);
}

// θ1 = θ[1]σ and θ2 = θ[2]σ; returns θ and σ.
inline std::optional<std::pair<ValuePath, VPSteps>> anti_unify_value_paths(const ValuePath& t1,
                                                                           const ValuePath& t2) {
  if (t1.steps.size() != t2.steps.size()) return std::nullopt;
  std::optional<std::size_t> at;
  for (std::size_t k = 0; k < t1.steps.size(); ++k) {
    if (t1.steps[k] == t2.steps[k]) continue;
    if (at) return std::nullopt;
    at = k;
  }
  if (!at) return std::nullopt;
  const auto& s1 = t1.steps[*at];
  const auto& s2 = t2.steps[*at];
  if (!s1.is_index || !s2.is_index || s1.index != 1 || s2.index != 2) return std::nullopt;
  ValuePath arr{VPSteps(t1.steps.begin(), t1.steps.begin() + static_cast<std::ptrdiff_t>(*at))};
  VPSteps suffix(t1.steps.begin() + static_cast<std::ptrdiff_t>(*at) + 1, t1.steps.end());
  return std::make_pair(std::move(arr), std::move(suffix));
}

namespace detail {

inline StmtPtr with_selector(const Stmt& s, SymSelector sel) {
  auto c = std::make_shared<Stmt>(s);
  c->sel = std::move(sel);
  return c;
}
inline StmtPtr with_value_path(const Stmt& s, SymValuePath vp) {
  auto c = std::make_shared<Stmt>(s);
  c->vp = std::move(vp);
  return c;
}
inline StmtPtr with_base(const Stmt& s, SymSelector base) {
  auto c = std::make_shared<Stmt>(s);
  c->base = std::move(base);
  return c;
}
inline StmtPtr with_array(const Stmt& s, SymValuePath arr) {
  auto c = std::make_shared<Stmt>(s);
  c->array = std::move(arr);
  return c;
}

}  // namespace detail

// Anti-unify two closed top-level statements; pi_p / pi_q are the DOMs on
// which each starts executing.
inline std::vector<Unifier> anti_unify(const Stmt& sp, const DomTree& pi_p, const Stmt& sq,
                                       const DomTree& pi_q, const AltOptions& alts = {0, 2, true, true},
                                       std::size_t limit = 0) {
  std::vector<Unifier> out;
  if (sp.kind != sq.kind) return out;
  if (sp.kind == StmtKind::Atomic) {
    if (sp.action != sq.action || !has_selector(sp.action)) return out;
    if (!sp.sel.is_concrete() || !sq.sel.is_concrete()) return out;
    if (sp.action == ActionKind::SendKeys && sp.text != sq.text) return out;
    if (sp.action == ActionKind::EnterData && !(sp.vp == sq.vp)) {
      // value-path generalization needs the same target field
      if (!(sp.sel == sq.sel) || !sp.vp.is_concrete() || !sq.vp.is_concrete()) return out;
      auto au = anti_unify_value_paths(sp.vp.concrete(), sq.vp.concrete());
      if (!au) return out;
      VarId v = fresh_var();
      out.push_back(Unifier{detail::with_value_path(sp, SymValuePath{v, au->second}), v,
                            ValuePathsExpr{au->first}});
      return out;
    }
    for (auto& t : anti_unify_selectors(sp.sel.concrete(), pi_p, sq.sel.concrete(), pi_q, alts, limit)) {
      VarId v = fresh_var();
      out.push_back(Unifier{detail::with_selector(sp, SymSelector{v, t.suffix}), v, t.coll});
    }
    return out;
  }
  if (sp.kind == StmtKind::ForSelectors) {
    if (sp.coll != sq.coll || !(sp.pred == sq.pred)) return out;
    if (!sp.base.is_concrete() || !sq.base.is_concrete()) return out;
    // bodies are compared under each loop's own binder
    if (!alpha_equivalent(*detail::with_base(sp, {}), *detail::with_base(sq, {}))) return out;
    for (auto& t : anti_unify_selectors(sp.base.concrete(), pi_p, sq.base.concrete(), pi_q, alts, limit)) {
      VarId v = fresh_var();
      out.push_back(Unifier{detail::with_base(sp, SymSelector{v, t.suffix}), v, t.coll});
    }
    return out;
  }
  if (sp.kind == StmtKind::ForValuePaths) {
    if (!sp.array.is_concrete() || !sq.array.is_concrete()) return out;
    if (!alpha_equivalent(*detail::with_array(sp, {}), *detail::with_array(sq, {}))) return out;
    auto au = anti_unify_value_paths(sp.array.concrete(), sq.array.concrete());
    if (!au) return out;
    VarId v = fresh_var();
    out.push_back(Unifier{detail::with_array(sp, SymValuePath{v, au->second}), v,
                          ValuePathsExpr{au->first}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parametrization

inline int jump_count(const Steps& s) {
  int n = 0;
  for (const auto& st : s)
    if (st.axis == Axis::Descendant) ++n;
  return n;
}

// Suffixes σ such that binding/σ is an alternative of `target` on pi.
inline std::vector<Steps> relative_suffixes(const Selector& binding, const Selector& target,
                                            const DomTree& pi, const AltOptions& alts) {
  auto vb = resolve_selector(binding, pi);
  auto vt = resolve_selector(target, pi);
  if (!vb || !vt || !pi.is_ancestor_or_self(*vb, *vt)) return {};
  Steps rel;
  if (target.steps.size() >= binding.steps.size() &&
      std::equal(binding.steps.begin(), binding.steps.end(), target.steps.begin())) {
    rel.assign(target.steps.begin() + static_cast<std::ptrdiff_t>(binding.steps.size()),
               target.steps.end());
  } else {
    auto abs_t = absolute_selector_of(*vt, pi).steps;
    auto abs_b = absolute_selector_of(*vb, pi).steps;
    rel.assign(abs_t.begin() + static_cast<std::ptrdiff_t>(abs_b.size()), abs_t.end());
  }
  AltOptions o = alts;
  o.max_jumps = std::max(0, alts.max_jumps - jump_count(binding.steps));
  return alternative_steps(rel, pi, *vb, o);
}

inline std::vector<StmtPtr> parametrize(const StmtPtr& s, const DomTree& pi, VarId var,
                                        const Selector& binding, const AltOptions& alts = {}) {
  std::vector<StmtPtr> out{s};
  auto add_all = [&](const Selector& target, auto make) {
    for (auto& suf : relative_suffixes(binding, target, pi, alts)) out.push_back(make(SymSelector{var, suf}));
  };
  if (s->kind == StmtKind::Atomic && has_selector(s->action) && s->sel.is_concrete()) {
    add_all(s->sel.concrete(), [&](SymSelector n) { return detail::with_selector(*s, std::move(n)); });
  } else if (s->kind == StmtKind::ForSelectors && s->base.is_concrete()) {
    add_all(s->base.concrete(), [&](SymSelector n) { return detail::with_base(*s, std::move(n)); });
  }
  return out;
}

inline std::vector<StmtPtr> parametrize(const StmtPtr& s, VarId var, const ValuePath& binding) {
  std::vector<StmtPtr> out{s};
  auto prefixed = [&](const SymValuePath& v) -> std::optional<SymValuePath> {
    if (!v.is_concrete() || v.steps.size() < binding.steps.size()) return std::nullopt;
    if (!std::equal(binding.steps.begin(), binding.steps.end(), v.steps.begin())) return std::nullopt;
    return SymValuePath{var, VPSteps(v.steps.begin() + static_cast<std::ptrdiff_t>(binding.steps.size()),
                                     v.steps.end())};
  };
  if (s->kind == StmtKind::Atomic && s->action == ActionKind::EnterData) {
    if (auto v = prefixed(s->vp)) out.push_back(detail::with_value_path(*s, *v));
  } else if (s->kind == StmtKind::ForValuePaths) {
    if (auto v = prefixed(s->array)) out.push_back(detail::with_array(*s, *v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Worklist entries

// A slice of the trace and the statements known to reproduce it exactly.
struct Slot {
  int start = 0;  // index of the slice's first action
  int len = 0;
  std::vector<int> variants;  // interned statement ids, best first
};

struct SRewrite {
  int loop = -1;  // interned statement id
  int i = 0, j = 0;  // slot span of the loop's first iteration
};

struct WorklistEntry {
  std::vector<Slot> slots;
  int last_start = -1, last_end = -1;  // action span of the most recent rewrite
  std::string key;
  bool expanded = false;
  int expanded_slots = 0;   // slot count when last expanded
  std::vector<SRewrite> open;  // accepted only because the DOM trace ran out
};

struct SynthStats {
  std::size_t popped = 0, enqueued = 0, rewrites = 0, validations = 0, accepted = 0;
  bool timed_out = false;
};

struct SynthResult {
  std::vector<Program> programs;      // ranked
  std::vector<Prediction> predictions;  // deduplicated, in rank order
  SynthStats stats;
};

// Smaller programs first, ties broken by canonical form.
inline std::vector<Program> rank(std::vector<Program> ps) {
  std::vector<std::pair<std::pair<int, std::string>, std::size_t>> keys;
  for (std::size_t k = 0; k < ps.size(); ++k) keys.push_back({{program_size(ps[k]), canonical_form(ps[k])}, k});
  std::stable_sort(keys.begin(), keys.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Program> out;
  for (auto& [key, k] : keys) out.push_back(std::move(ps[k]));
  return out;
}

// ---------------------------------------------------------------------------

class SynthState {
 public:
  explicit SynthState(SynthOptions opt = {}) : opt_(std::move(opt)) {
    if (!opt_.selector_search) {
      opt_.unify_alts.enabled = false;
      opt_.param_alts.enabled = false;
    }
  }

  const SynthOptions& options() const { return opt_; }
  const ActionTrace& actions() const { return A_; }
  const DomTrace& doms() const { return pi_; }
  const InputData& input() const { return I_; }
  const std::vector<WorklistEntry>& entries() const { return entries_; }
  const StmtPtr& stmt(int id) const { return stmts_[static_cast<std::size_t>(id)]; }
  const std::string& stmt_key(int id) const { return keys_[static_cast<std::size_t>(id)]; }
  std::size_t worklist_size() const { return worklist_.size(); }
  int m() const { return static_cast<int>(A_.size()); }

  // Hook run on every entry before it is enqueued (tests use it to assert I1/I2).
  std::function<void(const SynthState&, const WorklistEntry&)> on_enqueue;
  // Hook run on every accepted rewrite: parent and child statement counts.
  std::function<void(std::size_t, std::size_t)> on_rewrite;

  SynthResult run(const ActionTrace& A, const DomTrace& pi, const InputData& I) {
    if (A.empty()) throw std::invalid_argument("empty action trace");
    if (pi.size() != A.size() + 1) throw std::invalid_argument("need |pi| = |A| + 1");
    deadline_ = Deadline::in(opt_.budget);
    SynthStats stats;
    if (A_.empty()) {
      begin(A, pi, I);
    } else {
      extend(A, pi, I);
    }
    std::vector<std::size_t> generalizing;
    while (!worklist_.empty()) {
      if (deadline_.passed()) {
        stats.timed_out = true;
        break;
      }
      std::size_t idx = worklist_.front();
      worklist_.pop_front();
      ++stats.popped;
      try {
        if (generalizes_entry(entries_[idx])) generalizing.push_back(idx);
        expand(idx, stats);
      } catch (const Timeout&) {
        worklist_.push_front(idx);
        stats.timed_out = true;
        break;
      }
    }
    return collect(generalizing, stats);
  }

  // --- building blocks, public for tests --------------------------------

  // Resets the state to the trace's initial entry without expanding it.
  void load(const ActionTrace& A, const DomTrace& pi, const InputData& I) {
    if (pi.size() != A.size() + 1) throw std::invalid_argument("need |pi| = |A| + 1");
    deadline_ = Deadline::never();
    begin(A, pi, I);
  }

  // Empty if the entry's slots partition the trace in order and every
  // variant reproduces exactly its own slice; otherwise a description.
  std::string check_entry(const WorklistEntry& e) const {
    int at = 0;
    for (const auto& s : e.slots) {
      if (s.start != at || s.len <= 0) return "slices do not partition the trace at action " + std::to_string(at);
      if (s.variants.empty()) return "slice at " + std::to_string(at) + " has no statement";
      for (int v : s.variants) {
        int produced = 0;
        bool ok = true;
        Env env;
        Interpreter in(pi_, static_cast<std::size_t>(s.start), static_cast<std::size_t>(s.start + s.len), I_,
                       [&](const Action& a, std::size_t k) {
                         ++produced;
                         ok = actions_consistent(a, A_[k], *pi_[k]);
                         return ok;
                       });
        try {
          in.run(*stmts_[static_cast<std::size_t>(v)], env);
        } catch (const ExecError&) {
          ok = false;
        }
        if (!ok || produced != s.len)
          return "statement " + keys_[static_cast<std::size_t>(v)] + " does not reproduce slice at " +
                 std::to_string(at);
      }
      at += s.len;
    }
    if (at != m()) return "slices cover " + std::to_string(at) + " of " + std::to_string(m()) + " actions";
    return {};
  }

  int intern(const StmtPtr& s) {
    auto it = ptr_ids_.find(s.get());
    if (it != ptr_ids_.end()) return it->second;
    std::string k = canonical_form(*s);
    auto kt = key_ids_.find(k);
    int id;
    if (kt != key_ids_.end()) {
      id = kt->second;
    } else {
      id = static_cast<int>(stmts_.size());
      stmts_.push_back(s);
      keys_.push_back(k);
      sizes_.push_back(statement_size(*s));
      key_ids_.emplace(std::move(k), id);
    }
    ptr_ids_.emplace(s.get(), id);
    held_.push_back(s);
    return id;
  }

  const DomTree& dom_at(int action_index) const { return *pi_[static_cast<std::size_t>(action_index)]; }

  // Speculation over entry e. Tuples whose second-iteration statement q lies
  // before `q_from`, and while loops guarded before `p_from`, are skipped.
  std::vector<SRewrite> speculate(const WorklistEntry& e, int q_from = 0, int p_from = 0) {
    std::vector<SRewrite> out;
    std::unordered_set<long long> seen;
    auto push = [&](int loop, int i, int j) {
      long long key = (static_cast<long long>(loop) << 24) ^ (static_cast<long long>(i) << 12) ^ j;
      if (seen.insert(key).second) out.push_back(SRewrite{loop, i, j});
    };
    const int l = static_cast<int>(e.slots.size());
    std::vector<std::vector<int>> opts;
    for (int q = std::max(1, q_from); q < l; ++q) {
      for (int p = 0; p < q; ++p) {
        tick();
        for (const auto& u : unifiers(e.slots[p], e.slots[q])) {
          const int head = intern(u.stmt);
          for (int i = std::max(0, 2 * p - q + 1); i <= p; ++i) {
            int j = q - p + i - 1;
            const int pos2 = e.slots[static_cast<std::size_t>(j + 1)].start;
            auto env2 = second_binding(u, pos2);
            if (!env2) continue;  // no second iteration: the loop cannot cover slot j+1
            opts.clear();
            for (int k = i; k <= j; ++k)
              opts.push_back(k == p ? std::vector<int>{head} : param_options(e.slots[static_cast<std::size_t>(k)], u));
            second_iteration_bodies(opts, pos2, *env2, u.var,
                                    [&](const std::vector<int>& body) { push(make_loop(u, body), i, j); });
          }
        }
      }
    }
    for (int p = std::max(1, p_from); p + 1 < l; ++p) {
      const Slot& sp = e.slots[p];
      const Stmt& g = *stmts_[static_cast<std::size_t>(sp.variants.front())];
      if (g.kind != StmtKind::Atomic || g.action != ActionKind::Click) continue;
      for (int i = 0; i < p; ++i) {
        tick();
        opts.clear();
        for (int k = i; k < p; ++k) opts.push_back(e.slots[k].variants);
        opts.push_back({sp.variants.front()});
        second_iteration_bodies(opts, e.slots[static_cast<std::size_t>(p + 1)].start, Env{}, -1,
                                [&](const std::vector<int>& body) { push(make_while(body), i, p); }, true);
      }
    }
    return out;
  }

  struct Outcome {
    bool mismatch = false;
    bool exhausted = false;
    int produced = 0;
  };

  // Runs statement `id` from action index `start` against the recorded
  // actions over DOMs [start, m).
  Outcome run_against_trace(int id, int start) {
    long long key = (static_cast<long long>(id) << 20) ^ start;
    auto it = outcomes_.find(key);
    if (it != outcomes_.end() && (!it->second.first.exhausted || it->second.second == m()))
      return it->second.first;
    Outcome o;
    Env env;
    Interpreter in(
        pi_, static_cast<std::size_t>(start), A_.size(), I_,
        [&](const Action& a, std::size_t at) {
          if (!actions_consistent(a, A_[at], *pi_[at])) {
            o.mismatch = true;
            return false;
          }
          ++o.produced;
          return true;
        },
        deadline_);
    try {
      in.run(*stmts_[static_cast<std::size_t>(id)], env);
    } catch (const ExecError&) {
      o.mismatch = true;
    }
    o.exhausted = !o.mismatch && in.exhausted();
    ++validations_;
    outcomes_[key] = {o, m()};
    return o;
  }

  // Alg. 3 for one entry: accepted rewrites grouped into child entries.
  std::vector<WorklistEntry> validate(const std::vector<SRewrite>& rewrites, const WorklistEntry& e,
                                      std::vector<SRewrite>* open = nullptr) {
    std::map<std::pair<int, int>, std::vector<int>> groups;  // (i, r) -> loops
    for (const auto& rw : rewrites) {
      tick();
      const int a0 = e.slots[static_cast<std::size_t>(rw.i)].start;
      Outcome o = run_against_trace(rw.loop, a0);
      if (o.mismatch) continue;
      int r = -1, acc = 0;
      for (int k = rw.i; k < static_cast<int>(e.slots.size()); ++k) {
        acc += e.slots[static_cast<std::size_t>(k)].len;
        if (acc == o.produced) {
          r = k;
          break;
        }
        if (acc > o.produced) break;
      }
      if (r < rw.j + 1) continue;
      const int a1 = a0 + o.produced;
      if (!(a1 > e.last_end || (a1 == e.last_end && a0 < e.last_start))) continue;
      if (o.exhausted && open) open->push_back(rw);
      groups[{rw.i, r}].push_back(rw.loop);
    }
    std::vector<WorklistEntry> out;
    for (auto& [span, loops] : groups) {
      auto [i, r] = span;
      WorklistEntry c;
      c.slots.assign(e.slots.begin(), e.slots.begin() + i);
      Slot s;
      s.start = e.slots[static_cast<std::size_t>(i)].start;
      for (int k = i; k <= r; ++k) s.len += e.slots[static_cast<std::size_t>(k)].len;
      s.variants = best_variants(std::move(loops));
      c.slots.push_back(std::move(s));
      c.slots.insert(c.slots.end(), e.slots.begin() + r + 1, e.slots.end());
      c.last_start = c.slots[static_cast<std::size_t>(i)].start;
      c.last_end = c.last_start + c.slots[static_cast<std::size_t>(i)].len;
      c.key = entry_key(c);
      if (on_rewrite) on_rewrite(e.slots.size(), c.slots.size());
      out.push_back(std::move(c));
    }
    return out;
  }

  // The program an entry denotes, choosing the first variant of each slot
  // except the last, which is `last_variant`.
  Program program_of(const WorklistEntry& e, std::size_t last_variant = 0) const {
    Program p;
    for (std::size_t k = 0; k < e.slots.size(); ++k) {
      std::size_t v = k + 1 == e.slots.size() ? last_variant : 0;
      p.push_back(stmts_[static_cast<std::size_t>(e.slots[k].variants[v])]);
    }
    return p;
  }

  // Prediction of variant `id` starting at `start` with the lookahead DOM.
  std::optional<Action> predict_from(int id, int start, int len) {
    long long key = (static_cast<long long>(id) << 20) ^ start;
    auto it = predictions_.find(key);
    if (it != predictions_.end() && it->second.second == m()) return it->second.first;
    std::optional<Action> next;
    int seen = 0;
    Env env;
    Interpreter in(
        pi_, static_cast<std::size_t>(start), pi_.size(), I_,
        [&](const Action& a, std::size_t) {
          if (++seen <= len) return true;
          next = a;
          return false;
        },
        deadline_);
    try {
      in.run(*stmts_[static_cast<std::size_t>(id)], env);
    } catch (const ExecError&) {
      next.reset();
    }
    predictions_[key] = {next, m()};
    return next;
  }

 private:
  void tick() {
    if ((++ticks_ & 255) == 0 && deadline_.passed()) throw Timeout();
  }

  void begin(const ActionTrace& A, const DomTrace& pi, const InputData& I) {
    A_ = A;
    pi_ = pi;
    I_ = I;
    WorklistEntry e;
    for (std::size_t k = 0; k < A.size(); ++k)
      e.slots.push_back(Slot{static_cast<int>(k), 1, {intern(make_action_stmt(A[k]))}});
    e.key = entry_key(e);
    entries_.clear();
    worklist_.clear();
    visited_.clear();
    by_partition_.clear();
    enqueue(std::move(e));
  }

  // Grows every retained entry by the new actions (as singleton slices).
  void extend(const ActionTrace& A, const DomTrace& pi, const InputData& I) {
    if (A.size() < A_.size() || !std::equal(A_.begin(), A_.end(), A.begin()))
      throw std::invalid_argument("synthesis state does not match a prefix of the trace");
    if (!(I == I_)) throw std::invalid_argument("input data changed between incremental calls");
    const int old_m = m();
    A_ = A;
    pi_ = pi;
    if (m() == old_m) {
      // Same trace again: results are recomputed from every entry.
      worklist_.clear();
      for (std::size_t k = 0; k < entries_.size(); ++k) worklist_.push_back(k);
      return;
    }
    std::vector<int> fresh;
    for (int k = old_m; k < m(); ++k) fresh.push_back(intern(make_action_stmt(A_[static_cast<std::size_t>(k)])));
    std::vector<WorklistEntry> old;
    old.swap(entries_);
    worklist_.clear();
    visited_.clear();
    by_partition_.clear();
    for (auto& e : old) {
      Slot& last = e.slots.back();
      if (last.len > 1 || stmts_[static_cast<std::size_t>(last.variants.front())]->is_loop()) {
        std::vector<int> keep;
        for (int v : last.variants) {
          Outcome o = run_against_trace(v, last.start);
          if (!o.mismatch && o.produced == last.len && !o.exhausted) keep.push_back(v);
        }
        if (keep.empty()) continue;
        last.variants = std::move(keep);
      }
      for (int k = old_m; k < m(); ++k) e.slots.push_back(Slot{k, 1, {fresh[static_cast<std::size_t>(k - old_m)]}});
      e.key = entry_key(e);
      if (!visited_.insert(e.key).second) continue;
      entries_.push_back(std::move(e));
      by_partition_[partition_key(entries_.back())] = entries_.size() - 1;
      worklist_.push_back(entries_.size() - 1);
    }
  }

  // Entries over the same slice partition are merged while the older one is
  // still waiting; the merged entry keeps the more permissive rewrite order.
  void enqueue(WorklistEntry e) {
    if (opt_.check_invariants) {
      auto err = check_entry(e);
      if (!err.empty()) throw std::logic_error("worklist invariant: " + err);
    }
    std::string part = partition_key(e);
    auto it = by_partition_.find(part);
    if (it != by_partition_.end()) {
      WorklistEntry& o = entries_[it->second];
      if (!o.expanded) {
        for (std::size_t k = 0; k < o.slots.size(); ++k) {
          auto v = o.slots[k].variants;
          v.insert(v.end(), e.slots[k].variants.begin(), e.slots[k].variants.end());
          o.slots[k].variants = best_variants(std::move(v));
        }
        if (e.last_end < o.last_end || (e.last_end == o.last_end && e.last_start > o.last_start)) {
          o.last_start = e.last_start;
          o.last_end = e.last_end;
        }
        o.key = entry_key(o);
        visited_.insert(o.key);
        visited_.insert(e.key);
        if (on_enqueue) on_enqueue(*this, o);
        return;
      }
      if (subsumed(e, o)) return;
    }
    if (!visited_.insert(e.key).second) return;
    if (on_enqueue) on_enqueue(*this, e);
    entries_.push_back(std::move(e));
    by_partition_[part] = entries_.size() - 1;
    worklist_.push_back(entries_.size() - 1);
  }

  static bool subsumed(const WorklistEntry& e, const WorklistEntry& o) {
    if (e.last_end < o.last_end || (e.last_end == o.last_end && e.last_start > o.last_start)) return false;
    for (std::size_t k = 0; k < e.slots.size(); ++k)
      for (int v : e.slots[k].variants)
        if (std::find(o.slots[k].variants.begin(), o.slots[k].variants.end(), v) == o.slots[k].variants.end())
          return false;
    return true;
  }

  static std::string partition_key(const WorklistEntry& e) {
    std::string k;
    for (const auto& s : e.slots) {
      k += std::to_string(s.len);
      k += ',';
    }
    return k;
  }

  void expand(std::size_t idx, SynthStats& stats) {
    std::vector<SRewrite> cands;
    std::vector<SRewrite> open;
    {
      const WorklistEntry& e = entries_[idx];
      if (e.expanded) {
        cands = e.open;
        auto more = speculate(e, e.expanded_slots, e.expanded_slots - 1);
        cands.insert(cands.end(), more.begin(), more.end());
      } else {
        cands = speculate(e);
      }
    }
    stats.rewrites += cands.size();
    std::size_t before = validations_;
    auto children = validate(cands, entries_[idx], &open);
    stats.validations += validations_ - before;
    stats.accepted += children.size();
    WorklistEntry& e = entries_[idx];
    e.expanded = true;
    e.expanded_slots = static_cast<int>(e.slots.size());
    e.open = std::move(open);
    for (auto& c : children) {
      if (visited_.count(c.key)) continue;
      ++stats.enqueued;
      enqueue(std::move(c));
    }
  }

  bool generalizes_entry(const WorklistEntry& e) {
    const Slot& last = e.slots.back();
    for (int v : last.variants)
      if (predict_from(v, last.start, last.len)) return true;
    return false;
  }

  SynthResult collect(const std::vector<std::size_t>& generalizing, SynthStats stats) {
    std::vector<std::pair<Program, Action>> found;
    for (std::size_t idx : generalizing) {
      const WorklistEntry& e = entries_[idx];
      const Slot& last = e.slots.back();
      for (std::size_t v = 0; v < last.variants.size(); ++v) {
        auto a = predict_from(last.variants[v], last.start, last.len);
        if (a) found.emplace_back(program_of(e, v), *a);
      }
    }
    std::vector<std::pair<std::pair<int, std::string>, std::size_t>> order;
    for (std::size_t k = 0; k < found.size(); ++k)
      order.push_back({{program_size(found[k].first), program_key(found[k].first)}, k});
    std::sort(order.begin(), order.end());
    SynthResult res;
    res.stats = stats;
    const DomTree& look = *pi_.back();
    std::string prev;
    for (std::size_t n = 0; n < order.size(); ++n) {
      const auto& [key, k] = order[n];
      if (n && key.second == prev) continue;
      prev = key.second;
      res.programs.push_back(found[k].first);
      const Action& a = found[k].second;
      bool dup = false;
      for (const auto& p : res.predictions)
        if (actions_consistent(p.action, a, look) || p.action == a) dup = true;
      if (dup) continue;
      Prediction pr;
      pr.action = a;
      if (has_selector(a.kind)) pr.target = resolve_selector(a.selector, look);
      pr.program_key = key.second;
      res.predictions.push_back(std::move(pr));
    }
    return res;
  }

  std::string program_key(const Program& p) { return canonical_form(p); }

  std::string entry_key(const WorklistEntry& e) const {
    std::string k;
    for (const auto& s : e.slots) {
      k += std::to_string(s.len);
      for (int v : s.variants) {
        k += ',';
        k += std::to_string(v);
      }
      k += ';';
    }
    return k;
  }

  std::vector<int> best_variants(std::vector<int> ids, bool cap = true) const {
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      auto sa = sizes_[static_cast<std::size_t>(a)], sb = sizes_[static_cast<std::size_t>(b)];
      if (sa != sb) return sa < sb;
      return keys_[static_cast<std::size_t>(a)] < keys_[static_cast<std::size_t>(b)];
    });
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (cap && opt_.max_variants && ids.size() > opt_.max_variants) ids.resize(opt_.max_variants);
    return ids;
  }

  // Anti-unifiers of two slots (over all variant pairs), cached.
  const std::vector<Unifier>& unifiers(const Slot& sp, const Slot& sq) {
    static const std::vector<Unifier> none;
    std::vector<Unifier> tmp;
    for (int a : sp.variants) {
      for (int b : sq.variants) {
        auto key = std::make_tuple(a, sp.start, b, sq.start);
        auto it = au_cache_.find(key);
        if (it == au_cache_.end()) {
          auto us = anti_unify(*stmts_[static_cast<std::size_t>(a)], dom_at(sp.start),
                               *stmts_[static_cast<std::size_t>(b)], dom_at(sq.start),
                               opt_.unify_alts, opt_.max_unifiers);
          it = au_cache_.emplace(key, std::move(us)).first;
        }
        if (sp.variants.size() == 1 && sq.variants.size() == 1) return it->second;
        tmp.insert(tmp.end(), it->second.begin(), it->second.end());
      }
    }
    if (tmp.empty()) return none;
    scratch_.push_back(std::move(tmp));
    if (scratch_.size() > 64) scratch_.pop_front();
    return scratch_.back();
  }

  // Parametrized options for slot k under a unifier's first-iteration binding.
  std::vector<int> param_options(const Slot& s, const Unifier& u) {
    std::vector<int> out;
    for (int v : s.variants) {
      auto key = std::make_tuple(v, s.start, u.var);
      auto it = param_cache_.find(key);
      if (it == param_cache_.end()) {
        std::vector<StmtPtr> ps;
        const StmtPtr& st = stmts_[static_cast<std::size_t>(v)];
        if (auto* se = std::get_if<SelectorsExpr>(&u.collection)) {
          ps = parametrize(st, dom_at(s.start), u.var, se->first(), opt_.param_alts);
        } else {
          ps = parametrize(st, u.var, std::get<ValuePathsExpr>(u.collection).first());
        }
        std::vector<int> ids;
        for (auto& p : ps) ids.push_back(intern(p));
        it = param_cache_.emplace(key, best_variants(std::move(ids), false)).first;
      }
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
  }

  // Environment of a unifier's second iteration at DOM pos2, if there is one.
  std::optional<Env> second_binding(const Unifier& u, int pos2) {
    Env env;
    if (auto* se = std::get_if<SelectorsExpr>(&u.collection)) {
      Selector h = se->base;
      h.steps.push_back(Step{se->coll == Collection::Children ? Axis::Child : Axis::Descendant, se->pred, 2});
      if (!valid(h, dom_at(pos2))) return std::nullopt;
      env.selectors.emplace_back(u.var, std::move(h));
    } else {
      const auto& arr = std::get<ValuePathsExpr>(u.collection).array;
      const Json* a = lookup_value(I_, arr.steps);
      if (!a || !a->is_array() || a->size() < 2) return std::nullopt;
      ValuePath h = arr;
      h.steps.push_back(VPStep::Index(2));
      env.value_paths.emplace_back(u.var, std::move(h));
    }
    return env;
  }

  // One body statement run alone from `pos` under a fixed binding.
  Outcome run_step(int id, int pos, const Env& env, int bind) {
    auto key = std::make_tuple(id, bind, pos);
    auto it = steps_.find(key);
    if (it != steps_.end() && (!it->second.first.exhausted || it->second.second == m()))
      return it->second.first;
    Outcome o;
    Env local = env;
    Interpreter in(
        pi_, static_cast<std::size_t>(pos), A_.size(), I_,
        [&](const Action& a, std::size_t at) {
          if (!actions_consistent(a, A_[at], *pi_[at])) {
            o.mismatch = true;
            return false;
          }
          ++o.produced;
          return true;
        },
        deadline_);
    try {
      in.run(*stmts_[static_cast<std::size_t>(id)], local);
    } catch (const ExecError&) {
      o.mismatch = true;
    }
    o.exhausted = !o.mismatch && in.exhausted();
    steps_[key] = {o, m()};
    return o;
  }

  // Calls f on every choice of one option per body position whose second
  // iteration (starting at DOM pos2) agrees with the recorded actions, as far
  // as the trace goes; at most max_bodies choices.
  // With `guarded`, the last position is a while guard: an invalid guard
  // ends the loop instead of failing it.
  template <class F>
  void second_iteration_bodies(const std::vector<std::vector<int>>& opts, int pos2, const Env& env,
                               int bind, F&& f, bool guarded = false) {
    std::vector<int> body(opts.size());
    std::size_t emitted = 0, tail = 0;
    auto full = [&] { return opt_.max_bodies && emitted >= opt_.max_bodies; };
    // Once the trace has run out the remaining choices are unconstrained;
    // only the first max_variants of them (smallest options first) are kept.
    auto rest = [&](auto& self, std::size_t k) -> void {
      if (full() || (opt_.max_variants && tail >= opt_.max_variants)) return;
      if (k == opts.size()) {
        ++emitted;
        ++tail;
        f(body);
        return;
      }
      for (int o : opts[k]) {
        body[k] = o;
        self(self, k + 1);
        if (full() || (opt_.max_variants && tail >= opt_.max_variants)) return;
      }
    };
    auto dfs = [&](auto& self, std::size_t k, int pos) -> void {
      if (full()) return;
      if (k == opts.size() || pos >= m()) {
        tail = 0;
        rest(rest, k);
        return;
      }
      for (int o : opts[k]) {
        tick();
        if (guarded && k + 1 == opts.size()) {
          const Stmt& g = *stmts_[static_cast<std::size_t>(o)];
          if (!valid(eval_selector(g.sel, env), dom_at(pos))) {
            body[k] = o;
            rest(rest, k + 1);
            if (full()) return;
            continue;
          }
        }
        Outcome r = run_step(o, pos, env, bind);
        if (r.mismatch) continue;
        body[k] = o;
        if (r.exhausted) {
          rest(rest, k + 1);
        } else {
          self(self, k + 1, pos + r.produced);
        }
        if (full()) return;
      }
    };
    dfs(dfs, 0, pos2);
  }

  Program program_of_ids(const std::vector<int>& ids) const {
    Program p;
    for (int id : ids) p.push_back(stmts_[static_cast<std::size_t>(id)]);
    return p;
  }

  int make_loop(const Unifier& u, const std::vector<int>& body) {
    std::vector<int> key{0, u.var};
    key.insert(key.end(), body.begin(), body.end());
    auto it = built_.find(key);
    if (it != built_.end()) return it->second;
    StmtPtr s;
    if (auto* se = std::get_if<SelectorsExpr>(&u.collection)) {
      s = make_for_selectors(u.var, se->coll, sym(se->base), se->pred, program_of_ids(body));
    } else {
      s = make_for_value_paths(u.var, sym(std::get<ValuePathsExpr>(u.collection).array), program_of_ids(body));
    }
    int id = intern(s);
    built_.emplace(std::move(key), id);
    return id;
  }

  int make_while(const std::vector<int>& body) {
    std::vector<int> key{1};
    key.insert(key.end(), body.begin(), body.end());
    auto it = built_.find(key);
    if (it != built_.end()) return it->second;
    int id = intern(rpa::make_while(program_of_ids(body)));
    built_.emplace(std::move(key), id);
    return id;
  }

  struct VecHash {
    std::size_t operator()(const std::vector<int>& v) const {
      std::size_t h = v.size();
      for (int x : v) h = h * 1000003u ^ static_cast<std::size_t>(x);
      return h;
    }
  };

  struct TupleHash {
    std::size_t operator()(const std::tuple<int, int, int, int>& t) const {
      auto [a, b, c, d] = t;
      std::size_t h = static_cast<std::size_t>(a);
      h = h * 1000003u ^ static_cast<std::size_t>(b);
      h = h * 1000003u ^ static_cast<std::size_t>(c);
      h = h * 1000003u ^ static_cast<std::size_t>(d);
      return h;
    }
    std::size_t operator()(const std::tuple<int, int, int>& t) const {
      auto [a, b, c] = t;
      std::size_t h = static_cast<std::size_t>(a);
      h = h * 1000003u ^ static_cast<std::size_t>(b);
      h = h * 1000003u ^ static_cast<std::size_t>(c);
      return h;
    }
  };

  SynthOptions opt_;
  ActionTrace A_;
  DomTrace pi_;
  InputData I_;
  Deadline deadline_;
  unsigned ticks_ = 0;
  std::size_t validations_ = 0;

  std::vector<WorklistEntry> entries_;
  std::deque<std::size_t> worklist_;
  std::unordered_set<std::string> visited_;

  std::vector<StmtPtr> stmts_;
  std::vector<std::string> keys_;
  std::vector<int> sizes_;
  std::unordered_map<std::string, int> key_ids_;
  std::unordered_map<const Stmt*, int> ptr_ids_;
  std::vector<StmtPtr> held_;

  std::unordered_map<std::tuple<int, int, int, int>, std::vector<Unifier>, TupleHash> au_cache_;
  std::unordered_map<std::tuple<int, int, int>, std::vector<int>, TupleHash> param_cache_;
  std::unordered_map<long long, std::pair<Outcome, int>> outcomes_;
  std::unordered_map<long long, std::pair<std::optional<Action>, int>> predictions_;
  std::deque<std::vector<Unifier>> scratch_;
  std::unordered_map<std::vector<int>, int, VecHash> built_;
  std::unordered_map<std::tuple<int, int, int>, std::pair<Outcome, int>, TupleHash> steps_;
  std::unordered_map<std::string, std::size_t> by_partition_;
};

// One synthesis call. Passing the state from a previous call on a prefix of
// A resumes from its worklist; passing nullptr starts from scratch.
inline SynthResult synthesize(const ActionTrace& A, const DomTrace& pi, const InputData& I,
                              const SynthOptions& opt = {},
                              std::shared_ptr<SynthState>* state = nullptr) {
  std::shared_ptr<SynthState> st;
  if (state && *state) st = *state;
  if (!st) st = std::make_shared<SynthState>(opt);
  auto r = st->run(A, pi, I);
  if (state) *state = st;
  return r;
}

}  // namespace rpa
