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

// Simulated execution of programs over a DOM trace, and the
// consistency / satisfaction / generalization checks built on it.

#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpa/dom.hpp"
#include "rpa/lang.hpp"

namespace rpa {

using Clock = std::chrono::steady_clock;

struct Deadline {
  Clock::time_point at = Clock::time_point::max();
  static Deadline in(std::chrono::milliseconds ms) { return Deadline{Clock::now() + ms}; }
  static Deadline never() { return Deadline{}; }
  bool passed() const { return at != Clock::time_point::max() && Clock::now() >= at; }
};

struct ExecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Timeout : std::runtime_error {
  Timeout() : std::runtime_error("deadline exceeded") {}
};

// Variable bindings. Extension is functional: `with` returns a new Env.
struct Env {
  std::vector<std::pair<VarId, Selector>> selectors;
  std::vector<std::pair<VarId, ValuePath>> value_paths;

  const Selector& selector(VarId v) const {
    for (auto it = selectors.rbegin(); it != selectors.rend(); ++it)
      if (it->first == v) return it->second;
    throw ExecError("unbound selector variable " + std::to_string(v));
  }
  const ValuePath& value_path(VarId v) const {
    for (auto it = value_paths.rbegin(); it != value_paths.rend(); ++it)
      if (it->first == v) return it->second;
    throw ExecError("unbound value-path variable " + std::to_string(v));
  }
  Env with(VarId v, Selector s) const {
    Env e = *this;
    e.selectors.emplace_back(v, std::move(s));
    return e;
  }
  Env with(VarId v, ValuePath p) const {
    Env e = *this;
    e.value_paths.emplace_back(v, std::move(p));
    return e;
  }
};

inline Selector eval_selector(const SymSelector& n, const Env& env) {
  if (n.var == 0) return Selector{n.steps};
  Selector s = env.selector(n.var);
  s.steps.insert(s.steps.end(), n.steps.begin(), n.steps.end());
  return s;
}

inline ValuePath eval_value_path(const SymValuePath& v, const Env& env) {
  if (v.var == 0) return ValuePath{v.steps};
  ValuePath p = env.value_path(v.var);
  p.steps.insert(p.steps.end(), v.steps.begin(), v.steps.end());
  return p;
}

// Rule-coverage counters, filled when a Coverage is attached to a run.
struct Coverage {
  int s_init = 0, s_cont = 0, s_term = 0;
  int vp_loop = 0;
  int while_init = 0, while_cont = 0, while_term = 0;
};

// Core interpreter over the DOM window [pos, end) of a trace. `emit` sees each
// produced action with the index of the DOM it consumed; returning false
// aborts the run.
class Interpreter {
 public:
  using Emit = std::function<bool(const Action&, std::size_t dom_index)>;

  Interpreter(const DomTrace& pi, std::size_t begin, std::size_t end, const InputData& data,
              Emit emit, Deadline deadline = Deadline::never())
      : pi_(pi), pos_(begin), end_(end), data_(data), emit_(std::move(emit)), deadline_(deadline) {}
  // the interpreter keeps references to its trace and data
  Interpreter(const DomTrace&, std::size_t, std::size_t, InputData&&, Emit, Deadline = Deadline::never()) = delete;

  // Returns false if the observer aborted the run.
  bool run(const Program& p, Env& env) {
    try {
      exec(p, env);
    } catch (const Abort&) {
      return false;
    }
    return true;
  }
  bool run(const Stmt& s, Env& env) {
    try {
      exec(s, env);
    } catch (const Abort&) {
      return false;
    }
    return true;
  }

  std::size_t position() const { return pos_; }
  bool exhausted() const { return pos_ >= end_; }
  void set_coverage(Coverage* c) { cov_ = c; }
  // Called at the start of every loop iteration (1-based) with the index of
  // the DOM the iteration starts on.
  void on_iteration(std::function<void(const Stmt&, int, std::size_t)> f) { iter_ = std::move(f); }

 private:
  struct Abort {};

  void tick() {
    if ((++ticks_ & 63) == 0 && deadline_.passed()) throw Timeout();
  }

  void emit(Action a) {
    std::size_t at = pos_++;
    if (!emit_(a, at)) throw Abort{};
  }

  void exec(const Program& p, Env& env) {
    for (const auto& s : p) {
      if (exhausted()) return;  // Term
      tick();
      exec(*s, env);
    }
  }

  void exec(const Stmt& s, Env& env) {
    if (exhausted()) return;
    switch (s.kind) {
      case StmtKind::Atomic: {
        Action a;
        a.kind = s.action;
        if (has_selector(s.action)) a.selector = eval_selector(s.sel, env);
        if (s.action == ActionKind::SendKeys) a.text = s.text;
        if (s.action == ActionKind::EnterData) a.value_path = eval_value_path(s.vp, env);
        emit(std::move(a));
        return;
      }
      case StmtKind::ForSelectors: {
        if (cov_) ++cov_->s_init;
        for (int i = 1;; ++i) {
          if (exhausted()) return;
          tick();
          Selector head = eval_selector(s.base, env);
          head.steps.push_back(Step{s.coll == Collection::Children ? Axis::Child : Axis::Descendant,
                                    s.pred, i});
          if (!valid(head, *pi_[pos_])) {
            if (cov_) ++cov_->s_term;
            return;
          }
          if (cov_) ++cov_->s_cont;
          if (iter_) iter_(s, i, pos_);
          env.selectors.emplace_back(s.var, std::move(head));
          exec(s.body, env);
          env.selectors.pop_back();
        }
      }
      case StmtKind::ForValuePaths: {
        ValuePath base = eval_value_path(s.array, env);
        const Json* arr = lookup_value(data_, base.steps);
        if (!arr || !arr->is_array())
          throw ExecError("value path " + to_string(base) + " does not denote an array");
        if (cov_) ++cov_->vp_loop;
        for (std::size_t i = 1; i <= arr->size(); ++i) {
          if (exhausted()) return;
          ValuePath th = base;
          th.steps.push_back(VPStep::Index(static_cast<int>(i)));
          if (iter_) iter_(s, static_cast<int>(i), pos_);
          env.value_paths.emplace_back(s.var, std::move(th));
          exec(s.body, env);
          env.value_paths.pop_back();
        }
        return;
      }
      case StmtKind::While: {
        if (cov_) ++cov_->while_init;
        const Stmt& guard = *s.body.back();
        for (int round = 1;; ++round) {
          if (iter_) iter_(s, round, pos_);
          for (std::size_t k = 0; k + 1 < s.body.size(); ++k) {
            if (exhausted()) return;
            tick();
            exec(*s.body[k], env);
          }
          if (exhausted()) return;
          Selector n = eval_selector(guard.sel, env);
          if (!valid(n, *pi_[pos_])) {
            if (cov_) ++cov_->while_term;
            return;
          }
          if (cov_) ++cov_->while_cont;
          Action a;
          a.kind = ActionKind::Click;
          a.selector = std::move(n);
          emit(std::move(a));
        }
      }
    }
  }

  const DomTrace& pi_;
  std::size_t pos_;
  std::size_t end_;
  const InputData& data_;
  Emit emit_;
  Deadline deadline_;
  Coverage* cov_ = nullptr;
  std::function<void(const Stmt&, int, std::size_t)> iter_;
  unsigned ticks_ = 0;
};

struct ExecResult {
  ActionTrace actions;
  DomTrace remaining;
  Env env;
};

inline ExecResult execute(const Program& p, const DomTrace& pi, const InputData& data,
                          Deadline deadline = Deadline::never(), Coverage* cov = nullptr) {
  ExecResult r;
  Interpreter in(
      pi, 0, pi.size(), data,
      [&](const Action& a, std::size_t) {
        r.actions.push_back(a);
        return true;
      },
      deadline);
  in.set_coverage(cov);
  in.run(p, r.env);
  r.remaining.assign(pi.begin() + static_cast<std::ptrdiff_t>(in.position()), pi.end());
  return r;
}

// ---------------------------------------------------------------------------
// Consistency

inline bool actions_consistent(const Action& a, const Action& b, const DomTree& pi) {
  if (a.kind != b.kind) return false;
  if (a.kind == ActionKind::SendKeys && a.text != b.text) return false;
  if (a.kind == ActionKind::EnterData && !(a.value_path == b.value_path)) return false;
  if (!has_selector(a.kind)) return true;
  if (a.selector == b.selector) return valid(a.selector, pi);
  auto na = resolve_selector(a.selector, pi);
  if (!na) return false;
  auto nb = resolve_selector(b.selector, pi);
  return nb && *na == *nb;
}

inline bool trace_consistent(const ActionTrace& a, const ActionTrace& b, const DomTrace& pi) {
  if (a.size() != b.size()) throw std::invalid_argument("traces differ in length");
  if (pi.size() < a.size()) throw std::invalid_argument("DOM trace shorter than action traces");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!actions_consistent(a[i], b[i], *pi[i])) return false;
  return true;
}

namespace detail {

// Runs p on pi and checks the first |A| actions against A, stopping at the
// first mismatch or once `extra` further actions have been produced.
struct CheckRun {
  bool consistent = true;
  std::size_t produced = 0;
  std::optional<Action> next;  // action |A|+1, if produced
};

inline CheckRun check_run(const Program& p, const ActionTrace& A, const DomTrace& pi,
                          const InputData& data, Deadline deadline) {
  CheckRun r;
  Env env;
  Interpreter in(
      pi, 0, pi.size(), data,
      [&](const Action& a, std::size_t at) {
        ++r.produced;
        if (at < A.size()) {
          if (!actions_consistent(a, A[at], *pi[at])) {
            r.consistent = false;
            return false;
          }
          return true;
        }
        r.next = a;
        return false;
      },
      deadline);
  try {
    in.run(p, env);
  } catch (const ExecError&) {
    r.consistent = false;
  }
  return r;
}

}  // namespace detail

inline bool satisfies(const Program& p, const ActionTrace& A, const DomTrace& pi,
                      const InputData& data, Deadline deadline = Deadline::never()) {
  if (pi.size() < A.size()) throw std::invalid_argument("DOM trace shorter than action trace");
  auto r = detail::check_run(p, A, pi, data, deadline);
  return r.consistent && r.produced >= A.size();
}

struct Prediction {
  Action action;
  std::optional<NodeId> target;  // node on pi_{m+1}, for selector actions
  std::string program_key;
};

inline std::optional<Prediction> generalizes(const Program& p, const ActionTrace& A,
                                             const DomTrace& pi, const InputData& data,
                                             Deadline deadline = Deadline::never()) {
  if (pi.size() != A.size() + 1) throw std::invalid_argument("generalizes needs |pi| = |A| + 1");
  auto r = detail::check_run(p, A, pi, data, deadline);
  if (!r.consistent || !r.next) return std::nullopt;
  Prediction pr;
  pr.action = *r.next;
  if (has_selector(pr.action.kind)) pr.target = resolve_selector(pr.action.selector, *pi.back());
  pr.program_key = canonical_form(p);
  return pr;
}

}  // namespace rpa
