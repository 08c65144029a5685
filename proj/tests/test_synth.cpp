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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "rpa/harness.hpp"
#include "rpa/synth.hpp"
#include "test_util.hpp"

namespace rpa {
namespace {

using build::el;
using build::page;
using build::prog;
using build::tx;

struct Prefix {
  ActionTrace A;
  DomTrace pi;
};

Prefix prefix(const Recording& r, std::size_t k) {
  return {ActionTrace(r.actions.begin(), r.actions.begin() + static_cast<std::ptrdiff_t>(k)),
          DomTrace(r.doms.begin(), r.doms.begin() + static_cast<std::ptrdiff_t>(k + 1))};
}

Recording record(const Fixture& f, bool absolute = true) {
  return record_ground_truth(f.program, f.site, f.input, f.cap, nullptr, absolute);
}

Recording example_trace() { return record(fixture_paginated(7, {20, 20, 9}, "example-5-1", 59), false); }

DomPtr anchors(int n) {
  std::vector<DomNode> kids;
  for (int i = 0; i < n; ++i) kids.push_back(el("a", {}, {tx("b", {}, std::to_string(i))}));
  return make_dom(page(kids));
}

Program inner_loop() {
  return prog(R"([{"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"a"},
    "body":[{"kind":"ScrapeText","selector":"r1"},{"kind":"ScrapeText","selector":"r1/b[1]"}]}])");
}

bool has_alpha(const std::vector<Program>& ps, const Program& want) {
  return std::any_of(ps.begin(), ps.end(), [&](const Program& p) { return alpha_equivalent(p, want); });
}

TEST(Synthesize, StoreLocatorSixActions) {
  auto f = fixture_store_locator(8);
  auto rec = record(f);
  auto [A, pi] = prefix(rec, 6);
  auto res = synthesize(A, pi, rec.input);
  ASSERT_FALSE(res.programs.empty());
  const Program& top = res.programs.front();
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[2]->kind, StmtKind::ForSelectors);
  bool predicted = false;
  for (const auto& p : res.predictions) predicted = predicted || actions_consistent(p.action, rec.actions[6], *rec.doms[6]);
  EXPECT_TRUE(predicted);
  EXPECT_EQ(rec.actions[6].kind, ActionKind::ScrapeText);
}

TEST(Synthesize, PaginatedTraceYieldsWhileForeach) {
  auto rec = example_trace();
  ASSERT_EQ(rec.actions.size(), 59u);
  auto res = synthesize(rec.actions, rec.doms, rec.input);
  EXPECT_FALSE(res.stats.timed_out);
  EXPECT_TRUE(has_alpha(res.programs, fixture_paginated(7).program));
}

TEST(Synthesize, SingleActionHasNoPrediction) {
  auto rec = example_trace();
  auto [A, pi] = prefix(rec, 1);
  auto res = synthesize(A, pi, rec.input);
  EXPECT_TRUE(res.programs.empty());
  EXPECT_TRUE(res.predictions.empty());
}

TEST(Synthesize, ShapeAndStateErrors) {
  auto rec = example_trace();
  auto [A, pi] = prefix(rec, 5);
  EXPECT_THROW(synthesize({}, {pi[0]}, rec.input), std::invalid_argument);
  EXPECT_THROW(synthesize(A, DomTrace(pi.begin(), pi.end() - 1), rec.input), std::invalid_argument);
  std::shared_ptr<SynthState> st;
  synthesize(A, pi, rec.input, {}, &st);
  auto other = record(fixture_list_scrape(2));
  auto [B, pb] = prefix(other, 6);
  EXPECT_THROW(synthesize(B, pb, other.input, {}, &st), std::invalid_argument);
}

TEST(Synthesize, EveryResultSatisfiesTheTrace) {
  for (const auto& f : generate_fixture_suite(9)) {
    if (f.name == "example-5-1") continue;
    auto rec = record(f);
    std::shared_ptr<SynthState> st;
    for (std::size_t k = 1; k < rec.actions.size(); ++k) {
      auto [A, pi] = prefix(rec, k);
      auto res = synthesize(A, pi, rec.input, {}, &st);
      for (const auto& p : res.programs) {
        ASSERT_TRUE(satisfies(p, A, pi, rec.input)) << f.name << " k=" << k << "\n" << pretty(p);
        ASSERT_TRUE(generalizes(p, A, pi, rec.input)) << f.name << " k=" << k << "\n" << pretty(p);
      }
    }
  }
}

TEST(Synthesize, IncrementalAgreesWithScratch) {
  for (const auto& f : {fixture_list_scrape(4), fixture_form_entry(4), fixture_go_back(4)}) {
    auto rec = record(f);
    std::shared_ptr<SynthState> st;
    for (std::size_t k = 1; k < rec.actions.size(); ++k) {
      auto [A, pi] = prefix(rec, k);
      auto inc = synthesize(A, pi, rec.input, {}, &st);
      auto fresh = synthesize(A, pi, rec.input);
      ASSERT_EQ(inc.predictions.empty(), fresh.predictions.empty()) << f.name << " k=" << k;
      if (!fresh.predictions.empty())
        EXPECT_TRUE(actions_consistent(inc.predictions.front().action, fresh.predictions.front().action, *pi.back()))
            << f.name << " k=" << k;
    }
  }
}

TEST(Speculate, InnerLoopFromFirstTwoItems) {
  auto rec = example_trace();
  SynthState st;
  st.load(rec.actions, rec.doms, rec.input);
  const WorklistEntry& p0 = st.entries().front();
  ASSERT_EQ(p0.slots.size(), 59u);
  auto rws = st.speculate(p0);
  std::vector<SRewrite> hit;
  for (const auto& rw : rws)
    if (rw.i == 0 && rw.j == 1 && alpha_equivalent(Program{st.stmt(rw.loop)}, inner_loop())) hit.push_back(rw);
  ASSERT_EQ(hit.size(), 1u);
  auto children = st.validate(hit, p0);
  ASSERT_EQ(children.size(), 1u);
  const auto& c = children.front();
  EXPECT_EQ(c.slots.front().start, 0);
  EXPECT_EQ(c.slots.front().len, 40);
  EXPECT_EQ(c.slots.size(), 59u - 40 + 1);
  EXPECT_EQ(st.check_entry(c), "");
}

TEST(Speculate, WhileFromRepeatedClick) {
  auto rec = record(fixture_paginated(1, {2, 2, 1}), false);
  ASSERT_EQ(rec.actions.size(), 12u);
  ASSERT_EQ(rec.actions[4], rec.actions[9]);
  SynthState st;
  st.load(rec.actions, rec.doms, rec.input);
  const WorklistEntry& p0 = st.entries().front();
  bool found = false;
  for (const auto& rw : st.speculate(p0)) {
    const Stmt& s = *st.stmt(rw.loop);
    if (s.kind != StmtKind::While || rw.i != 0 || rw.j != 4) continue;
    found = found || (s.body.size() == 5 && canonical_form(*s.body.back()) == canonical_form(*make_action_stmt(rec.actions[4])));
  }
  EXPECT_TRUE(found);
}

TEST(Validate, WhileOverThreePagesCoversEverything) {
  auto f = fixture_paginated(1, {2, 2, 1});
  auto rec = record(f, false);
  SynthState st;
  st.load(rec.actions, rec.doms, rec.input);
  const StmtPtr& wh = f.program.front();
  StmtPtr loop = wh->body[0], click = wh->body[1];
  WorklistEntry e;
  e.slots = {Slot{0, 4, {st.intern(loop)}}, Slot{4, 1, {st.intern(click)}}, Slot{5, 4, {st.intern(loop)}},
             Slot{9, 1, {st.intern(click)}}, Slot{10, 2, {st.intern(loop)}}};
  ASSERT_EQ(st.check_entry(e), "");
  auto children = st.validate({SRewrite{st.intern(make_while({loop, click})), 0, 1}}, e);
  ASSERT_EQ(children.size(), 1u);
  ASSERT_EQ(children[0].slots.size(), 1u);
  EXPECT_EQ(children[0].slots[0].len, 12);
}

TEST(Validate, RejectsLoopWithoutSecondIteration) {
  // only one `a` on the second DOM: the speculated second iteration cannot start
  DomTrace pi{anchors(2), anchors(1), anchors(1)};
  ActionTrace A{Action{ActionKind::ScrapeText, parse_selector("//a[1]"), {}, {}},
                Action{ActionKind::ScrapeText, parse_selector("//a[2]"), {}, {}}};
  SynthState st;
  st.load(A, pi, Json::object());
  VarId v = fresh_var();
  auto loop = make_for_selectors(v, Collection::Dscts, SymSelector{}, Predicate{"a", std::nullopt},
                                 {make_atomic(ActionKind::ScrapeText, SymSelector{v, {}})});
  EXPECT_TRUE(st.validate({SRewrite{st.intern(loop), 0, 0}}, st.entries().front()).empty());
}

TEST(Speculate, NothingForUnrelatedActions) {
  auto d = anchors(1);
  ActionTrace A{Action{ActionKind::GoBack, {}, {}, {}}, Action{ActionKind::ExtractURL, {}, {}, {}}};
  SynthState st;
  st.load(A, {d, d, d}, Json::object());
  EXPECT_TRUE(st.speculate(st.entries().front()).empty());
}

TEST(AntiUnify, TwoAnchorScrapes) {
  auto d = anchors(3);
  auto s1 = make_action_stmt(Action{ActionKind::ScrapeText, parse_selector("//a[1]"), {}, {}});
  auto s2 = make_action_stmt(Action{ActionKind::ScrapeText, parse_selector("//a[2]"), {}, {}});
  bool found = false;
  for (const auto& u : anti_unify(*s1, *d, *s2, *d)) {
    auto* c = std::get_if<SelectorsExpr>(&u.collection);
    ASSERT_TRUE(c);
    EXPECT_EQ(u.stmt->sel.var, u.var);
    if (c->coll == Collection::Dscts && c->base.is_root() && c->pred == Predicate{"a", std::nullopt} &&
        u.stmt->sel.steps.empty())
      found = true;
  }
  EXPECT_TRUE(found);
}

TEST(AntiUnify, EnterDataOverRows) {
  auto d = anchors(1);
  auto sel = parse_selector("//input[1]");
  auto s1 = make_action_stmt(Action{ActionKind::EnterData, sel, {}, parse_value_path("x['rows'][1]['name']")});
  auto s2 = make_action_stmt(Action{ActionKind::EnterData, sel, {}, parse_value_path("x['rows'][2]['name']")});
  auto us = anti_unify(*s1, *d, *s2, *d);
  ASSERT_EQ(us.size(), 1u);
  auto* c = std::get_if<ValuePathsExpr>(&us[0].collection);
  ASSERT_TRUE(c);
  EXPECT_EQ(to_string(c->array), "x['rows']");
  EXPECT_EQ(us[0].stmt->vp.var, us[0].var);
  EXPECT_EQ(us[0].stmt->vp.steps, (VPSteps{VPStep::Key("name")}));
  auto s3 = make_action_stmt(Action{ActionKind::EnterData, sel, {}, parse_value_path("x['rows'][3]['name']")});
  EXPECT_TRUE(anti_unify(*s1, *d, *s3, *d).empty());
}

TEST(AntiUnify, NoParameterNoUnifier) {
  auto d = anchors(1);
  auto g = make_atomic(ActionKind::GoBack);
  EXPECT_TRUE(anti_unify(*g, *d, *g, *d).empty());
  auto a = make_action_stmt(Action{ActionKind::Click, parse_selector("//a[1]"), {}, {}});
  auto b = make_action_stmt(Action{ActionKind::ScrapeText, parse_selector("//a[2]"), {}, {}});
  EXPECT_TRUE(anti_unify(*a, *d, *b, *d).empty());
}

TEST(AntiUnify, LoopsWithEquivalentBodiesUnifyBases) {
  auto d = make_dom(page({el("ul", {}, {el("li"), el("li")}), el("ul", {}, {el("li")})}));
  auto loop = [](const char* base) {
    VarId v = fresh_var();
    return make_for_selectors(v, Collection::Children, sym(parse_selector(base)), Predicate{"li", std::nullopt},
                              {make_atomic(ActionKind::ScrapeText, SymSelector{v, {}})});
  };
  auto us = anti_unify(*loop("/html[1]/body[1]/ul[1]"), *d, *loop("/html[1]/body[1]/ul[2]"), *d);
  bool found = false;
  for (const auto& u : us) {
    auto& c = std::get<SelectorsExpr>(u.collection);
    EXPECT_EQ(u.stmt->base.var, u.var);
    found = found || (c.coll == Collection::Children && to_string(c.base) == "/html[1]/body[1]" &&
                      c.pred.tag == "ul" && u.stmt->base.steps.empty());
  }
  EXPECT_TRUE(found);
}

TEST(Parametrize, RelativeToBinding) {
  auto d = anchors(3);
  VarId v = fresh_var();
  auto s = make_action_stmt(Action{ActionKind::ScrapeText, parse_selector("//a[1]/b[1]"), {}, {}});
  auto out = parametrize(s, *d, v, parse_selector("//a[1]"));
  EXPECT_EQ(out.front(), s);
  bool found = false;
  for (const auto& o : out) found = found || (o->sel.var == v && steps_to_string(o->sel.steps) == "/b[1]");
  EXPECT_TRUE(found);

  auto c = make_action_stmt(Action{ActionKind::Click, parse_selector("//c[1]"), {}, {}});
  auto dc = make_dom(page({el("a"), el("c")}));
  auto oc = parametrize(c, *dc, v, parse_selector("//a[1]"));
  ASSERT_EQ(oc.size(), 1u);
  EXPECT_EQ(canonical_form(*oc.front()), canonical_form(*c));
}

TEST(Parametrize, ValuePathPrefix) {
  VarId v = fresh_var();
  auto s = make_action_stmt(
      Action{ActionKind::EnterData, parse_selector("//input[1]"), {}, parse_value_path("x['rows'][1]['name']")});
  auto out = parametrize(s, v, parse_value_path("x['rows'][1]"));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1]->vp.var, v);
  EXPECT_EQ(out[1]->vp.steps, (VPSteps{VPStep::Key("name")}));
  EXPECT_EQ(parametrize(s, v, parse_value_path("x['rows'][2]")).size(), 1u);
}

// Substituting the binding back must give a selector for the same node.
TEST(Parametrize, SubstitutionIsSound) {
  auto f = fixture_store_locator(3);
  const DomTree& t = *f.site->pages.at("results");
  std::mt19937 rng(53);
  int checked = 0;
  for (int round = 0; round < 200; ++round) {
    NodeId bn = static_cast<NodeId>(rng() % t.size());
    NodeId tn = static_cast<NodeId>(rng() % t.size());
    if (rng() % 2) {  // bias towards descendants, where rewriting applies
      if (t.subtree_end(bn) - bn <= 1) continue;
      tn = bn + 1 + static_cast<NodeId>(rng() % static_cast<unsigned>(t.subtree_end(bn) - bn - 1));
    }
    auto balts = alternative_selectors(absolute_selector_of(bn, t), t);
    Selector binding = balts[rng() % balts.size()];
    auto s = make_action_stmt(Action{ActionKind::ScrapeText, absolute_selector_of(tn, t), {}, {}});
    VarId v = fresh_var();
    for (const auto& o : parametrize(s, t, v, binding)) {
      Selector back = o->sel.var == v ? binding : Selector{};
      if (o->sel.var != v) ASSERT_EQ(o->sel.var, 0);
      back.steps.insert(back.steps.end(), o->sel.steps.begin(), o->sel.steps.end());
      EXPECT_EQ(resolve_selector(back, t), tn) << to_string(back);
      ++checked;
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(Rank, SmallerFirstThenCanonical) {
  auto small = prog(R"([{"kind":"Click","selector":"//a[1]"}])");
  auto big = prog(R"([{"kind":"Click","selector":"//a[1]/b[1]"}])");
  auto r = rank({big, small});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], small);
  EXPECT_EQ(r[1], big);
  auto x = prog(R"([{"kind":"Click","selector":"//b[1]"}])");
  auto y = prog(R"([{"kind":"Click","selector":"//a[2]"}])");
  auto ordered = rank({x, y});
  EXPECT_LT(canonical_form(ordered[0]), canonical_form(ordered[1]));
}

TEST(Rank, IsAPermutation) {
  std::mt19937 rng(59);
  for (int round = 0; round < 50; ++round) {
    std::vector<Program> ps;
    int n = static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k) ps.push_back(testing::random_program(rng, 2));
    if (n > 2) ps.push_back(ps[0]);
    auto r = rank(ps);
    ASSERT_EQ(r.size(), ps.size());
    std::multiset<const Stmt*> a, b;
    for (const auto& p : ps) a.insert(p.front().get());
    for (const auto& p : r) b.insert(p.front().get());
    EXPECT_EQ(a, b);
    for (std::size_t k = 1; k < r.size(); ++k) {
      auto ka = std::make_pair(program_size(r[k - 1]), canonical_form(r[k - 1]));
      auto kb = std::make_pair(program_size(r[k]), canonical_form(r[k]));
      EXPECT_LE(ka, kb);
    }
  }
}

TEST(Invariants, EveryEnqueuedEntryPartitionsAndReproduces) {
  for (const auto& f : generate_fixture_suite(12)) {
    if (f.name == "example-5-1") continue;
    auto rec = record(f);
    auto st = std::make_shared<SynthState>();
    int seen = 0;
    std::string first_error;
    st->on_enqueue = [&](const SynthState& s, const WorklistEntry& e) {
      ++seen;
      auto err = s.check_entry(e);
      if (!err.empty() && first_error.empty()) first_error = err;
    };
    std::size_t shrinking = 0, rewrites = 0;
    st->on_rewrite = [&](std::size_t before, std::size_t after) {
      ++rewrites;
      if (after < before) ++shrinking;
    };
    for (std::size_t k = 1; k < rec.actions.size(); ++k) {
      auto [A, pi] = prefix(rec, k);
      synthesize(A, pi, rec.input, {}, &st);
    }
    EXPECT_GT(seen, 0) << f.name;
    EXPECT_EQ(first_error, "") << f.name;
    EXPECT_GT(rewrites, 0u) << f.name;
    EXPECT_EQ(shrinking, rewrites) << f.name;
  }
}

TEST(Invariants, CheckedModeRunsClean) {
  SynthOptions opt;
  opt.check_invariants = true;
  auto rec = record(fixture_three_level(2));
  auto [A, pi] = prefix(rec, 12);
  EXPECT_NO_THROW(synthesize(A, pi, rec.input, opt));
}

TEST(Invariants, CheckEntryReportsBrokenEntries) {
  auto rec = example_trace();
  SynthState st;
  st.load(rec.actions, rec.doms, rec.input);
  WorklistEntry e = st.entries().front();
  EXPECT_EQ(st.check_entry(e), "");
  std::swap(e.slots[0].variants, e.slots[2].variants);
  EXPECT_NE(st.check_entry(e), "");
  e = st.entries().front();
  e.slots.pop_back();
  EXPECT_NE(st.check_entry(e), "");
}

}  // namespace
}  // namespace rpa
