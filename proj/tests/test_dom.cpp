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

#include <random>
#include <set>

#include "rpa/dom.hpp"
#include "rpa/harness.hpp"
#include "test_util.hpp"

namespace rpa {
namespace {

using build::el;
using build::page;
using build::tx;

DomPtr three_divs() {
  return make_dom(page({el("div", {{"class", "a"}}, {el("div", {{"class", "a"}})}), el("p"),
                        el("div", {{"class", "a"}}), el("div", {{"class", "b"}})}));
}

// Strict descendants of n in document order, by walking children lists.
void preorder(const DomTree& t, NodeId n, std::vector<NodeId>& out) {
  for (NodeId c : t.children(n)) {
    out.push_back(c);
    preorder(t, c, out);
  }
}

std::optional<NodeId> oracle_step(const DomTree& t, NodeId at, const Step& s) {
  std::vector<NodeId> cands;
  if (s.axis == Axis::Child) cands = t.children(at);
  else preorder(t, at, cands);
  int seen = 0;
  for (NodeId c : cands) {
    if (t.tag(c) != s.pred.tag) continue;
    if (s.pred.attr) {
      auto v = t.attr(c, s.pred.attr->first);
      if (!v || *v != s.pred.attr->second) continue;
    }
    if (++seen == s.index) return c;
  }
  return std::nullopt;
}

TEST(Resolve, EmptySelectorIsRoot) {
  auto t = three_divs();
  EXPECT_EQ(resolve_selector(Selector{}, *t), t->root());
}

TEST(Resolve, DescendantIndexCountsInPreorder) {
  auto t = three_divs();
  auto n = resolve_selector(parse_selector("//div[@class='a'][2]"), *t);
  ASSERT_TRUE(n);
  // the nested div comes right after its parent in preorder
  EXPECT_EQ(t->parent(*n), *resolve_selector(parse_selector("//div[@class='a'][1]"), *t));
}

TEST(Resolve, IndexOutOfRangeIsAbsent) {
  auto t = make_dom(page({el("div"), el("div")}));
  EXPECT_FALSE(resolve_selector(parse_selector("/html[1]/body[1]/div[3]"), *t));
  EXPECT_TRUE(resolve_selector(parse_selector("/html[1]/body[1]/div[2]"), *t));
}

TEST(Resolve, MatchesLinearScanOnRandomTrees) {
  std::mt19937 rng(11);
  for (int round = 0; round < 200; ++round) {
    DomTree t(testing::random_tree(rng, 40));
    Selector s = testing::random_selector(rng);
    std::optional<NodeId> want = t.root();
    for (const auto& st : s.steps) {
      if (!want) break;
      want = oracle_step(t, *want, st);
    }
    EXPECT_EQ(resolve_selector(s, t), want) << to_string(s);
  }
}

TEST(Selector, ParsePrintRoundTrip) {
  for (const char* s : {"", "//a[1]", "/html[1]/body[1]/a[2]", "//div[@class='locatorPhone'][3]/span[1]",
                        "//input[@id='zip'][1]"})
    EXPECT_EQ(to_string(parse_selector(s)), s);
}

TEST(Selector, ParseErrorCarriesOffset) {
  try {
    parse_selector("//a[1]/b[x]");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.pos, 9u);
  }
  EXPECT_THROW(parse_selector("//a[0]"), ParseError);
  EXPECT_THROW(parse_selector("a[1]"), ParseError);
}

TEST(Absolute, RootIsEmpty) {
  auto t = three_divs();
  EXPECT_TRUE(absolute_selector_of(t->root(), *t).is_root());
}

TEST(Absolute, SecondAnchorUnderBody) {
  auto t = make_dom(page({el("a"), el("div"), el("a")}));
  // oracle: walk body's children and pick the second `a`
  NodeId body = *resolve_selector(parse_selector("/html[1]/body[1]"), *t);
  NodeId second = -1;
  int seen = 0;
  for (NodeId c : t->children(body))
    if (t->tag(c) == "a" && ++seen == 2) second = c;
  EXPECT_EQ(to_string(absolute_selector_of(second, *t)), "/html[1]/body[1]/a[2]");
}

TEST(Absolute, RoundTripOnRandomTrees) {
  std::mt19937 rng(5);
  for (int round = 0; round < 50; ++round) {
    DomTree t(testing::random_tree(rng, 60));
    for (NodeId n = 0; n < static_cast<NodeId>(t.size()); ++n) {
      auto s = absolute_selector_of(n, t);
      for (const auto& st : s.steps) EXPECT_EQ(st.axis, Axis::Child);
      EXPECT_EQ(resolve_selector(s, t), n);
    }
  }
  DomTree t(testing::random_tree(rng, 5));
  EXPECT_THROW(absolute_selector_of(static_cast<NodeId>(t.size()), t), std::out_of_range);
}

TEST(Alternatives, ContainIdentityAndResolveToSameNode) {
  std::mt19937 rng(3);
  for (int round = 0; round < 50; ++round) {
    DomTree t(testing::random_tree(rng, 50));
    for (NodeId n = 0; n < static_cast<NodeId>(t.size()); ++n) {
      auto s = absolute_selector_of(n, t);
      auto alts = alternative_selectors(s, t, AltOptions{0, 2, true, false});
      ASSERT_FALSE(alts.empty());
      EXPECT_EQ(alts.front(), s);
      for (const auto& a : alts) EXPECT_EQ(resolve_selector(a, t), n) << to_string(a);
    }
  }
}

TEST(Alternatives, CapKeepsIdentityPlusFive) {
  auto f = fixture_store_locator(2);
  const auto& t = *f.site->pages.at("results");
  auto deep = parse_selector("/html[1]/body[1]/div[2]/div[3]/div[2]");
  EXPECT_LE(alternative_selectors(deep, t).size(), 6u);
  AltOptions off;
  off.enabled = false;
  EXPECT_EQ(alternative_selectors(deep, t, off).size(), 1u);
  EXPECT_THROW(alternative_selectors(parse_selector("//table[1]"), t), std::invalid_argument);
}

TEST(Alternatives, StoreLocatorPhoneByClass) {
  auto f = fixture_store_locator(2);
  const auto& t = *f.site->pages.at("results");
  Predicate phone{"div", std::make_pair(std::string("class"), std::string("locatorPhone"))};
  int k = 0;
  for (NodeId n = 0; n < static_cast<NodeId>(t.size()); ++n) {
    if (!phone.matches(t, n)) continue;
    ++k;
    auto alts = alternative_selectors(absolute_selector_of(n, t), t);
    std::string want = "//div[@class='locatorPhone'][" + std::to_string(k) + "]";
    bool found = false;
    for (const auto& a : alts) found = found || to_string(a) == want;
    EXPECT_TRUE(found) << want;
  }
  EXPECT_EQ(k, 5);
}

// Independent enumeration: every way to replace one or two disjoint step
// ranges (j,k] by //pred[rank under w_j], pred over w_k's tag and attributes.
std::set<std::string> brute_alternatives(const Selector& s, const DomTree& t) {
  std::vector<NodeId> w{t.root()};
  for (const auto& st : s.steps) w.push_back(*oracle_step(t, w.back(), st));
  const int L = static_cast<int>(s.steps.size());
  auto jumps_for = [&](int j, int k) {
    std::vector<Step> out;
    std::vector<Predicate> preds{Predicate{t.tag(w[k]), std::nullopt}};
    for (const auto& kv : t.attrs(w[k])) preds.push_back(Predicate{t.tag(w[k]), kv});
    std::vector<NodeId> below;
    preorder(t, w[j], below);
    for (const auto& p : preds) {
      int r = 0;
      for (NodeId c : below) {
        if (p.matches(t, c)) ++r;
        if (c == w[k]) break;
      }
      out.push_back(Step{Axis::Descendant, p, r});
    }
    return out;
  };
  auto piece = [&](int from, int to) { return Steps(s.steps.begin() + from, s.steps.begin() + to); };
  std::set<std::string> out{to_string(s)};
  for (int j = 0; j < L; ++j)
    for (int k = j + 1; k <= L; ++k)
      for (const auto& a : jumps_for(j, k)) {
        Steps one = piece(0, j);
        one.push_back(a);
        Steps rest = piece(k, L);
        Steps single = one;
        single.insert(single.end(), rest.begin(), rest.end());
        out.insert(steps_to_string(single));
        for (int j2 = k; j2 < L; ++j2)
          for (int k2 = j2 + 1; k2 <= L; ++k2)
            for (const auto& b : jumps_for(j2, k2)) {
              Steps two = one;
              Steps mid = piece(k, j2);
              two.insert(two.end(), mid.begin(), mid.end());
              two.push_back(b);
              Steps tail = piece(k2, L);
              two.insert(two.end(), tail.begin(), tail.end());
              out.insert(steps_to_string(two));
            }
      }
  return out;
}

TEST(Alternatives, UncappedMatchesBruteForce) {
  std::mt19937 rng(17);
  for (int round = 0; round < 40; ++round) {
    DomTree t(testing::random_tree(rng, 30));
    for (NodeId n = 0; n < static_cast<NodeId>(t.size()); ++n) {
      auto s = absolute_selector_of(n, t);
      std::set<std::string> got;
      for (const auto& a : alternative_selectors(s, t, AltOptions{0, 2, true, false})) got.insert(to_string(a));
      ASSERT_EQ(got, brute_alternatives(s, t)) << to_string(s);
    }
  }
}

TEST(Alternatives, PrunedIsSubsetDenotingSameNode) {
  std::mt19937 rng(19);
  for (int round = 0; round < 20; ++round) {
    DomTree t(testing::random_tree(rng, 30));
    for (NodeId n = 0; n < static_cast<NodeId>(t.size()); ++n) {
      auto s = absolute_selector_of(n, t);
      auto full = brute_alternatives(s, t);
      for (const auto& a : alternative_selectors(s, t, AltOptions{0, 2, true, true}))
        EXPECT_TRUE(full.count(to_string(a)));
    }
  }
}

TEST(Tree, JsonRoundTrip) {
  std::mt19937 rng(23);
  for (int round = 0; round < 20; ++round) {
    DomTree t(testing::random_tree(rng, 40), "https://example.test/p");
    auto back = tree_from_json(tree_to_json(t));
    EXPECT_EQ(tree_to_json(*back).dump(), tree_to_json(t).dump());
    EXPECT_EQ(back->url(), t.url());
  }
  EXPECT_THROW(tree_from_json(Json::parse(R"({"root":{"tag":""}})")), std::exception);
}

TEST(Tree, WithTextKeepsIds) {
  auto t = make_dom(page({el("input", {{"id", "zip"}}), tx("p", {}, "hi")}));
  NodeId zip = build::by_id(*t, "zip");
  auto u = t->with_text(zip, "92037");
  EXPECT_EQ(u.size(), t->size());
  EXPECT_EQ(u.text_content(zip), "92037");
  EXPECT_FALSE(t->own_text(zip));
  EXPECT_EQ(u.text_content(u.root()), "page92037hi");
}

}  // namespace
}  // namespace rpa
