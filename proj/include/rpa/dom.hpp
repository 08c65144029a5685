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

// Page snapshots and the XPath-subset selectors that address their nodes.

#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace rpa {

using Json = nlohmann::ordered_json;
using NodeId = std::int32_t;
using Attrs = std::vector<std::pair<std::string, std::string>>;

// Tree-shaped node used to build snapshots and to (de)serialize them.
struct DomNode {
  std::string tag;
  Attrs attrs;
  std::optional<std::string> text;
  std::vector<DomNode> children;
};

// Immutable snapshot. Nodes are stored flat in preorder; a node's id is its
// preorder position, so the strict descendants of n are (n, subtree_end(n)).
class DomTree {
 public:
  explicit DomTree(const DomNode& root, std::optional<std::string> url = {})
      : url_(std::move(url)) {
    add(root, -1, 0);
  }

  NodeId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeId n) const { return n >= 0 && n < static_cast<NodeId>(nodes_.size()); }

  const std::string& tag(NodeId n) const { return nodes_[n].tag; }
  const Attrs& attrs(NodeId n) const { return nodes_[n].attrs; }
  const std::optional<std::string>& own_text(NodeId n) const { return nodes_[n].text; }
  const std::vector<NodeId>& children(NodeId n) const { return nodes_[n].children; }
  NodeId parent(NodeId n) const { return nodes_[n].parent; }
  int depth(NodeId n) const { return nodes_[n].depth; }
  NodeId subtree_end(NodeId n) const { return nodes_[n].end; }
  const std::optional<std::string>& url() const { return url_; }

  std::optional<std::string_view> attr(NodeId n, std::string_view name) const {
    for (const auto& [k, v] : nodes_[n].attrs)
      if (k == name) return std::string_view(v);
    return std::nullopt;
  }

  bool is_ancestor_or_self(NodeId anc, NodeId n) const {
    return n >= anc && n < nodes_[anc].end;
  }

  // Own text followed by every descendant's text, in document order.
  std::string text_content(NodeId n) const {
    std::string out;
    for (NodeId k = n; k < nodes_[n].end; ++k)
      if (nodes_[k].text) out += *nodes_[k].text;
    return out;
  }

  DomNode to_node(NodeId n = 0) const {
    DomNode d{nodes_[n].tag, nodes_[n].attrs, nodes_[n].text, {}};
    for (NodeId c : nodes_[n].children) d.children.push_back(to_node(c));
    return d;
  }

  // Copy with one node's text replaced; ids are preserved.
  DomTree with_text(NodeId n, std::optional<std::string> text) const {
    DomTree t = *this;
    t.nodes_.at(n).text = std::move(text);
    return t;
  }

  DomTree with_url(std::optional<std::string> url) const {
    DomTree t = *this;
    t.url_ = std::move(url);
    return t;
  }

 private:
  struct Flat {
    std::string tag;
    Attrs attrs;
    std::optional<std::string> text;
    std::vector<NodeId> children;
    NodeId parent;
    NodeId end;
    int depth;
  };

  NodeId add(const DomNode& d, NodeId parent, int depth) {
    if (d.tag.empty()) throw std::invalid_argument("dom node with empty tag");
    NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Flat{d.tag, d.attrs, d.text, {}, parent, 0, depth});
    for (const auto& c : d.children) {
      NodeId cid = add(c, id, depth + 1);
      nodes_[id].children.push_back(cid);
    }
    nodes_[id].end = static_cast<NodeId>(nodes_.size());
    return id;
  }

  std::vector<Flat> nodes_;
  std::optional<std::string> url_;
};

using DomPtr = std::shared_ptr<const DomTree>;
using DomTrace = std::vector<DomPtr>;

inline DomPtr make_dom(const DomNode& root, std::optional<std::string> url = {}) {
  return std::make_shared<const DomTree>(root, std::move(url));
}

// ---------------------------------------------------------------------------
// Selectors

enum class Axis : std::uint8_t { Child, Descendant };

struct Predicate {
  std::string tag;
  std::optional<std::pair<std::string, std::string>> attr;

  bool matches(const DomTree& t, NodeId n) const {
    if (t.tag(n) != tag) return false;
    if (!attr) return true;
    auto v = t.attr(n, attr->first);
    return v && *v == attr->second;
  }
  friend bool operator==(const Predicate&, const Predicate&) = default;
  friend auto operator<=>(const Predicate&, const Predicate&) = default;
};

struct Step {
  Axis axis = Axis::Child;
  Predicate pred;
  int index = 1;
  friend bool operator==(const Step&, const Step&) = default;
  friend auto operator<=>(const Step&, const Step&) = default;
};

using Steps = std::vector<Step>;

// Variable-free selector; no steps denotes the root (epsilon).
struct Selector {
  Steps steps;
  bool is_root() const { return steps.empty(); }
  friend bool operator==(const Selector&, const Selector&) = default;
  friend auto operator<=>(const Selector&, const Selector&) = default;
};

inline void append_step(std::string& out, const Step& s) {
  out += s.axis == Axis::Child ? "/" : "//";
  out += s.pred.tag;
  if (s.pred.attr) {
    out += "[@";
    out += s.pred.attr->first;
    out += "='";
    out += s.pred.attr->second;
    out += "']";
  }
  out += '[';
  out += std::to_string(s.index);
  out += ']';
}

inline std::string steps_to_string(const Steps& steps) {
  std::string out;
  for (const auto& s : steps) append_step(out, s);
  return out;
}

inline std::string to_string(const Selector& s) { return steps_to_string(s.steps); }

struct ParseError : std::runtime_error {
  std::size_t pos;
  ParseError(const std::string& what, std::size_t p)
      : std::runtime_error(what + " at offset " + std::to_string(p)), pos(p) {}
};

namespace detail {

inline bool name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '-' || c == ':' || c == '.';
}

struct StepReader {
  std::string_view s;
  std::size_t i = 0;

  bool done() const { return i >= s.size(); }
  void expect(char c) {
    if (i >= s.size() || s[i] != c) throw ParseError(std::string("expected '") + c + "'", i);
    ++i;
  }
  std::string name() {
    std::size_t b = i;
    while (i < s.size() && name_char(s[i])) ++i;
    if (b == i) throw ParseError("expected a name", i);
    return std::string(s.substr(b, i - b));
  }
  int number() {
    std::size_t b = i;
    long v = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
      v = v * 10 + (s[i] - '0');
      if (v > 1'000'000'000) throw ParseError("index too large", b);
      ++i;
    }
    if (b == i) throw ParseError("expected an index", i);
    if (v < 1) throw ParseError("index must be >= 1", b);
    return static_cast<int>(v);
  }
  Step step() {
    Step st;
    expect('/');
    st.axis = Axis::Child;
    if (i < s.size() && s[i] == '/') {
      st.axis = Axis::Descendant;
      ++i;
    }
    st.pred.tag = name();
    expect('[');
    if (i < s.size() && s[i] == '@') {
      ++i;
      std::string key = name();
      expect('=');
      expect('\'');
      std::size_t b = i;
      while (i < s.size() && s[i] != '\'') ++i;
      if (i >= s.size()) throw ParseError("unterminated attribute value", b);
      std::string val(s.substr(b, i - b));
      ++i;
      expect(']');
      expect('[');
      st.pred.attr = std::make_pair(std::move(key), std::move(val));
    }
    st.index = number();
    expect(']');
    return st;
  }
};

}  // namespace detail

// Parses a run of steps starting at s[pos]; stops at end of input.
inline Steps parse_steps(std::string_view s, std::size_t offset = 0) {
  detail::StepReader r{s, offset};
  Steps out;
  while (!r.done()) out.push_back(r.step());
  return out;
}

inline Selector parse_selector(std::string_view s) { return Selector{parse_steps(s)}; }

// ---------------------------------------------------------------------------
// Resolution

inline std::optional<NodeId> apply_step(const DomTree& t, NodeId anchor, const Step& st) {
  int seen = 0;
  if (st.axis == Axis::Child) {
    for (NodeId c : t.children(anchor))
      if (st.pred.matches(t, c) && ++seen == st.index) return c;
  } else {
    for (NodeId n = anchor + 1, e = t.subtree_end(anchor); n < e; ++n)
      if (st.pred.matches(t, n) && ++seen == st.index) return n;
  }
  return std::nullopt;
}

inline std::optional<NodeId> resolve_steps(const Steps& steps, const DomTree& t,
                                           NodeId anchor = 0) {
  NodeId cur = anchor;
  for (const auto& st : steps) {
    auto nx = apply_step(t, cur, st);
    if (!nx) return std::nullopt;
    cur = *nx;
  }
  return cur;
}

inline std::optional<NodeId> resolve_selector(const Selector& s, const DomTree& t) {
  return resolve_steps(s.steps, t, t.root());
}

inline bool valid(const Selector& s, const DomTree& t) { return resolve_selector(s, t).has_value(); }

// 1-based rank of n among the pred-matching strict descendants of anchor.
inline int descendant_rank(const DomTree& t, NodeId anchor, NodeId n, const Predicate& p) {
  int r = 0;
  for (NodeId k = anchor + 1; k <= n; ++k)
    if (p.matches(t, k)) ++r;
  return r;
}

inline int descendant_count(const DomTree& t, NodeId anchor, const Predicate& p) {
  int r = 0;
  for (NodeId k = anchor + 1, e = t.subtree_end(anchor); k < e; ++k)
    if (p.matches(t, k)) ++r;
  return r;
}

inline Selector absolute_selector_of(NodeId node, const DomTree& t) {
  if (!t.contains(node)) throw std::out_of_range("node is not part of this tree");
  Steps rev;
  for (NodeId n = node; n != t.root(); n = t.parent(n)) {
    NodeId p = t.parent(n);
    int idx = 0;
    for (NodeId c : t.children(p)) {
      if (t.tag(c) == t.tag(n)) ++idx;
      if (c == n) break;
    }
    rev.push_back(Step{Axis::Child, Predicate{t.tag(n), std::nullopt}, idx});
  }
  return Selector{Steps(rev.rbegin(), rev.rend())};
}

// ---------------------------------------------------------------------------
// Alternative selectors
//
// Let w_0 = root and w_t be the node reached after the first t steps of the
// selector. An alternative replaces up to `max_jumps` disjoint step ranges
// (j, k] by a single descendant step //p[r], where p is the tag of w_k or the
// tag plus one of its attributes and r is w_k's rank among the p-matching
// descendants of w_j. Jumps whose anchor w_j does not narrow the match set
// compared to the shallowest admissible anchor are dropped, since they
// denote the same node list.

struct AltOptions {
  int cap = 5;         // non-identity results kept; 0 = unlimited
  int max_jumps = 2;
  bool enabled = true;  // false: only the identity (ablation)
  bool prune_anchors = true;
};

namespace detail {

// Attribute order: class, id, then the rest by name.
inline std::vector<std::pair<std::string, std::string>> ordered_attrs(const DomTree& t, NodeId n) {
  auto a = t.attrs(n);
  auto rank = [](const std::string& k) { return k == "class" ? 0 : k == "id" ? 1 : 2; };
  std::stable_sort(a.begin(), a.end(), [&](const auto& x, const auto& y) {
    int rx = rank(x.first), ry = rank(y.first);
    if (rx != ry) return rx < ry;
    return x.first < y.first;
  });
  return a;
}

inline std::vector<Predicate> predicates_for(const DomTree& t, NodeId n) {
  std::vector<Predicate> ps{Predicate{t.tag(n), std::nullopt}};
  for (auto& kv : ordered_attrs(t, n)) {
    if (kv.second.find('\'') != std::string::npos) continue;
    ps.push_back(Predicate{t.tag(n), kv});
  }
  return ps;
}

struct Jump {
  int j, k;
  Step step;
};

}  // namespace detail

// Candidate jumps for a path whose prefix nodes are w[0..L].
inline std::vector<detail::Jump> candidate_jumps(const DomTree& t, const std::vector<NodeId>& w,
                                                 bool prune_anchors = true) {
  std::vector<detail::Jump> out;
  const int L = static_cast<int>(w.size()) - 1;
  for (int k = L; k >= 1; --k) {
    for (const auto& p : detail::predicates_for(t, w[k])) {
      int prev_count = -1;
      for (int j = 0; j < k; ++j) {
        int cnt = descendant_count(t, w[j], p);
        if (prune_anchors && cnt == prev_count) continue;  // anchor adds nothing over a shallower one
        prev_count = cnt;
        int r = descendant_rank(t, w[j], w[k], p);
        out.push_back(detail::Jump{j, k, Step{Axis::Descendant, p, r}});
      }
    }
  }
  return out;
}

// Prefix nodes of a resolving step list: w[0] = anchor, w[t] after t steps.
inline std::optional<std::vector<NodeId>> prefix_nodes(const Steps& steps, const DomTree& t,
                                                      NodeId anchor = 0) {
  std::vector<NodeId> w{anchor};
  for (const auto& st : steps) {
    auto nx = apply_step(t, w.back(), st);
    if (!nx) return std::nullopt;
    w.push_back(*nx);
  }
  return w;
}

// All alternatives of `steps` relative to `anchor` (identity first), in the
// canonical order: identity, then one jump, then two jumps; within a jump
// count, deeper targets first, then predicate order, then shallower anchors.
inline std::vector<Steps> alternative_steps(const Steps& steps, const DomTree& t, NodeId anchor,
                                            const AltOptions& opt) {
  auto w = prefix_nodes(steps, t, anchor);
  if (!w) throw std::invalid_argument("selector does not resolve: " + steps_to_string(steps));
  std::vector<Steps> out{steps};
  if (!opt.enabled || opt.max_jumps <= 0 || steps.empty()) return out;
  auto jumps = candidate_jumps(t, *w, opt.prune_anchors);
  auto keep = [&](const Steps& s) {
    for (const auto& o : out)
      if (o == s) return;
    out.push_back(s);
  };
  auto build = [&](const std::vector<const detail::Jump*>& js) {
    Steps s;
    int pos = 0;
    for (const auto* jp : js) {
      for (int x = pos; x < jp->j; ++x) s.push_back(steps[x]);
      s.push_back(jp->step);
      pos = jp->k;
    }
    for (int x = pos; x < static_cast<int>(steps.size()); ++x) s.push_back(steps[x]);
    return s;
  };
  const std::size_t limit = opt.cap > 0 ? static_cast<std::size_t>(opt.cap) + 1 : SIZE_MAX;
  for (const auto& jp : jumps) {
    if (out.size() >= limit) return out;
    keep(build({&jp}));
  }
  if (opt.max_jumps >= 2) {
    for (const auto& second : jumps) {
      for (const auto& first : jumps) {
        if (first.k > second.j) continue;
        if (out.size() >= limit) return out;
        keep(build({&first, &second}));
      }
    }
  }
  return out;
}

inline std::vector<Selector> alternative_selectors(const Selector& s, const DomTree& t,
                                                   const AltOptions& opt = {}) {
  std::vector<Selector> out;
  for (auto& st : alternative_steps(s.steps, t, t.root(), opt)) out.push_back(Selector{std::move(st)});
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline Json node_to_json(const DomNode& n) {
  Json attrs = Json::object();
  for (const auto& [k, v] : n.attrs) attrs[k] = v;
  Json kids = Json::array();
  for (const auto& c : n.children) kids.push_back(node_to_json(c));
  return {{"tag", n.tag},
          {"attrs", attrs},
          {"text", n.text ? Json(*n.text) : Json(nullptr)},
          {"children", kids}};
}

inline DomNode node_from_json(const Json& j) {
  DomNode n;
  n.tag = j.at("tag").get<std::string>();
  if (j.contains("attrs") && !j["attrs"].is_null())
    for (const auto& [k, v] : j["attrs"].items()) n.attrs.emplace_back(k, v.get<std::string>());
  if (j.contains("text") && !j["text"].is_null()) n.text = j["text"].get<std::string>();
  if (j.contains("children"))
    for (const auto& c : j["children"]) n.children.push_back(node_from_json(c));
  return n;
}

inline Json tree_to_json(const DomTree& t) {
  return {{"url", t.url() ? Json(*t.url()) : Json(nullptr)},
          {"root", node_to_json(t.to_node())}};
}

inline DomPtr tree_from_json(const Json& j) {
  std::optional<std::string> url;
  if (j.contains("url") && !j["url"].is_null()) url = j["url"].get<std::string>();
  return make_dom(node_from_json(j.at("root")), std::move(url));
}

}  // namespace rpa
