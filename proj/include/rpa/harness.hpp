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

// Synthetic sites, ground-truth recording and prefix-prediction benchmarks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rpa/dom.hpp"
#include "rpa/lang.hpp"
#include "rpa/semantics.hpp"
#include "rpa/synth.hpp"

namespace rpa {

// ---------------------------------------------------------------------------
// Sites

// Pages by id plus click wiring. A link target may contain "{N}", replaced by
// the current text of node N on the page being clicked (search forms).
struct SiteSpec {
  std::string name;
  std::string start;
  std::map<std::string, DomPtr> pages;
  std::map<std::string, std::map<NodeId, std::string>> links;
};

inline Json site_to_json(const SiteSpec& s) {
  Json j;
  j["name"] = s.name;
  j["start"] = s.start;
  j["pages"] = Json::object();
  for (const auto& [id, t] : s.pages) j["pages"][id] = tree_to_json(*t);
  j["links"] = Json::object();
  for (const auto& [id, ls] : s.links) {
    Json o = Json::object();
    for (const auto& [n, target] : ls) o[std::to_string(n)] = target;
    j["links"][id] = o;
  }
  return j;
}

inline SiteSpec site_from_json(const Json& j) {
  SiteSpec s;
  s.name = j.at("name").get<std::string>();
  s.start = j.at("start").get<std::string>();
  for (const auto& [id, t] : j.at("pages").items()) s.pages[id] = tree_from_json(t);
  if (j.contains("links"))
    for (const auto& [id, ls] : j.at("links").items())
      for (const auto& [n, target] : ls.items()) s.links[id][std::stoi(n)] = target.get<std::string>();
  if (!s.pages.count(s.start)) throw std::invalid_argument("site start page '" + s.start + "' missing");
  return s;
}

struct SessionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A browser over a SiteSpec. Clicks on wired nodes (or their descendants)
// navigate; EnterData and SendKeys write into the target's text; GoBack
// returns to the previous page as it was left.
class Session {
 public:
  Session(std::shared_ptr<const SiteSpec> site, InputData data)
      : site_(std::move(site)), data_(std::move(data)) {
    page_id_ = site_->start;
    page_ = site_->pages.at(page_id_);
  }

  const DomPtr& page() const { return page_; }
  const std::string& page_id() const { return page_id_; }
  const InputData& data() const { return data_; }
  std::size_t history_depth() const { return history_.size(); }

  // Applies a, which must be valid on the current page.
  void apply(const Action& a) {
    std::optional<NodeId> n;
    if (has_selector(a.kind)) {
      n = resolve_selector(a.selector, *page_);
      if (!n) throw SessionError("selector " + to_string(a.selector) + " matches nothing on page '" + page_id_ + "'");
    }
    switch (a.kind) {
      case ActionKind::Click: {
        auto target = link_target(*n);
        if (target) navigate(*target);
        return;
      }
      case ActionKind::EnterData: {
        auto v = value_string(data_, a.value_path);
        if (!v) throw SessionError("value path " + to_string(a.value_path) + " not in input data");
        page_ = std::make_shared<const DomTree>(page_->with_text(*n, *v));
        return;
      }
      case ActionKind::SendKeys:
        page_ = std::make_shared<const DomTree>(page_->with_text(*n, a.text));
        return;
      case ActionKind::GoBack:
        if (history_.empty()) throw SessionError("no page to go back to");
        page_id_ = history_.back().first;
        page_ = history_.back().second;
        history_.pop_back();
        return;
      default:
        return;
    }
  }

 private:
  std::optional<std::string> link_target(NodeId n) const {
    auto it = site_->links.find(page_id_);
    if (it == site_->links.end()) return std::nullopt;
    for (std::optional<NodeId> v = n; v; v = page_->parent(*v)) {
      auto lt = it->second.find(*v);
      if (lt == it->second.end()) continue;
      std::string t = lt->second;
      for (std::size_t b; (b = t.find('{')) != std::string::npos;) {
        auto e = t.find('}', b);
        NodeId src = std::stoi(t.substr(b + 1, e - b - 1));
        t = t.substr(0, b) + page_->text_content(src) + t.substr(e + 1);
      }
      return t;
    }
    return std::nullopt;
  }

  void navigate(const std::string& id) {
    auto it = site_->pages.find(id);
    if (it == site_->pages.end()) throw SessionError("link to unknown page '" + id + "'");
    history_.emplace_back(page_id_, page_);
    page_id_ = id;
    page_ = it->second;
  }

  std::shared_ptr<const SiteSpec> site_;
  InputData data_;
  std::string page_id_;
  DomPtr page_;
  std::vector<std::pair<std::string, DomPtr>> history_;
};

// ---------------------------------------------------------------------------
// Recordings

struct Recording {
  ActionTrace actions;
  DomTrace doms;
  InputData input = Json::object();
};

inline Json recording_to_json(const Recording& r) {
  Json j;
  j["input_data"] = r.input;
  j["actions"] = trace_to_json(r.actions);
  j["doms"] = Json::array();
  for (const auto& d : r.doms) j["doms"].push_back(tree_to_json(*d));
  return j;
}

inline Recording recording_from_json(const Json& j) {
  Recording r;
  if (j.contains("input_data")) r.input = j.at("input_data");
  r.actions = trace_from_json(j.at("actions"));
  for (const auto& d : j.at("doms")) r.doms.push_back(tree_from_json(d));
  if (r.doms.size() != r.actions.size() + 1)
    throw std::invalid_argument("trace file needs exactly one more DOM than actions");
  return r;
}

// Runs P_gt live against a fresh session, recording the page before every
// action. Selectors are stored as absolute paths unless `absolute` is off, in
// which case the program's own selectors are kept.
inline Recording record_ground_truth(const Program& p, std::shared_ptr<const SiteSpec> site,
                                     const InputData& data, std::size_t cap = 500,
                                     Coverage* cov = nullptr, bool absolute = true) {
  Session s(std::move(site), data);
  Recording r;
  r.input = data;
  r.doms.push_back(s.page());
  Interpreter in(
      r.doms, 0, cap, data,
      [&](const Action& a, std::size_t) {
        Action abs = a;
        if (has_selector(a.kind)) {
          auto n = resolve_selector(a.selector, *s.page());
          if (!n) throw ExecError("ground truth selector " + to_string(a.selector) + " is invalid");
          if (absolute) abs.selector = absolute_selector_of(*n, *s.page());
        }
        s.apply(abs);
        r.actions.push_back(std::move(abs));
        r.doms.push_back(s.page());
        return true;
      });
  in.set_coverage(cov);
  Env env;
  in.run(p, env);
  return r;
}

// ---------------------------------------------------------------------------
// Fixtures

struct Fixture {
  std::string name;
  std::shared_ptr<const SiteSpec> site;
  Program program;
  InputData input = Json::object();
  std::size_t cap = 500;
};

namespace build {

inline DomNode el(std::string tag, Attrs attrs = {}, std::vector<DomNode> kids = {}) {
  return DomNode{std::move(tag), std::move(attrs), std::nullopt, std::move(kids)};
}
inline DomNode tx(std::string tag, Attrs attrs, std::string text) {
  return DomNode{std::move(tag), std::move(attrs), std::move(text), {}};
}
inline DomNode page(std::vector<DomNode> body, std::string title = "page") {
  return el("#document", {}, {el("html", {}, {el("head", {}, {tx("title", {}, std::move(title))}),
                                              el("body", {}, std::move(body))})});
}

// Finds the node carrying attribute id=value; wiring uses it to name links.
inline NodeId by_id(const DomTree& t, const std::string& id) {
  for (NodeId n = 0; n < static_cast<NodeId>(t.size()); ++n)
    if (auto v = t.attr(n, "id"); v && *v == id) return n;
  throw std::logic_error("fixture page has no #" + id);
}

inline Program prog(const char* json) { return program_from_json(Json::parse(json)); }

class Words {
 public:
  explicit Words(std::uint32_t seed) : rng_(seed) {}
  std::string name() {
    static const char* a[] = {"North", "Lake", "Pine", "Harbor", "Cedar", "Mill", "River", "Oak"};
    static const char* b[] = {"Market", "Corner", "Plaza", "Depot", "Outlet", "Square", "Point"};
    return std::string(a[rng_() % 8]) + " " + b[rng_() % 7] + " " + std::to_string(rng_() % 900 + 100);
  }
  std::string phone() {
    std::string s = "(";
    for (int i = 0; i < 10; ++i) {
      s += static_cast<char>('0' + rng_() % 10);
      if (i == 2) s += ") ";
      if (i == 5) s += "-";
    }
    return s;
  }
  unsigned pick(unsigned n) { return static_cast<unsigned>(rng_() % n); }

 private:
  std::mt19937 rng_;
};

struct SiteBuilder {
  std::shared_ptr<SiteSpec> s = std::make_shared<SiteSpec>();
  explicit SiteBuilder(std::string name, std::string start) {
    s->name = std::move(name);
    s->start = std::move(start);
  }
  DomPtr add(const std::string& id, const DomNode& root) {
    auto t = make_dom(root, "https://" + s->name + ".test/" + id);
    s->pages[id] = t;
    return t;
  }
  void link(const std::string& page, NodeId n, std::string target) { s->links[page][n] = std::move(target); }
  void link_id(const std::string& page, const std::string& id, std::string target) {
    link(page, by_id(*s->pages.at(page), id), std::move(target));
  }
};

}  // namespace build

// Items with a title and a price; one selector loop scraping both.
inline Fixture fixture_list_scrape(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  std::vector<DomNode> items;
  for (int i = 0; i < 5; ++i)
    items.push_back(el("li", {{"class", "item"}},
                       {tx("span", {{"class", "title"}}, w.name()),
                        tx("span", {{"class", "price"}}, "$" + std::to_string(5 + w.pick(90)))}));
  SiteBuilder sb("list-scrape", "home");
  sb.add("home", page({tx("h1", {}, "Catalog"), el("ul", {}, items)}));
  return Fixture{"list-scrape", sb.s,
                 prog(R"([{"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"li"},
                   "body":[{"kind":"ScrapeText","selector":"r1/span[1]"},{"kind":"ScrapeText","selector":"r1/span[2]"}]}])"),
                 Json::object()};
}

// Store results interleaved with ads: positional paths do not line up, the
// class attribute does.
inline Fixture fixture_store_locator(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  auto form = [] {
    return el("div", {{"class", "search"}},
              {el("input", {{"id", "zip"}, {"type", "text"}}), tx("button", {{"id", "go"}}, "Search")});
  };
  std::vector<DomNode> results;
  const bool ad_after[] = {true, false, true, true, false};
  for (int i = 0; i < 5; ++i) {
    results.push_back(el("div", {{"class", "store"}},
                         {tx("div", {{"class", "name"}}, w.name()),
                          tx("div", {{"class", "locatorPhone"}}, w.phone())}));
    if (ad_after[i])
      results.push_back(el("div", {{"class", "ad"}}, {tx("div", {{"class", "name"}}, "Sponsored")}));
  }
  SiteBuilder sb("store-locator", "search");
  sb.add("search", page({tx("h1", {}, "Find a store"), form()}));
  sb.add("results", page({tx("h1", {}, "Find a store"), form(), el("div", {{"class", "results"}}, results)}));
  sb.link_id("search", "go", "results");
  Json data = {{"zips", {"92037"}}};
  return Fixture{"store-locator", sb.s,
                 prog(R"([{"kind":"EnterData","selector":"//input[@id='zip'][1]","value_path":"x['zips'][1]"},
                   {"kind":"Click","selector":"//button[1]"},
                   {"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"div[@class='store']"},
                    "body":[{"kind":"ScrapeText","selector":"r1/div[1]"},{"kind":"ScrapeText","selector":"r1/div[2]"}]}])"),
                 data};
}

// Paginated list: every `a` holds a `b`, a `c` link leads to the next page.
inline Fixture fixture_paginated(std::uint32_t seed, std::vector<int> per_page = {20, 20, 9},
                                 std::string name = "paginated", std::size_t cap = 500) {
  using namespace build;
  Words w(seed);
  SiteBuilder sb(name, "p1");
  for (std::size_t pg = 0; pg < per_page.size(); ++pg) {
    std::vector<DomNode> body;
    for (int i = 0; i < per_page[pg]; ++i)
      body.push_back(DomNode{"a", {}, w.name(), {tx("b", {}, w.phone())}});
    if (pg + 1 < per_page.size()) body.push_back(tx("c", {{"id", "next"}}, "Next"));
    std::string id = "p" + std::to_string(pg + 1);
    sb.add(id, page(body));
    if (pg + 1 < per_page.size()) sb.link_id(id, "next", "p" + std::to_string(pg + 2));
  }
  return Fixture{name, sb.s,
                 prog(R"([{"kind":"While","body":[
                   {"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"a"},
                    "body":[{"kind":"ScrapeText","selector":"r1"},{"kind":"ScrapeText","selector":"r1/b[1]"}]},
                   {"kind":"Click","selector":"//c[1]"}]}])"),
                 Json::object(), cap};
}

// Form filled once per input row.
inline Fixture fixture_form_entry(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  Json rows = Json::array();
  for (int i = 0; i < 4; ++i) {
    std::string n = w.name();
    std::string mail = n.substr(0, n.find(' '));
    for (auto& ch : mail) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    rows.push_back({{"name", n}, {"email", mail + std::to_string(i) + "@example.test"}});
  }
  SiteBuilder sb("form-entry", "form");
  sb.add("form", page({tx("h1", {}, "Register"),
                       el("form", {},
                          {el("input", {{"id", "name"}}), el("input", {{"id", "email"}}),
                           tx("button", {{"id", "submit"}}, "Submit")})}));
  sb.link_id("form", "submit", "form");
  return Fixture{"form-entry", sb.s,
                 prog(R"([{"kind":"ForEachValuePaths","var":"v1","collection":{"kind":"ValuePaths","base":"x['rows']"},
                   "body":[{"kind":"EnterData","selector":"//input[@id='name'][1]","value_path":"v1['name']"},
                           {"kind":"EnterData","selector":"//input[@id='email'][1]","value_path":"v1['email']"},
                           {"kind":"Click","selector":"//button[1]"}]}])"),
                 Json{{"rows", rows}}};
}

// Value-path loop over zip codes, each search paginated, each page a list of
// stores.
inline Fixture fixture_three_level(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  const std::vector<std::string> zips = {"10001", "60601", "94103"};
  const std::vector<std::vector<int>> shape = {{3, 2}, {2, 3, 2}, {3, 3}};
  auto form = [] {
    return el("div", {{"class", "search"}},
              {el("input", {{"id", "zip"}}), tx("button", {{"id", "go"}}, "Search")});
  };
  SiteBuilder sb("three-level", "search");
  sb.add("search", page({tx("h1", {}, "Locator"), form()}));
  std::string go = "res-{" + std::to_string(by_id(*sb.s->pages["search"], "zip")) + "}-1";
  sb.link_id("search", "go", go);
  for (std::size_t z = 0; z < zips.size(); ++z) {
    for (std::size_t pg = 0; pg < shape[z].size(); ++pg) {
      std::vector<DomNode> stores;
      for (int i = 0; i < shape[z][pg]; ++i)
        stores.push_back(el("div", {{"class", "store"}}, {tx("span", {}, w.name())}));
      std::vector<DomNode> body = {tx("h1", {}, "Locator"), form(), el("div", {{"class", "list"}}, stores)};
      const bool more = pg + 1 < shape[z].size();
      if (more) body.push_back(tx("a", {{"id", "next"}}, "More"));
      std::string id = "res-" + zips[z] + "-" + std::to_string(pg + 1);
      sb.add(id, page(body));
      sb.link_id(id, "go", go);
      if (more) sb.link_id(id, "next", "res-" + zips[z] + "-" + std::to_string(pg + 2));
    }
  }
  return Fixture{"three-level", sb.s,
                 prog(R"([{"kind":"ForEachValuePaths","var":"v1","collection":{"kind":"ValuePaths","base":"x['zips']"},
                   "body":[{"kind":"EnterData","selector":"//input[1]","value_path":"v1"},
                           {"kind":"Click","selector":"//button[1]"},
                           {"kind":"While","body":[
                             {"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"div[@class='store']"},
                              "body":[{"kind":"ScrapeText","selector":"r1/span[1]"}]},
                             {"kind":"Click","selector":"//a[@id='next'][1]"}]}]}])"),
                 Json{{"zips", zips}}};
}

// The same text typed into every row, then the row's button.
inline Fixture fixture_send_keys(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  std::vector<DomNode> rows;
  for (int i = 0; i < 4; ++i)
    rows.push_back(el("div", {{"class", "row"}},
                      {tx("label", {}, w.name()), el("input", {}), tx("button", {}, "Save")}));
  SiteBuilder sb("send-keys", "home");
  sb.add("home", page({tx("h1", {}, "Notes"), el("div", {{"class", "rows"}}, rows)}));
  return Fixture{"send-keys", sb.s,
                 prog(R"([{"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"div[@class='row']"},
                   "body":[{"kind":"SendKeys","selector":"r1/input[1]","text":"checked"},
                           {"kind":"Click","selector":"r1/button[1]"}]}])"),
                 Json::object()};
}

// Open each detail page, scrape its heading, go back.
inline Fixture fixture_go_back(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  std::vector<DomNode> items;
  std::vector<std::string> names;
  for (int i = 0; i < 4; ++i) {
    names.push_back(w.name());
    items.push_back(el("li", {}, {tx("a", {{"class", "detail"}}, names.back())}));
  }
  SiteBuilder sb("go-back", "list");
  auto list = sb.add("list", page({tx("h1", {}, "Listings"), el("ul", {}, items)}));
  for (int i = 0; i < 4; ++i) {
    std::string id = "item" + std::to_string(i + 1);
    sb.add(id, page({tx("h1", {}, names[static_cast<std::size_t>(i)]), tx("p", {}, w.phone())}));
    auto a = resolve_selector(parse_selector("//a[" + std::to_string(i + 1) + "]"), *list);
    sb.link("list", *a, id);
  }
  return Fixture{"go-back", sb.s,
                 prog(R"([{"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"a[@class='detail']"},
                   "body":[{"kind":"Click","selector":"r1"},{"kind":"ScrapeText","selector":"//h1[1]"},{"kind":"GoBack"}]}])"),
                 Json::object()};
}

// Two definition lists; only the terms of the second are iterated, as
// children of that list.
inline Fixture fixture_siblings(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  auto dl = [&](int n) {
    std::vector<DomNode> kids;
    for (int i = 0; i < n; ++i) {
      kids.push_back(tx("dt", {}, w.name()));
      kids.push_back(tx("dd", {}, w.phone()));
    }
    return el("dl", {}, kids);
  };
  SiteBuilder sb("siblings", "home");
  sb.add("home", page({tx("h2", {}, "Hours"), dl(3), tx("h2", {}, "Contacts"), dl(5)}));
  return Fixture{"siblings", sb.s,
                 prog(R"([{"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Children","base":"/html[1]/body[1]/dl[2]","pred":"dt"},
                   "body":[{"kind":"ScrapeText","selector":"r1"}]}])"),
                 Json::object()};
}

// Links followed by ScrapeLink, then a download per product card.
inline Fixture fixture_links_downloads(std::uint32_t seed) {
  using namespace build;
  Words w(seed);
  std::vector<DomNode> cards;
  for (int i = 0; i < 4; ++i)
    cards.push_back(el("section", {{"class", "card"}},
                       {tx("h3", {}, w.name()), tx("a", {{"class", "more"}}, "details"),
                        tx("a", {{"class", "pdf"}}, "sheet.pdf")}));
  SiteBuilder sb("links-downloads", "home");
  sb.add("home", page({el("main", {}, cards)}));
  return Fixture{"links-downloads", sb.s,
                 prog(R"([{"kind":"ExtractURL"},
                   {"kind":"ForEachSelectors","var":"r1","collection":{"kind":"Dscts","base":"","pred":"section"},
                   "body":[{"kind":"ScrapeText","selector":"r1/h3[1]"},{"kind":"ScrapeLink","selector":"r1/a[1]"},
                           {"kind":"Download","selector":"r1/a[2]"}]}])"),
                 Json::object()};
}

inline std::vector<Fixture> generate_fixture_suite(std::uint32_t seed) {
  return {fixture_list_scrape(seed),
          fixture_store_locator(seed + 1),
          fixture_paginated(seed + 2, {4, 4, 3}),
          fixture_form_entry(seed + 3),
          fixture_three_level(seed + 4),
          fixture_send_keys(seed + 5),
          fixture_go_back(seed + 6),
          fixture_siblings(seed + 7),
          fixture_links_downloads(seed + 8),
          fixture_paginated(seed + 9, {20, 20, 9}, "example-5-1", 59)};
}

inline Json fixture_to_json(const Fixture& f) {
  return Json{{"name", f.name}, {"site", site_to_json(*f.site)}, {"program", program_to_json(f.program)},
              {"input_data", f.input}, {"cap", f.cap}};
}

inline Fixture fixture_from_json(const Json& j) {
  Fixture f;
  f.name = j.at("name").get<std::string>();
  f.site = std::make_shared<const SiteSpec>(site_from_json(j.at("site")));
  f.program = program_from_json(j.at("program"));
  if (j.contains("input_data")) f.input = j.at("input_data");
  if (j.contains("cap")) f.cap = j.at("cap").get<std::size_t>();
  return f;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline Json read_json(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), e.byte);
  }
}

// Writes <name>.fixture.json and <name>.trace.json for every fixture.
inline std::vector<std::filesystem::path> write_fixture_suite(const std::vector<Fixture>& fs,
                                                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (const auto& f : fs) {
    auto fx = dir / (f.name + ".fixture.json");
    auto tr = dir / (f.name + ".trace.json");
    write_text(fx, fixture_to_json(f).dump(1) + "\n");
    write_text(tr, recording_to_json(record_ground_truth(f.program, f.site, f.input, f.cap)).dump() + "\n");
    out.push_back(fx);
    out.push_back(tr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmarks

// 1-based index of the action that starts the second iteration of each loop
// (first instance to get that far); the maximum over loops, 0 if none.
inline std::size_t generalization_point(const Program& p, const Recording& r) {
  std::map<const Stmt*, std::size_t> second;
  Interpreter in(r.doms, 0, r.doms.size(), r.input, [](const Action&, std::size_t) { return true; });
  in.on_iteration([&](const Stmt& s, int it, std::size_t pos) {
    if (it == 2 && !second.count(&s)) second[&s] = pos + 1;
  });
  Env env;
  in.run(p, env);
  std::size_t k = 0;
  for (const auto& [s, at] : second) k = std::max(k, at);
  return k;
}

struct PrefixTest {
  std::size_t k = 0;
  bool timed_out = false;
  bool correct = false;
  bool intended = false;
  double ms = 0;
  std::size_t programs = 0;
  std::size_t predictions = 0;
};

struct BenchmarkReport {
  std::string name;
  std::size_t actions = 0;
  std::size_t tests = 0;
  std::size_t correct = 0;
  double accuracy = 0;
  std::size_t generalization_k = 0;  // first prefix length with every loop's 2nd iteration begun
  std::size_t wrong_after_generalization = 0;
  std::size_t timeouts = 0;
  double q1_ms = 0, median_ms = 0, q3_ms = 0, max_ms = 0, mean_ms = 0, total_ms = 0;
  bool intended = false;
  std::size_t intended_first_k = 0;  // 0 if never
  std::vector<PrefixTest> per_test;
};

struct BenchmarkOptions {
  SynthOptions synth;
  bool incremental = true;
  std::size_t intended_check_limit = 32;  // ranked programs checked per prefix
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(pos);
  auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

// Equal-length, pointwise consistent executions on the full DOM trace.
inline bool same_behaviour(const Program& p, const ActionTrace& expect, const Recording& r) {
  try {
    auto got = execute(p, r.doms, r.input, Deadline::in(std::chrono::milliseconds(200))).actions;
    return got.size() == expect.size() && trace_consistent(got, expect, r.doms);
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

inline BenchmarkReport run_prefix_benchmark(const std::string& name, const Recording& r,
                                            const Program* ground_truth = nullptr,
                                            const BenchmarkOptions& opt = {}) {
  if (r.doms.size() != r.actions.size() + 1) throw std::invalid_argument("need |pi| = |A| + 1");
  BenchmarkReport rep;
  rep.name = name;
  rep.actions = r.actions.size();
  ActionTrace expect;
  if (ground_truth) {
    expect = execute(*ground_truth, r.doms, r.input).actions;
    rep.generalization_k = generalization_point(*ground_truth, r);
  }
  std::shared_ptr<SynthState> state;
  std::vector<double> times;
  for (std::size_t k = 1; k < r.actions.size(); ++k) {
    ActionTrace A(r.actions.begin(), r.actions.begin() + static_cast<std::ptrdiff_t>(k));
    DomTrace pi(r.doms.begin(), r.doms.begin() + static_cast<std::ptrdiff_t>(k + 1));
    if (!opt.incremental) state.reset();
    auto t0 = Clock::now();
    auto res = synthesize(A, pi, r.input, opt.synth, &state);
    double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    PrefixTest t;
    t.k = k;
    t.ms = ms;
    t.timed_out = res.stats.timed_out;
    t.programs = res.programs.size();
    t.predictions = res.predictions.size();
    for (const auto& p : res.predictions)
      if (actions_consistent(p.action, r.actions[k], *r.doms[k])) t.correct = true;
    if (ground_truth) {
      std::size_t n = std::min(res.programs.size(), opt.intended_check_limit);
      for (std::size_t i = 0; i < n && !t.intended; ++i)
        t.intended = detail::same_behaviour(res.programs[i], expect, r);
    }
    if (t.correct) ++rep.correct;
    if (t.timed_out) {
      ++rep.timeouts;
    } else {
      times.push_back(ms);
    }
    if (rep.generalization_k && k >= rep.generalization_k && !t.correct) ++rep.wrong_after_generalization;
    if (t.intended && !rep.intended_first_k) rep.intended_first_k = k;
    rep.total_ms += ms;
    rep.per_test.push_back(t);
  }
  rep.tests = rep.per_test.size();
  rep.accuracy = rep.tests ? static_cast<double>(rep.correct) / static_cast<double>(rep.tests) : 0.0;
  rep.intended = !rep.per_test.empty() && rep.per_test.back().intended;
  rep.q1_ms = detail::quantile(times, 0.25);
  rep.median_ms = detail::quantile(times, 0.5);
  rep.q3_ms = detail::quantile(times, 0.75);
  rep.max_ms = times.empty() ? 0 : *std::max_element(times.begin(), times.end());
  rep.mean_ms = rep.tests ? rep.total_ms / static_cast<double>(rep.tests) : 0;
  return rep;
}

inline Json report_to_json(const BenchmarkReport& r) {
  Json j{{"name", r.name},
         {"actions", r.actions},
         {"tests", r.tests},
         {"correct", r.correct},
         {"accuracy", r.accuracy},
         {"generalization_k", r.generalization_k},
         {"wrong_after_generalization", r.wrong_after_generalization},
         {"timeouts", r.timeouts},
         {"time_ms", {{"q1", r.q1_ms}, {"median", r.median_ms}, {"q3", r.q3_ms}, {"max", r.max_ms},
                      {"mean", r.mean_ms}, {"total", r.total_ms}}},
         {"intended", r.intended},
         {"intended_first_k", r.intended_first_k}};
  Json tests = Json::array();
  for (const auto& t : r.per_test)
    tests.push_back({{"k", t.k}, {"correct", t.correct}, {"intended", t.intended}, {"timed_out", t.timed_out},
                     {"ms", t.ms}, {"programs", t.programs}, {"predictions", t.predictions}});
  j["per_test"] = tests;
  return j;
}

inline std::string report_table(const std::vector<BenchmarkReport>& rs) {
  std::ostringstream o;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %5s %5s %8s %6s %6s %8s %8s %8s %8s %8s\n", "benchmark", "|A|",
                "k*", "accuracy", "wrong*", "t/o", "q1 ms", "med ms", "q3 ms", "intended", "first k");
  o << line;
  for (const auto& r : rs) {
    std::snprintf(line, sizeof line, "%-18s %5zu %5zu %8.3f %6zu %6zu %8.2f %8.2f %8.2f %8s %8zu\n",
                  r.name.c_str(), r.actions, r.generalization_k, r.accuracy, r.wrong_after_generalization,
                  r.timeouts, r.q1_ms, r.median_ms, r.q3_ms, r.intended ? "yes" : "no", r.intended_first_k);
    o << line;
  }
  return o.str();
}

}  // namespace rpa
