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

#include "rpa/service.hpp"

namespace rpa {
namespace {

ServiceConfig config() {
  ServiceConfig c;
  for (auto& f : generate_fixture_suite(7)) c.fixtures[f.name] = f;
  c.default_fixture = "store-locator";
  return c;
}

Recording truth(const ServiceConfig& c, const std::string& name) {
  const Fixture& f = c.fixtures.at(name);
  return record_ground_truth(f.program, f.site, f.input, f.cap);
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status;
  }
  return 200;
}

// Index of the prediction consistent with `want` on the current page, or -1.
int matching(const Json& state, const Action& want, const DomTree& page) {
  for (const auto& p : state["predictions"])
    if (actions_consistent(action_from_json(p["action"]), want, page)) return p["id"].get<int>();
  return -1;
}

struct StoreSession : ::testing::Test {
  ServiceConfig cfg = config();
  SessionService svc{cfg};
  Recording rec = truth(cfg, "store-locator");
  int id = 0;
  Json st;

  void SetUp() override {
    st = svc.create(Json::object());
    id = st["session"].get<int>();
    for (std::size_t k = 0; k < 6; ++k) st = svc.demonstrate(id, Json{{"action", action_to_json(rec.actions[k])}});
  }
};

TEST_F(StoreSession, SixDemonstrationsPredictTheThirdStore) {
  EXPECT_EQ(st["trace_length"], 6);
  EXPECT_EQ(st["phase"], "Authorization");
  int k = matching(st, rec.actions[6], *rec.doms[6]);
  ASSERT_GE(k, 0);
  const Json& p = st["predictions"][static_cast<std::size_t>(k)];
  EXPECT_EQ(p["target"], *resolve_selector(rec.actions[6].selector, *rec.doms[6]));
  EXPECT_FALSE(p["program"].empty());

  st = svc.accept(id, Json{{"prediction_id", k}});
  EXPECT_EQ(st["trace_length"], 7);
  EXPECT_TRUE(st["accepted_program_consistent"].get<bool>());
  EXPECT_GE(matching(st, rec.actions[7], *rec.doms[7]), 0);
  EXPECT_EQ(svc.program(id)["program"].size(), 3u);
}

TEST_F(StoreSession, UnanimousAcceptStreakStartsAutomation) {
  int streak = 0;
  bool reached = false;
  for (std::size_t k = 6; k + 1 < rec.actions.size() && !reached; ++k) {
    ASSERT_EQ(st["phase"], "Authorization");
    bool unanimous = st["predictions"].size() == 1;
    int pick = matching(st, rec.actions[k], *rec.doms[k]);
    ASSERT_GE(pick, 0) << "step " << k;
    st = svc.accept(id, Json{{"prediction_id", pick}});
    streak = unanimous ? streak + 1 : 0;
    reached = streak >= 2;
    EXPECT_EQ(st["phase"] == "Automation", reached) << "step " << k;
  }
  EXPECT_TRUE(reached);
}

TEST_F(StoreSession, AutomationScrapesTheRemainingStores) {
  st = svc.automate(id, Json{{"step_limit", 100}});
  EXPECT_EQ(st["stopped"], "no_prediction");
  EXPECT_EQ(st["trace_length"], rec.actions.size());
  Json want = Json::array();
  for (std::size_t k = 0; k < rec.actions.size(); ++k)
    if (rec.actions[k].kind == ActionKind::ScrapeText)
      want.push_back(rec.doms[k]->text_content(*resolve_selector(rec.actions[k].selector, *rec.doms[k])));
  EXPECT_EQ(st["outputs"], want);
  EXPECT_EQ(want.size(), 10u);
}

TEST_F(StoreSession, StepLimitStopsAutomation) {
  st = svc.automate(id, Json{{"step_limit", 2}});
  EXPECT_EQ(st["stopped"], "limit");
  EXPECT_EQ(st["performed"].size(), 2u);
  EXPECT_EQ(st["trace_length"], 8);
}

TEST_F(StoreSession, RejectThenDemonstrateSomethingElse) {
  st = svc.reject(id);
  EXPECT_EQ(st["phase"], "Demonstration");
  EXPECT_TRUE(st["predictions"].empty());
  EXPECT_EQ(status_of([&] { svc.accept(id, Json{{"prediction_id", 0}}); }), 409);
  // scrape the phone first this time
  Action alt = rec.actions[7];
  st = svc.demonstrate(id, Json{{"action", action_to_json(alt)}});
  EXPECT_EQ(st["trace_length"], 7);
  EXPECT_EQ(st["actions"].back(), action_to_json(alt));
}

TEST_F(StoreSession, Errors) {
  EXPECT_EQ(status_of([&] {
              svc.demonstrate(id, Json{{"action", {{"kind", "Click"}, {"selector", "//table[1]"}}}});
            }),
            409);
  EXPECT_EQ(status_of([&] {
              svc.demonstrate(id, Json{{"action", {{"kind", "EnterData"}, {"selector", "//input[1]"},
                                                   {"value_path", "x['nope'][1]"}}}});
            }),
            409);
  EXPECT_EQ(status_of([&] { svc.demonstrate(id, Json{{"action", {{"kind", "Hover"}}}}); }), 400);
  EXPECT_EQ(status_of([&] { svc.predictions(999); }), 404);
  EXPECT_EQ(status_of([&] { svc.accept(id, Json{{"prediction_id", 99}}); }), 404);
  EXPECT_EQ(status_of([&] { svc.accept(id, Json{{"prediction_id", "x"}}); }), 400);
  EXPECT_EQ(status_of([&] { svc.create(Json{{"fixture", "nope"}}); }), 404);
  EXPECT_EQ(status_of([&] { svc.automate(id, Json{{"step_limit", -1}}); }), 400);
  // failed requests leave the trace alone
  EXPECT_EQ(svc.predictions(id)["trace_length"], 6);
}

TEST_F(StoreSession, ReplayReproducesTheSession) {
  svc.accept(id, Json{{"prediction_id", 0}});
  svc.reject(id);
  svc.demonstrate(id, Json{{"action", action_to_json(rec.actions[7])}});
  svc.automate(id, Json{{"step_limit", 3}});
  Json log = svc.events(id);
  Json a = svc.predictions(id);
  Json b = svc.replay(log);
  EXPECT_NE(a["session"], b["session"]);
  int other = b["session"].get<int>();
  b = svc.predictions(other);
  a.erase("session");
  b.erase("session");
  EXPECT_EQ(a, b);
  EXPECT_EQ(svc.events(other), log);
}

TEST(Service, PageReflectsEnteredData) {
  ServiceConfig cfg = config();
  SessionService svc(cfg);
  int id = svc.create(Json{{"fixture", "form-entry"}})["session"].get<int>();
  EXPECT_EQ(svc.page(id)["page_id"], "form");
  svc.demonstrate(id, Json{{"kind", "EnterData"}, {"selector", "//input[@id='name'][1]"},
                           {"value_path", "x['rows'][1]['name']"}});
  auto page = svc.page(id);
  auto t = tree_from_json(page);
  auto n = resolve_selector(parse_selector("//input[@id='name'][1]"), *t);
  EXPECT_EQ(t->text_content(*n), cfg.fixtures.at("form-entry").input["rows"][0]["name"]);
  EXPECT_EQ(status_of([&] { svc.program(id); }), 404);
}

TEST(Service, CustomInputData) {
  SessionService svc(config());
  Json st = svc.create(Json{{"fixture", "three-level"}, {"input_data", {{"zips", {"94103"}}}}});
  int id = st["session"].get<int>();
  svc.demonstrate(id, Json{{"kind", "EnterData"}, {"selector", "//input[1]"}, {"value_path", "x['zips'][1]"}});
  st = svc.demonstrate(id, Json{{"kind", "Click"}, {"selector", "//button[1]"}});
  EXPECT_EQ(svc.page(id)["page_id"], "res-94103-1");
}

}  // namespace
}  // namespace rpa
