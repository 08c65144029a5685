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

// Demonstration / authorization / automation sessions over a simulated site.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rpa/harness.hpp"

namespace rpa {

enum class Phase { Demonstration, Authorization, Automation };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Demonstration: return "Demonstration";
    case Phase::Authorization: return "Authorization";
    case Phase::Automation: return "Automation";
  }
  return "?";
}

// Carries an HTTP-style status: 400 malformed, 404 unknown, 409 conflict.
struct ServiceError : std::runtime_error {
  int status;
  ServiceError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

struct ServiceConfig {
  std::map<std::string, Fixture> fixtures;
  std::string default_fixture;
  SynthOptions synth;
  bool incremental = true;
  int agree_threshold = 2;  // consecutive unanimous accepts before automation
};

class SessionService {
 public:
  explicit SessionService(ServiceConfig cfg) : cfg_(std::move(cfg)) {}

  const ServiceConfig& config() const { return cfg_; }

  // body: {"fixture"?: name, "input_data"?: object}
  Json create(const Json& body) {
    std::string name = body.value("fixture", cfg_.default_fixture);
    auto it = cfg_.fixtures.find(name);
    if (it == cfg_.fixtures.end()) throw ServiceError(404, "unknown fixture '" + name + "'");
    InputData data = body.contains("input_data") ? body.at("input_data") : it->second.input;
    auto s = std::make_shared<State>(it->second.site, data);
    s->fixture = name;
    s->events.push_back(Json{{"event", "create"}, {"fixture", name}, {"input_data", data}});
    std::lock_guard<std::mutex> g(mu_);
    int id = ++next_id_;
    s->id = id;
    sessions_[id] = s;
    return describe(*s);
  }

  Json demonstrate(int id, const Json& body) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    Action a = parse_action(body.contains("action") ? body.at("action") : body);
    perform(*s, a);
    s->events.push_back(Json{{"event", "demonstrate"}, {"action", action_to_json(a)}});
    s->agree = 0;
    s->phase = s->last.predictions.empty() ? Phase::Demonstration : Phase::Authorization;
    return describe(*s);
  }

  Json predictions(int id) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    return describe(*s);
  }

  // body: {"prediction_id": n}
  Json accept(int id, const Json& body) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    if (s->phase != Phase::Authorization) throw ServiceError(409, "no predictions awaiting approval");
    if (!body.contains("prediction_id") || !body.at("prediction_id").is_number_integer())
      throw ServiceError(400, "accept needs an integer prediction_id");
    auto k = body.at("prediction_id").get<long long>();
    if (k < 0 || k >= static_cast<long long>(s->last.predictions.size()))
      throw ServiceError(404, "unknown prediction " + std::to_string(k));
    const Prediction pred = s->last.predictions[static_cast<std::size_t>(k)];
    const bool unanimous = s->last.predictions.size() == 1;
    Program producer = producing_program(*s, pred);
    perform(*s, pred.action);
    s->events.push_back(Json{{"event", "accept"}, {"prediction_id", k}});
    bool still = satisfies(producer, s->rec.actions, s->rec.doms, s->rec.input);
    s->agree = unanimous ? s->agree + 1 : 0;
    if (s->last.predictions.empty()) {
      s->phase = Phase::Demonstration;
    } else if (s->agree >= cfg_.agree_threshold) {
      s->phase = Phase::Automation;
    } else {
      s->phase = Phase::Authorization;
    }
    Json out = describe(*s);
    out["accepted_program_consistent"] = still;
    return out;
  }

  Json reject(int id) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    s->events.push_back(Json{{"event", "reject"}});
    s->rejected = true;
    s->agree = 0;
    s->phase = Phase::Demonstration;
    return describe(*s);
  }

  // body: {"step_limit"?: n}. Runs the top-ranked program's next action until
  // it has none, it is not applicable on the page, or the limit is reached.
  Json automate(int id, const Json& body) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    long long limit = body.value("step_limit", 500LL);
    if (limit < 0) throw ServiceError(400, "step_limit must be non-negative");
    s->events.push_back(Json{{"event", "auto"}, {"step_limit", limit}});
    s->phase = Phase::Automation;
    s->rejected = false;
    Json performed = Json::array();
    std::string stop = "limit";
    for (long long n = 0; n < limit; ++n) {
      if (s->last.predictions.empty()) {
        stop = "no_prediction";
        break;
      }
      const Action a = s->last.predictions.front().action;
      if (has_selector(a.kind) && !valid(a.selector, *s->browser.page())) {
        stop = "divergence";
        break;
      }
      try {
        perform(*s, a);
      } catch (const ServiceError&) {
        stop = "error";
        break;
      }
      performed.push_back(action_to_json(a));
    }
    s->phase = stop == "limit" && !s->last.predictions.empty() ? Phase::Automation : Phase::Demonstration;
    Json out = describe(*s);
    out["performed"] = performed;
    out["stopped"] = stop;
    return out;
  }

  Json program(int id) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    if (s->last.programs.empty()) throw ServiceError(404, "no program synthesized yet");
    return Json{{"program", program_to_json(s->last.programs.front())},
                {"pretty", pretty(s->last.programs.front())}};
  }

  Json page(int id) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    Json j = tree_to_json(*s->browser.page());
    j["page_id"] = s->browser.page_id();
    return j;
  }

  Json events(int id) {
    auto s = get(id);
    std::lock_guard<std::mutex> g(s->mu);
    return s->events;
  }

  // Re-creates a session from its event log; returns the new session's state.
  Json replay(const Json& log) {
    if (!log.is_array() || log.empty() || log[0].value("event", "") != "create")
      throw ServiceError(400, "event log must start with a create event");
    Json st = create(Json{{"fixture", log[0].at("fixture")}, {"input_data", log[0].at("input_data")}});
    int id = st.at("session").get<int>();
    for (std::size_t k = 1; k < log.size(); ++k) {
      const Json& e = log[k];
      std::string ev = e.value("event", "");
      if (ev == "demonstrate") st = demonstrate(id, Json{{"action", e.at("action")}});
      else if (ev == "accept") st = accept(id, Json{{"prediction_id", e.at("prediction_id")}});
      else if (ev == "reject") st = reject(id);
      else if (ev == "auto") st = automate(id, Json{{"step_limit", e.at("step_limit")}});
      else throw ServiceError(400, "unknown event '" + ev + "'");
    }
    return st;
  }

 private:
  struct State {
    State(std::shared_ptr<const SiteSpec> site, InputData data) : browser(std::move(site), data) {
      rec.input = std::move(data);
      rec.doms.push_back(browser.page());
    }
    int id = 0;
    std::string fixture;
    std::mutex mu;
    Phase phase = Phase::Demonstration;
    Session browser;
    Recording rec;
    std::shared_ptr<SynthState> synth;
    SynthResult last;
    int agree = 0;
    bool rejected = false;
    Json events = Json::array();
    std::vector<std::string> outputs;  // texts scraped so far
  };

  std::shared_ptr<State> get(int id) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "unknown session " + std::to_string(id));
    return it->second;
  }

  static Action parse_action(const Json& j) {
    try {
      return action_from_json(j);
    } catch (const std::exception& e) {
      throw ServiceError(400, std::string("malformed action: ") + e.what());
    }
  }

  // Validates a on the current page, applies it, extends the trace and
  // re-synthesizes.
  void perform(State& s, const Action& a) {
    const DomTree& cur = *s.browser.page();
    std::optional<NodeId> n;
    if (has_selector(a.kind)) {
      n = resolve_selector(a.selector, cur);
      if (!n) throw ServiceError(409, "selector " + to_string(a.selector) + " matches nothing on the current page");
    }
    if (a.kind == ActionKind::EnterData && !lookup_value(s.rec.input, a.value_path.steps))
      throw ServiceError(409, "value path " + to_string(a.value_path) + " is not in the input data");
    try {
      s.browser.apply(a);
    } catch (const SessionError& e) {
      throw ServiceError(409, e.what());
    }
    if (a.kind == ActionKind::ScrapeText) s.outputs.push_back(cur.text_content(*n));
    s.rec.actions.push_back(a);
    s.rec.doms.push_back(s.browser.page());
    if (!cfg_.incremental) s.synth.reset();
    s.rejected = false;
    s.last = synthesize(s.rec.actions, s.rec.doms, s.rec.input, cfg_.synth, &s.synth);
  }

  static Program producing_program(const State& s, const Prediction& p) {
    for (const auto& prog : s.last.programs)
      if (canonical_form(prog) == p.program_key) return prog;
    return s.last.programs.empty() ? Program{} : s.last.programs.front();
  }

  Json describe(const State& s) const {
    Json preds = Json::array();
    if (!s.rejected) {
      for (std::size_t k = 0; k < s.last.predictions.size(); ++k) {
        const auto& p = s.last.predictions[k];
        Json j{{"id", k}, {"action", action_to_json(p.action)}};
        j["target"] = p.target ? Json(*p.target) : Json(nullptr);
        j["program"] = program_to_json(producing_program(s, p));
        preds.push_back(std::move(j));
      }
    }
    Json outs = Json::array();
    for (const auto& o : s.outputs) outs.push_back(o);
    return Json{{"session", s.id},
                {"fixture", s.fixture},
                {"phase", phase_name(s.phase)},
                {"trace_length", s.rec.actions.size()},
                {"actions", trace_to_json(s.rec.actions)},
                {"predictions", preds},
                {"outputs", outs}};
  }

  ServiceConfig cfg_;
  std::mutex mu_;
  int next_id_ = 0;
  std::map<int, std::shared_ptr<State>> sessions_;
};

}  // namespace rpa
