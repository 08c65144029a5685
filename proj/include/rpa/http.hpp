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

// HTTP binding of SessionService (JSON bodies, one resource per session).

#pragma once

#include <httplib.h>

#include <string>

#include "rpa/service.hpp"

namespace rpa {

namespace detail {

inline void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, 200, f());
  } catch (const ServiceError& e) {
    reply(res, e.status, Json{{"error", e.what()}});
  } catch (const Json::exception& e) {
    reply(res, 400, Json{{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, Json{{"error", e.what()}});
  }
}

inline Json body_of(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ServiceError(400, std::string("malformed JSON body: ") + e.what());
  }
}

inline int session_id(const httplib::Request& req) {
  try {
    return std::stoi(req.matches[1].str());
  } catch (const std::exception&) {
    throw ServiceError(404, "unknown session " + req.matches[1].str());
  }
}

}  // namespace detail

inline void bind_routes(httplib::Server& srv, SessionService& svc) {
  using detail::guarded;
  srv.Post("/sessions", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.create(detail::body_of(q)); });
  });
  srv.Post(R"(/sessions/(\d+)/demonstrate)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.demonstrate(detail::session_id(q), detail::body_of(q)); });
  });
  srv.Get(R"(/sessions/(\d+)/predictions)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.predictions(detail::session_id(q)); });
  });
  srv.Post(R"(/sessions/(\d+)/accept)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.accept(detail::session_id(q), detail::body_of(q)); });
  });
  srv.Post(R"(/sessions/(\d+)/reject)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.reject(detail::session_id(q)); });
  });
  srv.Post(R"(/sessions/(\d+)/auto)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.automate(detail::session_id(q), detail::body_of(q)); });
  });
  srv.Get(R"(/sessions/(\d+)/program)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.program(detail::session_id(q)); });
  });
  srv.Get(R"(/sessions/(\d+)/page)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.page(detail::session_id(q)); });
  });
  srv.Get(R"(/sessions/(\d+)/events)", [&](const httplib::Request& q, httplib::Response& r) {
    guarded(r, [&] { return svc.events(detail::session_id(q)); });
  });
}

}  // namespace rpa
