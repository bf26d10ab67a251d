// Copyright 2026 The selfx Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <httplib.h>

#include "selfx/annotation.hpp"
#include "selfx/errors.hpp"

namespace selfx {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotAssigned:
      return 403;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kDuplicate:
    case ErrorCode::kStage1Incomplete:
      return 409;
    default:
      return 400;
  }
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view code,
                 const std::string& message) {
  reply(res, status, json{{"error", code}, {"message", message}});
}

// Runs `fn`, mapping library and JSON errors to HTTP responses.
template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    reply_error(res, http_status(e.code()), error_code_name(e.code()), e.what());
  } catch (const json::exception& e) {
    reply_error(res, 400, "ParseError", e.what());
  }
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationService& service;
  httplib::Server server;
  int port = -1;
  explicit Impl(AnnotationService& s) : service(s) {}
};

AnnotationServer::AnnotationServer(AnnotationService& service,
                                   std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  httplib::Server& srv = impl_->server;
  AnnotationService& svc = impl_->service;

  srv.Get(R"(/api/assignments/([^/]+))", [&svc](const httplib::Request& req,
                                                 httplib::Response& res) {
    guarded(res, [&] {
      int stage = 1;
      if (req.has_param("stage")) {
        const std::string s = req.get_param_value("stage");
        if (s != "1" && s != "2") {
          reply_error(res, 400, "Precondition", "stage must be 1 or 2");
          return;
        }
        stage = s == "1" ? 1 : 2;
      }
      reply(res, 200, svc.assignment_view(req.matches[1], stage));
    });
  });

  srv.Post("/api/annotations", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      AnnotationRecord record = body.get<AnnotationRecord>();
      const std::string id = svc.submit(std::move(record));
      reply(res, 201, json{{"record_id", id}});
    });
  });

  srv.Post("/api/verify", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const std::string record_id = body.at("record_id").get<std::string>();
      svc.verify(record_id, body.at("verifier_id").get<std::string>());
      reply(res, 200, json{{"record_id", record_id}, {"verified", true}});
    });
  });

  srv.Get("/api/progress", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, svc.progress()); });
  });

  srv.Get("/api/export", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, json(svc.export_human())); });
  });

  if (static_dir) {
    if (!srv.set_mount_point("/", static_dir->string())) {
      throw Error(ErrorCode::kConfigError, "static directory not found: " + static_dir->string());
    }
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  impl_->port = port == 0 ? impl_->server.bind_to_any_port(host)
                          : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (impl_->port < 0) {
    throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void AnnotationServer::serve() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace selfx
