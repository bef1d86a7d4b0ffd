#pragma once

// HTTP front end for AnnotationService. All bodies are JSON.
//
//   GET  /api/health                    {"status": "ok"}
//   GET  /api/session/{annotator}/next  next_item payload or {"done": true, ...}
//   POST /api/annotations               {"annotator_id", "transcript_id", "chosen_candidate_id"}
//                                       -> {"status": "stored" | "duplicate", "transcript_id"}
//   GET  /api/report                    human accuracy report
//
// Failures answer {"error": reason, "code": id} with 400, 404, 409 or 500, where
// id is the error enumerator name such as "unknown_item".

#include <filesystem>
#include <string>

#include <httplib.h>

#include "annotation.hpp"
#include "error.hpp"
#include "json_util.hpp"

namespace decodelab {

inline int http_status(Errc code) {
  switch (code) {
    case Errc::unknown_item: return 404;
    case Errc::rejected: return 409;
    case Errc::empty_collection: return 404;
    case Errc::format:
    case Errc::parse:
    case Errc::validation: return 400;
    default: return 500;
  }
}

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, const Error& e) {
  send_json(res, {{"error", e.what()}, {"code", errc_id(e.code())}}, http_status(e.code()));
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e);
  } catch (const std::exception& e) {
    send_json(res, {{"error", e.what()}, {"code", "internal"}}, 500);
  }
}

/// Registers every route on `server`; `ui_dir`, when it exists, is served
/// at "/".
inline void install_routes(httplib::Server& server, AnnotationService& service,
                           const std::filesystem::path& ui_dir = {}) {
  server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}});
  });
  server.Get(R"(/api/session/([^/]+)/next)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service.next_item(req.matches[1].str())); });
  });
  server.Post("/api/annotations", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_json(req.body, "request body");
      const Reader r(body, "request body");
      r.expect_object({"annotator_id", "transcript_id", "chosen_candidate_id"});
      const auto out = service.submit(r.at("annotator_id").str(), r.at("transcript_id").str(),
                                      static_cast<int>(r.at("chosen_candidate_id").integer()));
      send_json(res, {{"status", out.duplicate ? "duplicate" : "stored"}, {"transcript_id", out.record.transcript_id}});
    });
  });
  server.Get("/api/report", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service.report()); });
  });
  if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) server.set_mount_point("/", ui_dir.string());
}

}  // namespace decodelab
