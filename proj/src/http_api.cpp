#include "twb/http_api.hpp"

#include <charconv>

#include <httplib.h>

namespace twb {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, const Json& doc, int status = 200) {
  res.status = status;
  res.set_content(to_text(doc), kJson);
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, error_body(code, message), http_status_for(code));
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("request body is not JSON: ") + e.what());
  }
}

std::optional<std::size_t> size_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  std::string text = req.get_param_value(name);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be a non-negative integer");
  }
  return value;
}

FoldDelta fold_from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("node")) throw Error(ErrorCode::InvalidArgument, "fold needs a node");
  std::string text = doc["node"].is_string() ? doc["node"].get<std::string>() : doc["node"].dump();
  auto fp = Fingerprint::parse(text);
  if (!fp) throw Error(ErrorCode::InvalidArgument, "node is not a fingerprint: " + text);
  FoldDelta delta{*fp, true};
  if (doc.contains("folded")) {
    if (!doc["folded"].is_boolean()) throw Error(ErrorCode::InvalidArgument, "folded must be a boolean");
    delta.folded = doc["folded"].get<bool>();
  }
  return delta;
}

std::string require_string(const Json& body, const char* field) {
  if (!body.is_object() || !body.contains(field) || !body[field].is_string()) {
    throw Error(ErrorCode::InvalidArgument, std::string(field) + " must be a string");
  }
  return body[field].get<std::string>();
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, ErrorCode::InvalidArgument, e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::IoFailure, e.what());
    }
  };
}

const std::string kSession = "/api/sessions/([0-9A-Za-z_-]+)";
const std::string kRun = kSession + "/runs/([0-9]+)";

}  // namespace

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownRunId:
    case ErrorCode::UnknownDigest:
    case ErrorCode::UnknownRepair:
    case ErrorCode::UnknownTree:
    case ErrorCode::UnknownNode:
      return 404;
    case ErrorCode::InvalidArgument:
      return 400;
    case ErrorCode::SpecMissing:
    case ErrorCode::MissingModuleHeader:
    case ErrorCode::InvalidConfig:
    case ErrorCode::SelectionOutOfRange:
    case ErrorCode::MissingGraph:
    case ErrorCode::NoError:
      return 422;
    case ErrorCode::ConcurrentRun:
    case ErrorCode::ConcurrentRepair:
    case ErrorCode::NotAProposal:
      return 409;
    case ErrorCode::RuntimeMissing:
      return 503;
    case ErrorCode::AuthFailure:
    case ErrorCode::RateLimited:
    case ErrorCode::Unavailable:
    case ErrorCode::MalformedResponse:
    case ErrorCode::ProviderRejected:
      return 502;
    default:
      return 500;
  }
}

void mount_api(httplib::Server& server, Service& service) {
  Service* svc = &service;

  server.Post("/api/sessions", guarded([svc](const httplib::Request&, httplib::Response& res) {
                Json doc;
                doc["id"] = svc->create_session();
                send_json(res, doc);
              }));

  server.Get(kSession, guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->get_session(req.matches[1]));
             }));

  server.Put(kSession + "/spec", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               Json body = parse_body(req);
               svc->put_spec(req.matches[1], require_string(body, "spec"), require_string(body, "cfg"));
               res.status = 204;
             }));

  server.Get(kSession + "/spec", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->get_spec(req.matches[1]));
             }));

  server.Get(kSession + "/llm-settings", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->get_llm_settings(req.matches[1]));
             }));

  server.Put(kSession + "/llm-settings", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               std::string id = req.matches[1];
               svc->put_llm_settings(id, parse_body(req));
               send_json(res, svc->get_llm_settings(id));
             }));

  server.Post(kSession + "/check", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                Json body = parse_body(req);
                Json doc;
                doc["run_id"] = svc->start_check(req.matches[1], body.value("options", Json(nullptr)));
                send_json(res, doc);
              }));

  server.Get(kRun, guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->get_run(req.matches[1], req.matches[2]));
             }));

  server.Post(kRun + "/cancel", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                send_json(res, svc->cancel_run(req.matches[1], req.matches[2]));
              }));

  server.Get(kRun + "/graph", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->graph_view(req.matches[1], req.matches[2], size_param(req, "tree"),
                                              size_param(req, "depth")));
             }));

  server.Get(kRun + "/graph/raw", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->graph_document(req.matches[1], req.matches[2]));
             }));

  server.Post(kRun + "/graph/folds", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                Json body = parse_body(req);
                std::vector<FoldDelta> deltas;
                if (body.contains("folds")) {
                  if (!body["folds"].is_array()) throw Error(ErrorCode::InvalidArgument, "folds must be a list");
                  for (const auto& f : body["folds"]) deltas.push_back(fold_from_json(f));
                } else {
                  deltas.push_back(fold_from_json(body));
                }
                send_json(res, svc->apply_folds(req.matches[1], req.matches[2], deltas));
              }));

  server.Get(kRun + "/summary", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->summary(req.matches[1], req.matches[2]));
             }));

  server.Post(kSession + "/digest", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                Json doc;
                doc["digest_id"] = svc->start_digest(req.matches[1], parse_body(req));
                send_json(res, doc);
              }));

  server.Get(kSession + "/digest/([0-9]+)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->get_digest(req.matches[1], req.matches[2]));
             }));

  server.Post(kSession + "/repair", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                Json doc;
                doc["repair_id"] = svc->start_repair(req.matches[1], parse_body(req));
                send_json(res, doc);
              }));

  server.Get(kSession + "/repair/([0-9]+)", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               send_json(res, svc->get_repair(req.matches[1], req.matches[2]));
             }));

  server.Post(kSession + "/repair/([0-9]+)/accept",
              guarded([svc](const httplib::Request& req, httplib::Response& res) {
                send_json(res, svc->accept_repair(req.matches[1], req.matches[2], parse_body(req)));
              }));

  server.Post(kSession + "/repair/([0-9]+)/cancel",
              guarded([svc](const httplib::Request& req, httplib::Response& res) {
                send_json(res, svc->cancel_repair(req.matches[1], req.matches[2]));
              }));

  server.Get(kSession + "/source/location", guarded([svc](const httplib::Request& req, httplib::Response& res) {
               if (!req.has_param("action")) throw Error(ErrorCode::InvalidArgument, "action is required");
               send_json(res, svc->source_location(req.matches[1], req.get_param_value("action")));
             }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send_json(res, error_body(ErrorCode::InvalidArgument, "no such route"), 404);
  });
}

ApiServer::ApiServer(Service& service, std::string host, int port)
    : server_(std::make_unique<httplib::Server>()), host_(std::move(host)) {
  mount_api(*server_, service);
  if (port == 0) {
    port_ = server_->bind_to_any_port(host_);
  } else if (server_->bind_to_port(host_, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + host_ + ":" + std::to_string(port));
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::listen() { server_->listen_after_bind(); }

void ApiServer::stop() {
  if (server_) server_->stop();
}

}  // namespace twb
