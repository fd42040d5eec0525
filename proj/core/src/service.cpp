#include "dctl/service.hpp"

#include <httplib.h>

#include <iostream>
#include <regex>

#include "dctl/error.hpp"

namespace dctl {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_header("Access-Control-Allow-Origin", "*");
  res.set_content(body.dump(), "application/json");
}

json error_body(std::string_view code, const std::string& msg) { return {{"error", code}, {"message", msg}}; }

}  // namespace

struct HttpService::Impl {
  explicit Impl(Runtime& r) : rt(r) {}
  Runtime& rt;
  httplib::Server server;
  void routes();
};

void HttpService::Impl::routes() {
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.status = 204;
  });

  server.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    std::string id;
    if (!req.body.empty()) {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) return send_json(res, 400, error_body("ParseError", "malformed body"));
      if (body.contains("session_id")) {
        if (!body["session_id"].is_string()) {
          return send_json(res, 400, error_body("SchemaViolation", "session_id must be a string"));
        }
        id = body["session_id"].get<std::string>();
      }
    }
    try {
      id = rt.create_session(id);
    } catch (const Error& e) {
      return send_json(res, 400, error_body(to_string(e.code()), e.what()));
    }
    send_json(res, 201, {{"session_id", id}});
  });

  server.Post("/api/turn", [this](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("session_id") || !body["session_id"].is_string() ||
        !body.contains("text") || !body["text"].is_string()) {
      return send_json(res, 400, error_body("ParseError", "expected {session_id, text}"));
    }
    std::string sid = body["session_id"].get<std::string>();
    if (!rt.has_session(sid)) return send_json(res, 404, error_body("UnknownSession", "unknown session " + sid));
    TurnRecord rec = rt.run_turn(sid, body["text"].get<std::string>());
    int status = rec.error && rec.error->code == to_string(ErrorCode::TransportError) ? 503 : 200;
    send_json(res, status, rec.to_response());
  });

  server.Get(R"(/api/sessions/([^/]+)/memory)", [this](const httplib::Request& req, httplib::Response& res) {
    std::string sid = req.matches[1];
    if (!rt.has_session(sid)) return send_json(res, 404, error_body("UnknownSession", "unknown session " + sid));
    json body = rt.memory_snapshot(sid).to_json();
    if (req.has_param("search")) {
      std::size_t k = rt.config().budgets.k;
      if (req.has_param("k")) {
        try {
          k = static_cast<std::size_t>(std::stoul(req.get_param_value("k")));
        } catch (const std::exception&) {
          return send_json(res, 400, error_body("ParseError", "k must be a non-negative integer"));
        }
      }
      json hits = json::array();
      for (const auto& r : rt.search_memory(sid, req.get_param_value("search"), k)) {
        json item = r.item.to_json();
        item.erase("embedding");
        hits.push_back({{"item", item}, {"similarity", r.similarity}});
      }
      body["search"] = hits;
    }
    send_json(res, 200, body);
  });

  server.Get(R"(/api/sessions/([^/]+)/trace/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::string sid = req.matches[1];
    if (!rt.has_session(sid)) return send_json(res, 404, error_body("UnknownSession", "unknown session " + sid));
    auto rec = rt.trace(sid, std::stoull(std::string{req.matches[2]}));
    if (!rec) return send_json(res, 404, error_body("UnknownTurn", "unknown turn"));
    send_json(res, 200, *rec);
  });

  server.Get("/api/domains", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& m : rt.domains().manifests()) {
      out.push_back({{"id", m->domain_id}, {"description", m->description}, {"tasks", m->task_list()}});
    }
    out.push_back({{"id", kOutOfScope}, {"description", "Fallback domain selected when no other domain matches the request."},
                   {"tasks", json::array()}});
    send_json(res, 200, out);
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_json(res, 400, error_body(to_string(e.code()), e.what()));
    } catch (const std::exception& e) {
      send_json(res, 500, error_body("Internal", e.what()));
    }
  });
}

HttpService::HttpService(Runtime& rt) : impl_(std::make_unique<Impl>(rt)) { impl_->routes(); }

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& address, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(address) : (impl_->server.bind_to_port(address, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + address + ":" + std::to_string(port));
  return bound;
}

void HttpService::serve() { impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

// ---------------------------------------------------------------------------

std::string format_turn(const TurnRecord& rec) {
  std::string out = rec.response.rendered_text + "\n";
  for (const auto& e : rec.evidence) out += "  [" + e.id + "] " + e.caption + "\n";
  if (rec.error) out += "  (" + rec.error->code + " in " + rec.error->stage + ": " + rec.error->message + ")\n";
  return out;
}

void run_repl(Runtime& rt, const std::string& session_id, std::istream& in, std::ostream& out, bool prompt) {
  std::optional<TurnRecord> last;
  std::string line;
  while (true) {
    if (prompt) out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line == ":quit") break;
    if (line == ":trace") {
      out << (last ? last->to_json().dump(2) : std::string{"no turns yet"}) << "\n";
      continue;
    }
    if (line == ":memory") {
      json m = rt.memory_snapshot(session_id).to_json();
      for (auto& a : m["A"]) a.erase("embedding");
      out << m.dump(2) << "\n";
      continue;
    }
    try {
      last = rt.run_turn(session_id, line);
      out << format_turn(*last);
    } catch (const std::exception& e) {
      out << "error: " << e.what() << "\n";
    }
  }
}

}  // namespace dctl
