#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "dctl/runtime.hpp"

namespace dctl {

/// JSON API over a Runtime:
///   POST /api/sessions, POST /api/turn, GET /api/sessions/{id}/memory[?search=..&k=..],
///   GET /api/sessions/{id}/trace/{turn}, GET /api/domains
class HttpService {
 public:
  explicit HttpService(Runtime& rt);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& address, int port);
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Line-oriented loop. `:trace`, `:memory`, `:quit`; blank lines are ignored.
void run_repl(Runtime& rt, const std::string& session_id, std::istream& in, std::ostream& out,
              bool prompt = true);

/// Text shown for one turn in the REPL.
std::string format_turn(const TurnRecord& rec);

}  // namespace dctl
