#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "dctl/error.hpp"
#include "dctl/evaluation.hpp"
#include "dctl/runtime.hpp"
#include "dctl/service.hpp"

namespace {

struct Common {
  std::string config;
  std::string provider;
  std::string domains;
  std::string script;
  std::string state_dir;
};

dctl::RuntimeConfig build_config(const Common& c) {
  dctl::RuntimeConfig cfg = c.config.empty() ? dctl::RuntimeConfig{} : dctl::RuntimeConfig::load(c.config);
  if (!c.provider.empty()) {
    auto kind = dctl::provider_kind_from_string(c.provider);
    if (!kind) throw dctl::Error(dctl::ErrorCode::InvalidArgument, "unknown provider '" + c.provider + "'");
    cfg.provider.kind = *kind;
  }
  if (!c.script.empty()) cfg.provider.script_path = c.script;
  if (!c.domains.empty()) cfg.domains_dir = c.domains;
  if (!c.state_dir.empty()) cfg.state_dir = c.state_dir;
  return cfg;
}

dctl::HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

int exit_code_for(const dctl::Error& e) { return e.code() == dctl::ErrorCode::ScriptMiss ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dctl: factored dialogue controller"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Runtime configuration file (JSON)");
  app.add_option("--provider", common.provider, "scripted | remote | heuristic");
  app.add_option("--domains", common.domains, "Directory of domain manifests");
  app.add_option("--script", common.script, "JSON-lines script for the scripted provider");
  app.add_option("--state-dir", common.state_dir, "Directory for traces and session state");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string address;
  int port = -1;
  serve->add_option("--address", address, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");

  auto* repl = app.add_subcommand("repl", "Interactive terminal session");
  std::string repl_session;
  repl->add_option("--session", repl_session, "Session id to create or resume");

  auto* eval = app.add_subcommand("eval", "Run module-level fixture suites");
  std::string fixtures;
  std::string out_dir = "eval_report";
  eval->add_option("--fixtures", fixtures, "Fixture directory")->required();
  eval->add_option("--out", out_dir, "Directory for report.json and report.txt");

  auto* rep = app.add_subcommand("replay", "Re-run a recorded session and compare");
  std::string replay_session;
  std::string replay_trace;
  rep->add_option("--session", replay_session, "Session id under the state directory");
  rep->add_option("--trace", replay_trace, "Trace file to replay instead of a stored session");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*eval) {
      dctl::RuntimeConfig cfg = build_config(common);
      if (common.provider.empty() && common.config.empty()) cfg.provider.kind = dctl::ProviderKind::Scripted;
      if (cfg.provider.kind == dctl::ProviderKind::Scripted && !cfg.provider.script_path) {
        cfg.provider.script_path = std::filesystem::path(fixtures) / "script.jsonl";
      }
      cfg.state_dir.clear();
      dctl::Runtime rt(cfg);
      dctl::MetricReport report = dctl::run_suite(fixtures, rt.domains(), rt.adapters(), rt.gateway());
      std::filesystem::create_directories(out_dir);
      std::ofstream(std::filesystem::path(out_dir) / "report.json") << report.to_json().dump(2) << '\n';
      std::string table = report.to_table();
      std::ofstream(std::filesystem::path(out_dir) / "report.txt") << table;
      std::cout << table;
      return 0;
    }

    if (*rep) {
      dctl::RuntimeConfig cfg = build_config(common);
      std::vector<nlohmann::json> records;
      std::string sid = replay_session;
      if (!replay_trace.empty()) {
        records = dctl::read_trace_file(replay_trace);
        if (sid.empty() && !records.empty()) sid = records.front().value("session_id", std::string{"replay"});
      } else if (!replay_session.empty() && !cfg.state_dir.empty()) {
        records = dctl::read_trace_file(cfg.state_dir / "traces" / (replay_session + ".ndjson"));
      } else {
        std::cerr << "replay needs --trace, or --session with a state directory\n";
        return 1;
      }
      cfg.state_dir.clear();
      dctl::Runtime rt(cfg);
      dctl::ReplayReport r = rt.replay_records(records, sid);
      if (r.identical) {
        std::cout << "identical (" << r.turns << " turns)\n";
        return 0;
      }
      std::cout << "diverged at turn " << *r.divergent_turn << ": " << r.detail << "\n";
      return r.detail.starts_with("ScriptMiss") ? 2 : 1;
    }

    dctl::RuntimeConfig cfg = build_config(common);
    if (*serve) {
      if (!address.empty()) cfg.listen_address = address;
      if (port >= 0) cfg.port = port;
      dctl::Runtime rt(cfg);
      dctl::HttpService svc(rt);
      int bound = svc.bind(cfg.listen_address, cfg.port);
      std::cout << "listening on " << cfg.listen_address << ":" << bound << std::endl;
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      svc.serve();
      g_service = nullptr;
      return 0;
    }

    if (*repl) {
      dctl::Runtime rt(cfg);
      std::string sid = rt.create_session(repl_session);
      std::cout << "session " << sid << " (:trace, :memory, :quit)\n";
      dctl::run_repl(rt, sid, std::cin, std::cout);
      return 0;
    }
  } catch (const dctl::Error& e) {
    std::cerr << "error [" << dctl::to_string(e.code()) << "]: " << e.what() << "\n";
    for (const auto& i : e.issues()) std::cerr << "  " << i.field << ": " << i.reason << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
