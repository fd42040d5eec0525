#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/grounding.hpp"
#include "dctl/inner_speech.hpp"
#include "dctl/interpreters.hpp"
#include "dctl/memory.hpp"
#include "dctl/model_gateway.hpp"
#include "dctl/outer_speech.hpp"

namespace dctl {

struct StageTiming {
  std::string stage;
  double latency_ms = 0.0;
  Usage usage;
};

struct StageError {
  std::string stage;
  std::string code;
  std::string message;
  std::vector<FieldIssue> issues;
};

struct TurnRecord {
  std::uint64_t turn_id = 0;
  std::string session_id;
  std::int64_t timestamp_ms = 0;
  std::string utterance;
  std::string domain_before;
  std::string domain;

  std::optional<ScopeResult> scope;
  std::optional<IntentResult> intent;
  std::vector<FieldIssue> param_violations;
  /// Fields completed from memory: field -> W item id.
  json filled = json::object();
  /// θ after postprocessing plus memory fill.
  json params = json::object();
  std::optional<int> sufficiency;
  std::vector<std::string> working_context;
  std::optional<ControlDecision> decision;
  std::vector<QuerySpec> queries;
  std::vector<EvidenceItem> evidence;
  std::optional<Verdict> verdict;
  ClaimedResponse response;
  FaithfulnessReport faithfulness;
  int domain_switches = 0;
  std::optional<StageError> error;
  json memory_update = json::object();
  std::vector<StageTiming> timings;

  json to_json() const;
  /// Subset sent over the wire.
  json to_response() const;
};

/// Removes every wall-clock latency field, recursively.
json strip_latency(json j);

class Session {
 public:
  Session(std::string id, ActiveConfig cfg, Budgets budgets, const Gateway* memory_gw);

  const std::string& id() const { return id_; }
  const ActiveConfig& active_config() const { return cfg_; }
  void set_active_config(ActiveConfig cfg) { cfg_ = std::move(cfg); }
  MemoryAgent& memory() { return memory_; }
  const MemoryAgent& memory() const { return memory_; }
  std::uint64_t next_turn_index() const { return next_turn_; }
  void set_next_turn_index(std::uint64_t n) { next_turn_ = n; }

  /// Held for the duration of a turn.
  std::mutex& turn_mutex() { return turn_mu_; }

 private:
  std::string id_;
  ActiveConfig cfg_;
  MemoryAgent memory_;
  std::uint64_t next_turn_ = 1;
  std::mutex turn_mu_;
};

class Controller {
 public:
  Controller(const DomainRegistry& domains, AdapterRegistry& adapters, const Gateway& gw);

  /// Caller holds the session's turn mutex.
  TurnRecord run_turn(Session& sess, const Utterance& x) const;

 private:
  const DomainRegistry& domains_;
  AdapterRegistry& adapters_;
  const Gateway& gw_;
};

/// Deterministic given the record's stage outputs.
TurnTrace build_trace(const TurnRecord& rec);

struct ReplayReport {
  bool identical = true;
  std::size_t turns = 0;
  std::optional<std::uint64_t> divergent_turn;
  std::string detail;
  std::vector<TurnRecord> records;

  json to_json() const;
};

/// Re-runs recorded turns on `fresh` and compares records with latency removed.
ReplayReport replay(const std::vector<json>& recorded, const Controller& ctl, Session& fresh);

std::vector<json> read_trace_file(const std::filesystem::path& path);
void append_trace(const std::filesystem::path& path, const TurnRecord& rec);

}  // namespace dctl
