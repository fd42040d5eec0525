#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/runtime.hpp"

namespace testkit {

using json = nlohmann::json;

std::filesystem::path source_dir();
json load_json(const std::filesystem::path& path);
/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

struct SessionScript {
  std::string session_id;
  std::int64_t start_ms = 0;
  std::int64_t step_ms = 0;
  std::vector<std::string> turns;
};

/// sessions/<name>/turns.json.
SessionScript load_session(const std::string& name);

/// Scripted provider over sessions/<name>/script.jsonl and the bundled domains.
dctl::RuntimeConfig session_config(const std::string& name, const std::filesystem::path& state_dir = {});

/// Optional hook called before each turn with the runtime, session id and utterance.
using BeforeTurn = std::function<void(dctl::Runtime&, const std::string&, const std::string&)>;

struct SessionRun {
  std::vector<dctl::TurnRecord> records;
};

/// Runs every turn with timestamp start_ms + i * step_ms.
SessionRun run_session(dctl::Runtime& rt, const SessionScript& s, const BeforeTurn& before = {});

dctl::DomainRegistry bundled_domains();
dctl::GraphStore bundled_store(const std::string& file);

}  // namespace testkit
