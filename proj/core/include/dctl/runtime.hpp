#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/controller.hpp"

namespace dctl {

struct RuntimeConfig {
  ProviderConfig provider;
  Budgets budgets;
  std::filesystem::path domains_dir = "domains";
  /// Store paths in backend bindings resolve against this; defaults to the parent of domains_dir.
  std::optional<std::filesystem::path> data_dir;
  /// Empty disables persistence.
  std::filesystem::path state_dir;
  std::string listen_address = "127.0.0.1";
  int port = 8080;

  std::filesystem::path base_dir() const;
  /// Creates state_dir when set; checks domains_dir and the provider.
  void validate() const;

  static RuntimeConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  static RuntimeConfig load(const std::filesystem::path& path);
  json to_json() const;
};

/// Turns for one session run strictly in arrival order.
class FifoGate {
 public:
  class Ticket {
   public:
    explicit Ticket(FifoGate& g);
    ~Ticket();
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;

   private:
    FifoGate& gate_;
  };

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t next_ = 0;
  std::uint64_t serving_ = 0;
};

class Runtime {
 public:
  explicit Runtime(RuntimeConfig cfg);
  /// Shares an existing provider, e.g. a scripted one built in memory.
  Runtime(RuntimeConfig cfg, std::shared_ptr<const Provider> provider);

  const RuntimeConfig& config() const { return cfg_; }
  const DomainRegistry& domains() const { return domains_; }
  const Gateway& gateway() const { return *gw_; }
  AdapterRegistry& adapters() { return adapters_; }
  const Controller& controller() const { return *controller_; }

  /// Creates a session; an empty id picks a fresh one.
  std::string create_session(std::string id = {});
  bool has_session(const std::string& id);
  /// Throws InvalidArgument for unknown sessions.
  TurnRecord run_turn(const std::string& session_id, const std::string& text, std::int64_t timestamp_ms = 0);

  MemoryState memory_snapshot(const std::string& session_id);
  std::vector<Retrieved> search_memory(const std::string& session_id, const std::string& query, std::size_t k);
  std::optional<json> trace(const std::string& session_id, std::uint64_t turn_id);
  std::vector<json> traces(const std::string& session_id);
  std::vector<std::string> session_ids();

  /// Re-runs a persisted session against fresh state with this runtime's provider.
  ReplayReport replay_session(const std::string& session_id);
  /// Re-runs recorded turns against fresh state.
  ReplayReport replay_records(const std::vector<json>& records, const std::string& session_id);

  std::filesystem::path trace_path(const std::string& session_id) const;

 private:
  struct Entry {
    std::unique_ptr<Session> session;
    FifoGate gate;
    std::vector<json> records;
  };

  Entry* find(const std::string& id);
  Entry* load_persisted(const std::string& id);
  void persist_meta(const Entry& e) const;
  std::filesystem::path session_dir() const;

  RuntimeConfig cfg_;
  DomainRegistry domains_;
  AdapterRegistry adapters_;
  std::unique_ptr<Gateway> gw_;
  std::unique_ptr<Controller> controller_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace dctl
