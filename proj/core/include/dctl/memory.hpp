#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/embedding.hpp"
#include "dctl/model_gateway.hpp"

namespace dctl {

using json = nlohmann::json;

/// Fact before it receives an identity in core memory.
struct FactDraft {
  std::string key;
  json value;
  Priority priority = Priority::Episodic;

  bool operator==(const FactDraft&) const = default;
};

struct Fact {
  std::uint64_t id = 0;
  /// namespace.subject.attribute (at least three segments).
  std::string key;
  json value;
  Priority priority = Priority::Episodic;
  std::uint64_t turn_id = 0;
  std::int64_t timestamp_ms = 0;
  std::optional<std::uint64_t> superseded_by;

  bool live() const { return !superseded_by.has_value(); }
  /// Canonical serialized form, "key: value". LEN is measured on this.
  std::string text() const;
  json to_json() const;
  static Fact from_json(const json& j);
};

bool valid_fact_key(std::string_view key);

struct EvidenceCaption {
  std::string id;
  std::string caption;
};

struct TurnTrace {
  std::uint64_t turn_id = 0;
  std::int64_t timestamp_ms = 0;
  std::string utterance;
  std::string reply;
  std::string domain;
  std::string schema;
  json params = json::object();
  std::string control;
  std::vector<std::string> missing;
  int sufficiency = 1;
  std::optional<int> tool_needed;
  std::vector<EvidenceCaption> evidence;
  /// Typed facts extracted by schema-driven rules at turn end.
  std::vector<FactDraft> facts;

  /// Serialized form, filled by finalize().
  std::string summary;
  std::size_t char_length = 0;

  void finalize();
  json to_json() const;
  static TurnTrace from_json(const json& j);
};

enum class ArchiveSource { CoreOverflow, ConsolidationByproduct };

std::string_view to_string(ArchiveSource s);

struct ArchiveItem {
  std::uint64_t seq = 0;
  std::string text;
  Vector embedding;
  ArchiveSource source = ArchiveSource::CoreOverflow;
  /// Present for archived core facts.
  std::optional<Fact> fact;
  std::uint64_t turn_id = 0;
  std::int64_t timestamp_ms = 0;

  std::string id() const { return "A" + std::to_string(seq); }
  json to_json() const;
  static ArchiveItem from_json(const json& j);
};

struct Budgets {
  std::size_t h_max = 10;
  std::size_t b_core = 4000;
  std::size_t b_w = 6000;
  std::size_t k = 4;

  json to_json() const;
  static Budgets from_json(const json& j);
};

struct MemoryState {
  std::deque<TurnTrace> H;
  std::vector<Fact> C;
  std::vector<ArchiveItem> A;
  Budgets budgets;
  std::uint64_t next_fact_id = 1;
  std::uint64_t next_archive_seq = 1;

  /// LEN(C): code points over the serialized form of every fact in C.
  std::size_t core_length() const;
  const Fact* live_fact(std::string_view key) const;

  json to_json() const;
  static MemoryState from_json(const json& j);
};

enum class Tier { History, Core, Archive };

std::string_view to_string(Tier t);

struct WorkingItem {
  std::string id;
  std::string text;
  Tier tier = Tier::History;
  Priority priority = Priority::Episodic;
  std::size_t char_length = 0;
  std::optional<std::string> key;
  json value;
  std::int64_t timestamp_ms = 0;
  std::uint64_t turn_id = 0;

  json to_json() const;
};

struct WorkingContext {
  std::vector<WorkingItem> items;
  std::size_t total_chars = 0;

  const WorkingItem* find(std::string_view id) const;
  /// Live value for a fact key, or nullptr.
  const WorkingItem* fact(std::string_view key) const;
  json to_json() const;
};

struct Retrieved {
  ArchiveItem item;
  double similarity = 0.0;
};

/// Descending cosine, ties to the older item.
std::vector<Retrieved> retrieve_topk(std::string_view query, const std::vector<ArchiveItem>& archive,
                                     std::size_t k);

struct SuffResult {
  int s = 1;
  std::string rationale;
  Usage usage;
};

/// s=1 when nothing is archived. Gateway failures yield s=0.
SuffResult suff(std::string_view x, const MemoryState& state, const Gateway* gw);

/// One item per fact key (higher priority, then newer wins) and no duplicate texts.
/// Items whose winning value is null are dropped: a null fact clears the key.
std::vector<WorkingItem> coherent(std::vector<WorkingItem> items);

struct ReadResult {
  SuffResult suff;
  WorkingContext W;
};

ReadResult read_context(std::string_view x, const MemoryState& state, const Gateway* gw);

struct UpdateReport {
  std::vector<std::uint64_t> consolidated_turns;
  std::vector<std::uint64_t> extracted_fact_ids;
  std::vector<std::uint64_t> archived_fact_ids;
  std::vector<std::string> summary_items;
  bool summarize_fallback = false;

  json to_json() const;
};

/// APPEND, then σ/u consolidation past H_max, then π transfer past B_core.
UpdateReport update(MemoryState& state, TurnTrace xi, const Gateway* gw);

/// Serializes every read/update for one session.
class MemoryAgent {
 public:
  explicit MemoryAgent(Budgets budgets = {}, const Gateway* gw = nullptr);

  ReadResult read_context(std::string_view x) const;
  UpdateReport update(TurnTrace xi);
  MemoryState snapshot() const;
  std::vector<Retrieved> search(std::string_view query, std::size_t k) const;

  /// When set, the state is written here after every update.
  void persist_to(std::filesystem::path path);
  void save(const std::filesystem::path& path) const;
  static MemoryState load(const std::filesystem::path& path);
  void restore(MemoryState state);

 private:
  mutable std::mutex mu_;
  MemoryState state_;
  const Gateway* gw_;
  std::optional<std::filesystem::path> snapshot_path_;
};

}  // namespace dctl
