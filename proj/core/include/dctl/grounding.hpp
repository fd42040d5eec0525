#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/graph_store.hpp"
#include "dctl/inner_speech.hpp"
#include "dctl/memory.hpp"
#include "dctl/model_gateway.hpp"
#include "dctl/query_spec.hpp"

namespace dctl {

inline constexpr std::string_view kFailureMarker = "__query_failure__";

struct EvidenceItem {
  std::string id;
  std::string query_ref;
  json rows = json::array();
  std::string caption;
  bool failed = false;

  json to_json() const;
  static EvidenceItem from_json(const json& j);
};

struct EvidenceBundle {
  const WorkingContext* W = nullptr;
  std::vector<EvidenceItem> E;

  const EvidenceItem* find_item(std::string_view id) const;
  /// Rows of an evidence item, or a one-row view {attribute: value} of a W fact.
  std::optional<json> rows(std::string_view id) const;
};

class Adapter {
 public:
  virtual ~Adapter() = default;
  virtual std::string id() const = 0;
  virtual std::set<std::string> capabilities() const = 0;
  virtual json execute(const QuerySpec& q) const = 0;
  /// Inserts a node and its outgoing edges; returns the node id.
  virtual std::string create_node(const Node& n, const std::vector<Edge>& edges);
};

/// Full-capability adapter over a GraphStore. Concurrent reads, exclusive writes.
class InMemoryGraphAdapter final : public Adapter {
 public:
  explicit InMemoryGraphAdapter(GraphStore store);

  std::string id() const override { return "in-memory-graph"; }
  std::set<std::string> capabilities() const override;
  json execute(const QuerySpec& q) const override;
  std::string create_node(const Node& n, const std::vector<Edge>& edges) override;

  GraphStore snapshot() const;

 private:
  mutable std::shared_mutex mu_;
  GraphStore store_;
};

/// Sends raw_passthrough statements to an HTTP endpoint: POST {"statement"} -> {"rows"}.
class ExternalGraphAdapter final : public Adapter {
 public:
  ExternalGraphAdapter(std::string endpoint, std::optional<std::string> api_key_env);

  std::string id() const override { return "external-graph"; }
  std::set<std::string> capabilities() const override { return {"raw"}; }
  json execute(const QuerySpec& q) const override;

 private:
  std::string endpoint_;
  std::optional<std::string> api_key_env_;
};

/// Reserved seam for vector backends; supports no step kinds.
class ExternalVectorAdapter final : public Adapter {
 public:
  std::string id() const override { return "external-vector"; }
  std::set<std::string> capabilities() const override { return {}; }
  json execute(const QuerySpec& q) const override;
};

/// Builds the adapter named by a backend binding. Relative store paths resolve against `base_dir`.
std::shared_ptr<Adapter> make_adapter(const BackendBinding& binding, const std::filesystem::path& base_dir);

class AdapterRegistry {
 public:
  void bind(std::string domain, std::shared_ptr<Adapter> adapter);
  Adapter* for_domain(std::string_view domain) const;

  /// One adapter per manifest that declares a backend.
  static AdapterRegistry from_manifests(const DomainRegistry& reg, const std::filesystem::path& base_dir);

 private:
  std::map<std::string, std::shared_ptr<Adapter>, std::less<>> by_domain_;
};

struct GenerateInput {
  std::string_view utterance;
  std::string_view domain;
  const TaskSchema* schema = nullptr;
  const json* params = nullptr;
  const WorkingContext* W = nullptr;
  const ControlDecision* decision = nullptr;
  const ActiveConfig* cfg = nullptr;
};

struct GeneratedQueries {
  std::vector<QuerySpec> specs;
  Usage usage;
};

/// Instantiates the schema's query templates with θ. Raw-only backends get a
/// model-written statement instead. Requires Proceed with ρ = 1.
GeneratedQueries generate_queries(const GenerateInput& in, const Gateway* gw);

/// AdapterMissing / CapabilityMissing are thrown; backend failures become a failed item.
EvidenceItem execute(std::string_view domain, const QuerySpec& q, const AdapterRegistry& reg,
                     std::string evidence_id);

struct Verdict {
  std::string semantics;
  json record = json::object();
  std::vector<FactDraft> facts;

  json to_json() const;
};

struct SemanticsContext {
  std::string_view domain;
  const TaskSchema* schema = nullptr;
  const json* params = nullptr;
  /// Evidence gathered so far; handlers may append verification items.
  std::vector<EvidenceItem>* evidence = nullptr;
  std::vector<QuerySpec>* queries = nullptr;
  const AdapterRegistry* adapters = nullptr;
  /// Prefix for ids of evidence items added by handlers.
  std::string evidence_prefix = "E";
};

using SemanticsHandler = std::function<Verdict(SemanticsContext&)>;

/// Static handler table keyed by execution_semantics id.
const std::map<std::string, SemanticsHandler, std::less<>>& semantics_handlers();

Verdict apply_execution_semantics(SemanticsContext& ctx);

}  // namespace dctl
