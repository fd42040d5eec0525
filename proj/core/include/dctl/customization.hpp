#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/model_gateway.hpp"

namespace dctl {

using json = nlohmann::json;

inline constexpr std::string_view kOutOfScope = "OutOfScope";

enum class SemanticType { Text, Integer, Real, Boolean, TextList };

std::string_view to_string(SemanticType t);
std::optional<SemanticType> semantic_type_from_string(std::string_view s);

enum class Priority { HardConstraint = 0, Identity = 1, Preference = 2, Episodic = 3 };

std::string_view to_string(Priority p);
std::optional<Priority> priority_from_string(std::string_view s);
/// Larger is more important.
int rank(Priority p);

struct Constraint {
  std::optional<double> min;
  std::optional<double> max;
  std::vector<std::string> one_of;
  std::optional<std::string> regex;

  bool empty() const { return !min && !max && one_of.empty() && !regex; }
  /// Returns a reason string when `value` fails, nullopt when it holds.
  std::optional<std::string> check(const json& value) const;
};

struct FieldSpec {
  std::string name;
  /// Human wording for clarification prompts; defaults to the name with spaces.
  std::string label;
  SemanticType type = SemanticType::Text;
  bool required = false;
  std::optional<std::string> unit;
  /// Entity identifiers are lowercased during post-processing.
  bool identifier = false;
  Constraint constraint;
  /// Memory key template ("person.${user}.daily_calories") used to fill the field from W.
  std::optional<std::string> memory_key;
  Priority memory_priority = Priority::Episodic;
  /// Heuristic provider extraction regexes; group 1 is the value, optional group 2 a unit.
  std::vector<std::string> patterns;

  std::string display_label() const;
};

struct EvidenceRequirement {
  /// Entity kind, e.g. "Dish". Matches W fact keys with namespace lower(kind).
  std::string kind;
  /// Field of θ whose value is the entity key.
  std::string key_field;
  /// Attributes that W must carry; empty means any fact about the entity.
  std::vector<std::string> attributes;
  /// Only instantiated when this θ field is present.
  std::optional<std::string> when;
  /// Live data can never be satisfied from memory.
  bool live = false;
};

/// Instantiated descriptor over a concrete θ.
struct EvidenceDescriptor {
  std::string kind;
  std::string key;
  std::vector<std::string> attributes;
  bool live = false;
};

struct TaskSchema {
  std::string name;
  std::string description;
  std::vector<FieldSpec> fields;
  std::vector<EvidenceRequirement> evidence_requirements;
  std::string execution_semantics;
  std::vector<std::string> keywords;

  const FieldSpec* field(std::string_view name) const;
  std::vector<std::string> required_fields() const;
  std::vector<EvidenceDescriptor> instantiate_requirements(const json& params) const;
  json to_json() const;
};

struct QueryTemplate {
  std::string label;
  /// Only used when this θ field is present.
  std::optional<std::string> when;
  /// QuerySpec document with ${field} placeholders.
  json spec;
};

struct BackendBinding {
  std::string adapter;
  json params = json::object();
};

struct DomainManifest {
  std::string domain_id;
  std::string description;
  std::vector<TaskSchema> task_schemas;
  /// Description-only manifests list task names without schemas.
  std::vector<std::string> task_names;
  /// Keyed by schema name.
  std::map<std::string, std::vector<QueryTemplate>, std::less<>> qg_templates;
  std::vector<std::string> plugins;
  std::map<std::string, std::string> prompt_assets;
  std::optional<BackendBinding> backend;
  std::vector<std::string> reject_keywords;
  std::vector<std::string> keywords;

  const TaskSchema* schema(std::string_view name) const;
  /// Schema names when present, else task_names.
  std::vector<std::string> task_list() const;
  bool description_only() const { return task_schemas.empty(); }

  static DomainManifest from_json(const json& j, std::string_view source = "<memory>");
};

DomainManifest load_manifest(const std::filesystem::path& path);

class DomainRegistry {
 public:
  void register_domain(DomainManifest m);
  bool contains(std::string_view id) const;
  /// Null for OutOfScope.
  std::shared_ptr<const DomainManifest> find(std::string_view id) const;
  std::shared_ptr<const DomainManifest> get(std::string_view id) const;
  /// Registered ids in registration order, OutOfScope last.
  std::vector<std::string> list() const;
  std::vector<std::shared_ptr<const DomainManifest>> manifests() const { return manifests_; }
  std::size_t size() const { return manifests_.size(); }

  /// Every *.json under `dir`, sorted by file name.
  static DomainRegistry load_directory(const std::filesystem::path& dir);

 private:
  std::vector<std::shared_ptr<const DomainManifest>> manifests_;
};

inline DomainRegistry register_domain(DomainRegistry reg, DomainManifest m) {
  reg.register_domain(std::move(m));
  return reg;
}

class ActiveConfig {
 public:
  ActiveConfig() = default;
  ActiveConfig(std::vector<std::shared_ptr<const DomainManifest>> candidates, std::string active);
  static ActiveConfig from_registry(const DomainRegistry& reg, std::string active = std::string{kOutOfScope});

  const std::string& active_domain() const { return active_; }
  const std::vector<std::shared_ptr<const DomainManifest>>& candidates() const { return candidates_; }
  bool has_candidate(std::string_view id) const;

  /// Null when OutOfScope is active.
  const DomainManifest* active_manifest() const;
  std::vector<const TaskSchema*> schemas() const;
  const TaskSchema* schema(std::string_view name) const;
  const std::vector<QueryTemplate>* templates(std::string_view schema_name) const;
  std::vector<std::string> plugins() const;
  std::optional<std::string> prompt_asset(ModuleId m) const;

  bool operator==(const ActiveConfig& o) const;

 private:
  std::vector<std::shared_ptr<const DomainManifest>> candidates_;
  std::string active_{kOutOfScope};
};

/// Expands "${field}" placeholders of a memory key with key segments of θ values.
/// nullopt when a referenced field is absent or null.
std::optional<std::string> expand_memory_key(std::string_view tmpl, const json& params);

ActiveConfig activate_domain(const ActiveConfig& cfg, std::string_view domain);

// ---------------------------------------------------------------------------
// Post-processing plugins

using Plugin = std::function<json(const TaskSchema&, json params)>;

class PluginRegistry {
 public:
  static const PluginRegistry& builtin();
  void add(std::string id, Plugin p);
  const Plugin* find(std::string_view id) const;

 private:
  std::map<std::string, Plugin, std::less<>> plugins_;
};

}  // namespace dctl
