#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace dctl {

using json = nlohmann::json;

enum class ModuleId {
  ScopeDetection,
  IntentRecognition,
  InnerSpeech,
  QueryGeneration,
  OuterSpeech,
  MemorySuff,
  MemorySummarize,
};

std::string_view to_string(ModuleId m);
std::optional<ModuleId> module_from_string(std::string_view s);
std::vector<ModuleId> all_modules();

/// Sampling temperature used when no override is configured.
/// Structured-decision modules run at 0, inner speech at 0.2, outer speech at 0.4.
double default_temperature(ModuleId m);

struct ModelRequest {
  ModuleId module = ModuleId::ScopeDetection;
  /// Primary input text. The scripted provider keys fixtures on this.
  std::string input;
  std::vector<std::string> prompt_assets;
  std::vector<std::string> context_docs;
  /// Structured hints for rule-based providers (candidates, schema, params, ...).
  json context = json::object();
  std::string output_schema_id;
  /// Set by the Gateway from module defaults and config overrides.
  double temperature = 0.0;
};

struct ModelResponse {
  json payload;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double latency_ms = 0.0;
  /// True when token counts are whitespace approximations.
  bool tokens_estimated = false;
};

/// Accumulates model usage over one pipeline stage.
struct Usage {
  std::size_t calls = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double model_latency_ms = 0.0;
  bool tokens_estimated = false;

  void add(const ModelResponse& r);
};

// ---------------------------------------------------------------------------
// Structured output schemas

enum class ValueType { Text, Integer, Real, Boolean, TextList, Object, Array, Any };

std::string_view to_string(ValueType t);

struct SchemaField {
  std::string name;
  ValueType type = ValueType::Any;
  bool required = false;
  bool nullable = false;
  /// Integer/Real fields also accept {"value": <number>, "unit": <text>}.
  bool accepts_quantity = false;
};

struct OutputSchema {
  std::string id;
  std::vector<SchemaField> fields;
};

class SchemaRegistry {
 public:
  /// Registry pre-loaded with the payload schemas of every pipeline module.
  static SchemaRegistry with_builtin();

  void add(OutputSchema schema);
  bool contains(std::string_view id) const;
  const OutputSchema& get(std::string_view id) const;

 private:
  std::map<std::string, OutputSchema, std::less<>> schemas_;
};

/// Checks `payload` against a registered schema. Returns the payload with
/// integral reals narrowed to integers. Unknown fields, missing required fields
/// and type mismatches all raise SchemaViolation with one issue per field.
json validate_structured(const json& payload, std::string_view schema_id,
                         const SchemaRegistry& registry);

namespace schema_ids {
inline constexpr std::string_view kScope = "scope_result";
inline constexpr std::string_view kIntent = "intent_result";
inline constexpr std::string_view kSuff = "suff_result";
inline constexpr std::string_view kInnerSpeech = "inner_speech_result";
inline constexpr std::string_view kOuterSpeech = "outer_speech_result";
inline constexpr std::string_view kSummary = "memory_summary";
inline constexpr std::string_view kQueryRaw = "query_raw";
}  // namespace schema_ids

// ---------------------------------------------------------------------------
// Providers

enum class ProviderKind { Scripted, Remote, Heuristic };

std::string_view to_string(ProviderKind k);
std::optional<ProviderKind> provider_kind_from_string(std::string_view s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::Heuristic;
  std::optional<std::filesystem::path> script_path;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  std::optional<std::string> api_key_env;
  std::map<ModuleId, double> temperature_overrides;
  std::chrono::milliseconds timeout{30000};
  bool trace = false;

  /// Scripted requires script_path; Remote requires endpoint and model_name.
  void validate() const;
  double temperature_for(ModuleId m) const;

  static ProviderConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  json to_json() const;
};

/// Raw provider output before schema validation.
struct ProviderReply {
  json payload;
  std::optional<std::size_t> input_tokens;
  std::optional<std::size_t> output_tokens;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderReply generate(const ModelRequest& request) const = 0;
  virtual ProviderKind kind() const = 0;
};

/// Replays payloads from a fixture file. Entries are keyed by
/// (module, SHA-256 of the canonicalized input); lookups never mutate state.
class ScriptedProvider final : public Provider {
 public:
  ScriptedProvider() = default;

  /// JSON-lines file; each line {"module", "input" | "key", "payload"}.
  static ScriptedProvider from_file(const std::filesystem::path& path);

  static std::string key(ModuleId module, std::string_view input);

  void add(ModuleId module, std::string_view input, json payload);
  void add_keyed(std::string key, json payload);
  std::size_t size() const { return entries_.size(); }
  bool has(ModuleId module, std::string_view input) const;

  ProviderReply generate(const ModelRequest& request) const override;
  ProviderKind kind() const override { return ProviderKind::Scripted; }

 private:
  std::unordered_map<std::string, json> entries_;
};

/// Rule-based decisions for offline demos: token-overlap scope routing,
/// keyword intent matching, lexical sufficiency. Free-text modules are
/// reported as Unsupported so callers take their deterministic fallbacks.
class HeuristicProvider final : public Provider {
 public:
  /// Minimum token-overlap ratio for a domain to beat OutOfScope.
  static constexpr double kScopeThreshold = 0.15;

  ProviderReply generate(const ModelRequest& request) const override;
  ProviderKind kind() const override { return ProviderKind::Heuristic; }
};

/// OpenAI-compatible chat-completions client.
class RemoteProvider final : public Provider {
 public:
  explicit RemoteProvider(ProviderConfig config);

  ProviderReply generate(const ModelRequest& request) const override;
  ProviderKind kind() const override { return ProviderKind::Remote; }

  /// Body posted to the endpoint; exposed for tests.
  json build_body(const ModelRequest& request) const;

 private:
  ProviderConfig config_;
};

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

// ---------------------------------------------------------------------------

/// Single entry point for every model call. Attaches temperatures, measures
/// latency, fills missing token counts and validates payloads before release.
class Gateway {
 public:
  Gateway(std::shared_ptr<const Provider> provider, ProviderConfig config,
          SchemaRegistry schemas = SchemaRegistry::with_builtin());

  ModelResponse complete(ModelRequest request) const;

  const SchemaRegistry& schemas() const { return schemas_; }
  SchemaRegistry& schemas() { return schemas_; }
  const ProviderConfig& config() const { return config_; }
  const Provider& provider() const { return *provider_; }

 private:
  std::shared_ptr<const Provider> provider_;
  ProviderConfig config_;
  SchemaRegistry schemas_;
};

/// One-shot convenience over a freshly built provider.
ModelResponse complete(const ModelRequest& request, const ProviderConfig& config);

}  // namespace dctl
