#include "dctl/model_gateway.hpp"

#include <array>
#include <cmath>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

namespace {

constexpr std::array kModules{
    std::pair{ModuleId::ScopeDetection, std::string_view{"ScopeDetection"}},
    std::pair{ModuleId::IntentRecognition, std::string_view{"IntentRecognition"}},
    std::pair{ModuleId::InnerSpeech, std::string_view{"InnerSpeech"}},
    std::pair{ModuleId::QueryGeneration, std::string_view{"QueryGeneration"}},
    std::pair{ModuleId::OuterSpeech, std::string_view{"OuterSpeech"}},
    std::pair{ModuleId::MemorySuff, std::string_view{"MemorySuff"}},
    std::pair{ModuleId::MemorySummarize, std::string_view{"MemorySummarize"}},
};

bool is_integral(const json& v) {
  if (v.is_number_integer() || v.is_number_unsigned()) return true;
  if (v.is_number_float()) {
    double d = v.get<double>();
    return std::isfinite(d) && d == std::floor(d);
  }
  return false;
}

bool is_quantity(const json& v) {
  if (!v.is_object() || v.size() != 2) return false;
  return v.contains("value") && v["value"].is_number() && v.contains("unit") &&
         v["unit"].is_string();
}

std::string describe(const json& v) { return std::string{v.type_name()}; }

}  // namespace

std::string_view to_string(ModuleId m) {
  for (const auto& [id, name] : kModules) {
    if (id == m) return name;
  }
  return "Unknown";
}

std::optional<ModuleId> module_from_string(std::string_view s) {
  for (const auto& [id, name] : kModules) {
    if (name == s) return id;
  }
  return std::nullopt;
}

std::vector<ModuleId> all_modules() {
  std::vector<ModuleId> out;
  for (const auto& [id, name] : kModules) out.push_back(id);
  return out;
}

double default_temperature(ModuleId m) {
  switch (m) {
    case ModuleId::InnerSpeech: return 0.2;
    case ModuleId::OuterSpeech: return 0.4;
    default: return 0.0;
  }
}

void Usage::add(const ModelResponse& r) {
  ++calls;
  input_tokens += r.input_tokens;
  output_tokens += r.output_tokens;
  model_latency_ms += r.latency_ms;
  tokens_estimated = tokens_estimated || r.tokens_estimated;
}

std::string_view to_string(ValueType t) {
  switch (t) {
    case ValueType::Text: return "text";
    case ValueType::Integer: return "integer";
    case ValueType::Real: return "real";
    case ValueType::Boolean: return "boolean";
    case ValueType::TextList: return "list-of-text";
    case ValueType::Object: return "object";
    case ValueType::Array: return "array";
    case ValueType::Any: return "any";
  }
  return "any";
}

// ---------------------------------------------------------------------------

SchemaRegistry SchemaRegistry::with_builtin() {
  using VT = ValueType;
  SchemaRegistry reg;
  reg.add({std::string{schema_ids::kScope},
           {{"domain", VT::Text, true}, {"rationale", VT::Text, false}}});
  reg.add({std::string{schema_ids::kIntent},
           {{"schema", VT::Text, true, true},
            {"params", VT::Object, false},
            {"rationale", VT::Text, false}}});
  reg.add({std::string{schema_ids::kSuff},
           {{"sufficient", VT::Boolean, true}, {"rationale", VT::Text, false}}});
  reg.add({std::string{schema_ids::kInnerSpeech},
           {{"rationale", VT::Text, true},
            {"control", VT::Text, false},
            {"suggested_domain", VT::Text, false, true},
            {"issues", VT::Array, false},
            {"missing_slots", VT::TextList, false}}});
  reg.add({std::string{schema_ids::kOuterSpeech},
           {{"claims", VT::Array, true}, {"rendered_text", VT::Text, false}}});
  reg.add({std::string{schema_ids::kSummary},
           {{"summary", VT::Text, true}, {"facts", VT::Array, false}}});
  reg.add({std::string{schema_ids::kQueryRaw}, {{"statement", VT::Text, true}}});
  return reg;
}

void SchemaRegistry::add(OutputSchema schema) {
  std::string id = schema.id;
  schemas_.insert_or_assign(std::move(id), std::move(schema));
}

bool SchemaRegistry::contains(std::string_view id) const {
  return schemas_.find(id) != schemas_.end();
}

const OutputSchema& SchemaRegistry::get(std::string_view id) const {
  auto it = schemas_.find(id);
  if (it == schemas_.end()) {
    throw Error(ErrorCode::InvalidArgument, "schema not registered: " + std::string{id});
  }
  return it->second;
}

json validate_structured(const json& payload, std::string_view schema_id,
                         const SchemaRegistry& registry) {
  const OutputSchema& schema = registry.get(schema_id);
  std::vector<FieldIssue> issues;
  if (!payload.is_object()) {
    throw Error(ErrorCode::SchemaViolation, "payload for " + schema.id + " is not an object",
                {{"", "expected object, got " + describe(payload)}});
  }
  json out = json::object();
  for (const auto& [key, value] : payload.items()) {
    bool known = false;
    for (const auto& f : schema.fields) known = known || f.name == key;
    if (!known) issues.push_back({key, "unknown field"});
  }
  for (const auto& f : schema.fields) {
    if (!payload.contains(f.name)) {
      if (f.required) issues.push_back({f.name, "required field missing"});
      continue;
    }
    const json& v = payload[f.name];
    if (v.is_null()) {
      if (f.nullable || !f.required) {
        out[f.name] = v;
      } else {
        issues.push_back({f.name, "null not allowed"});
      }
      continue;
    }
    bool ok = false;
    json typed = v;
    switch (f.type) {
      case ValueType::Text: ok = v.is_string(); break;
      case ValueType::Integer:
        if (is_integral(v)) {
          ok = true;
          typed = json(static_cast<std::int64_t>(v.get<double>()));
        } else {
          ok = f.accepts_quantity && is_quantity(v);
        }
        break;
      case ValueType::Real: ok = v.is_number() || (f.accepts_quantity && is_quantity(v)); break;
      case ValueType::Boolean: ok = v.is_boolean(); break;
      case ValueType::TextList:
        ok = v.is_array();
        for (const auto& e : v) ok = ok && e.is_string();
        break;
      case ValueType::Object: ok = v.is_object(); break;
      case ValueType::Array: ok = v.is_array(); break;
      case ValueType::Any: ok = true; break;
    }
    if (!ok) {
      issues.push_back({f.name, "expected " + std::string{to_string(f.type)} + ", got " + describe(v)});
    } else {
      out[f.name] = std::move(typed);
    }
  }
  if (!issues.empty()) {
    throw Error(ErrorCode::SchemaViolation, "payload does not match " + schema.id,
                std::move(issues));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::Scripted: return "scripted";
    case ProviderKind::Remote: return "remote";
    case ProviderKind::Heuristic: return "heuristic";
  }
  return "heuristic";
}

std::optional<ProviderKind> provider_kind_from_string(std::string_view s) {
  std::string l = to_lower(s);
  if (l == "scripted") return ProviderKind::Scripted;
  if (l == "remote") return ProviderKind::Remote;
  if (l == "heuristic") return ProviderKind::Heuristic;
  return std::nullopt;
}

void ProviderConfig::validate() const {
  if (kind == ProviderKind::Scripted && !script_path) {
    throw Error(ErrorCode::InvalidArgument, "scripted provider requires script_path",
                {{"script_path", "missing"}});
  }
  if (kind == ProviderKind::Remote) {
    std::vector<FieldIssue> issues;
    if (!endpoint) issues.push_back({"endpoint", "missing"});
    if (!model_name) issues.push_back({"model_name", "missing"});
    if (!issues.empty()) {
      throw Error(ErrorCode::InvalidArgument, "remote provider config incomplete",
                  std::move(issues));
    }
  }
  for (const auto& [m, t] : temperature_overrides) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "temperature out of [0,1]",
                  {{std::string{to_string(m)}, format_number(t)}});
    }
  }
}

double ProviderConfig::temperature_for(ModuleId m) const {
  auto it = temperature_overrides.find(m);
  return it == temperature_overrides.end() ? default_temperature(m) : it->second;
}

ProviderConfig ProviderConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  ProviderConfig cfg;
  if (j.contains("kind")) {
    auto k = provider_kind_from_string(j.at("kind").get<std::string>());
    if (!k) throw Error(ErrorCode::ParseError, "unknown provider kind", {{"kind", j.at("kind").dump()}});
    cfg.kind = *k;
  }
  if (j.contains("script_path")) {
    std::filesystem::path p = j.at("script_path").get<std::string>();
    cfg.script_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  if (j.contains("endpoint")) cfg.endpoint = j.at("endpoint").get<std::string>();
  if (j.contains("model_name")) cfg.model_name = j.at("model_name").get<std::string>();
  if (j.contains("api_key_env")) cfg.api_key_env = j.at("api_key_env").get<std::string>();
  if (j.contains("timeout_ms")) cfg.timeout = std::chrono::milliseconds{j.at("timeout_ms").get<long>()};
  if (j.contains("trace")) cfg.trace = j.at("trace").get<bool>();
  if (j.contains("temperatures")) {
    for (const auto& [name, t] : j.at("temperatures").items()) {
      auto m = module_from_string(name);
      if (!m) throw Error(ErrorCode::ParseError, "unknown module in temperatures", {{name, "unknown"}});
      cfg.temperature_overrides[*m] = t.get<double>();
    }
  }
  return cfg;
}

json ProviderConfig::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  if (script_path) j["script_path"] = script_path->string();
  if (endpoint) j["endpoint"] = *endpoint;
  if (model_name) j["model_name"] = *model_name;
  if (api_key_env) j["api_key_env"] = *api_key_env;
  json temps = json::object();
  for (const auto& [m, t] : temperature_overrides) temps[std::string{to_string(m)}] = t;
  j["temperatures"] = temps;
  return j;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<const Provider> provider, ProviderConfig config,
                 SchemaRegistry schemas)
    : provider_(std::move(provider)), config_(std::move(config)), schemas_(std::move(schemas)) {
  if (!provider_) throw Error(ErrorCode::InvalidArgument, "gateway needs a provider");
}

ModelResponse Gateway::complete(ModelRequest request) const {
  if (!schemas_.contains(request.output_schema_id)) {
    throw Error(ErrorCode::InvalidArgument,
                "output schema not registered: " + request.output_schema_id);
  }
  request.temperature = config_.temperature_for(request.module);

  auto start = std::chrono::steady_clock::now();
  ProviderReply reply = provider_->generate(request);
  ModelResponse resp;
  resp.payload = validate_structured(reply.payload, request.output_schema_id, schemas_);
  resp.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  if (reply.input_tokens && reply.output_tokens) {
    resp.input_tokens = *reply.input_tokens;
    resp.output_tokens = *reply.output_tokens;
  } else {
    std::size_t in = whitespace_token_count(request.input);
    for (const auto& a : request.prompt_assets) in += whitespace_token_count(a);
    for (const auto& d : request.context_docs) in += whitespace_token_count(d);
    resp.input_tokens = in;
    resp.output_tokens = whitespace_token_count(reply.payload.dump(1));
    resp.tokens_estimated = true;
  }
  return resp;
}

ModelResponse complete(const ModelRequest& request, const ProviderConfig& config) {
  config.validate();
  Gateway gw{make_provider(config), config};
  return gw.complete(request);
}

}  // namespace dctl
