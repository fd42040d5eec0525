#include "dctl/interpreters.hpp"

#include <cmath>
#include <map>

#include "dctl/text.hpp"

namespace dctl {

namespace {

struct UnitInfo {
  std::string_view dimension;
  double factor;  // to the base unit of the dimension
};

const std::map<std::string, UnitInfo, std::less<>>& unit_table() {
  static const std::map<std::string, UnitInfo, std::less<>> kUnits{
      {"kcal", {"energy", 1.0}},      {"cal", {"energy", 1.0}},
      {"calories", {"energy", 1.0}},  {"kj", {"energy", 1.0 / 4.184}},
      {"g", {"mass", 1.0}},           {"grams", {"mass", 1.0}},
      {"gram", {"mass", 1.0}},        {"kg", {"mass", 1000.0}},
      {"mg", {"mass", 0.001}},
  };
  return kUnits;
}

std::string assets_for(const ActiveConfig& cfg, ModuleId m, std::string_view fallback) {
  if (auto a = cfg.prompt_asset(m)) return *a;
  return std::string{fallback};
}

}  // namespace

std::optional<double> convert_unit(double value, std::string_view from, std::string_view to) {
  auto f = unit_table().find(to_lower(from));
  auto t = unit_table().find(to_lower(to));
  if (f == unit_table().end() || t == unit_table().end()) return std::nullopt;
  if (f->second.dimension != t->second.dimension) return std::nullopt;
  return value * f->second.factor / t->second.factor;
}

ScopeResult detect_scope(const Utterance& x, std::string_view d_prev, const ActiveConfig& cfg,
                         const Gateway& gw) {
  ModelRequest req;
  req.module = ModuleId::ScopeDetection;
  req.input = x.text;
  req.output_schema_id = std::string{schema_ids::kScope};
  req.prompt_assets.push_back(
      "Select the domain that should handle the request, or OutOfScope when none applies. "
      "Prefer the previous domain for follow-ups.");
  json candidates = json::array();
  for (const auto& m : cfg.candidates()) {
    json keywords = m->keywords;
    for (const auto& t : m->task_schemas) {
      for (const auto& k : t.keywords) keywords.push_back(k);
    }
    candidates.push_back({{"id", m->domain_id},
                          {"description", m->description},
                          {"tasks", m->task_list()},
                          {"keywords", keywords}});
    std::string tasks;
    for (const auto& t : m->task_list()) tasks += (tasks.empty() ? "" : ", ") + t;
    req.context_docs.push_back(m->domain_id + ": " + m->description + " Tasks: " + tasks);
  }
  req.context_docs.push_back(std::string{kOutOfScope} + ": Fallback domain selected when no other domain matches the request.");
  req.context_docs.push_back("Previous domain: " + std::string{d_prev.empty() ? "none" : d_prev});
  req.context = {{"candidates", candidates}, {"previous", std::string{d_prev}}};

  ModelResponse res = gw.complete(std::move(req));
  ScopeResult out;
  out.usage.add(res);
  out.domain = res.payload.at("domain").get<std::string>();
  out.rationale = res.payload.value("rationale", std::string{});
  if (out.domain != kOutOfScope && !cfg.has_candidate(out.domain)) {
    out.rationale = "unrecognized domain '" + out.domain + "' mapped to OutOfScope";
    out.domain = std::string{kOutOfScope};
    out.coerced = true;
  }
  return out;
}

void check_param_types(const TaskSchema& schema, const json& params) {
  if (!params.is_object()) {
    throw Error(ErrorCode::SchemaViolation, "params must be an object", {{"params", "not an object"}});
  }
  std::vector<FieldIssue> issues;
  for (const auto& [k, v] : params.items()) {
    const FieldSpec* f = schema.field(k);
    if (f == nullptr) {
      issues.push_back({k, "not a field of " + schema.name});
      continue;
    }
    if (v.is_null()) continue;
    bool ok = false;
    bool quantity = v.is_object() && v.size() == 2 && v.contains("value") && v.contains("unit") &&
                    v["value"].is_number() && v["unit"].is_string();
    switch (f->type) {
      case SemanticType::Text: ok = v.is_string(); break;
      case SemanticType::Integer:
      case SemanticType::Real: ok = v.is_number() || quantity; break;
      case SemanticType::Boolean: ok = v.is_boolean(); break;
      case SemanticType::TextList:
        ok = v.is_array();
        if (ok) {
          for (const auto& e : v) ok = ok && e.is_string();
        }
        break;
    }
    if (!ok) issues.push_back({k, "expected " + std::string{to_string(f->type)}});
  }
  if (!issues.empty()) {
    throw Error(ErrorCode::SchemaViolation, "parameters do not match " + schema.name, std::move(issues));
  }
}

IntentResult recognize_intent(const Utterance& x, std::string_view domain, const ActiveConfig& cfg,
                              const Gateway& gw) {
  if (domain == kOutOfScope) {
    throw Error(ErrorCode::PreconditionViolated, "intent recognition needs an in-scope domain");
  }
  auto schemas = cfg.schemas();
  if (cfg.active_domain() != domain || schemas.empty()) {
    throw Error(ErrorCode::NoSchemaMatch, "domain '" + std::string{domain} + "' exposes no task schemas");
  }
  ModelRequest req;
  req.module = ModuleId::IntentRecognition;
  req.input = x.text;
  req.output_schema_id = std::string{schema_ids::kIntent};
  req.prompt_assets.push_back(assets_for(cfg, ModuleId::IntentRecognition,
                                         "Pick one task schema and extract only parameters the user "
                                         "stated explicitly. Never invent defaults."));
  json js = json::array();
  for (const auto* s : schemas) {
    js.push_back(s->to_json());
    req.context_docs.push_back(s->to_json().dump());
  }
  req.context = {{"domain", std::string{domain}}, {"schemas", js}};

  ModelResponse res = gw.complete(std::move(req));
  IntentResult out;
  out.usage.add(res);
  out.rationale = res.payload.value("rationale", std::string{});
  if (res.payload["schema"].is_null()) {
    throw Error(ErrorCode::NoSchemaMatch, "no task of " + std::string{domain} + " applies");
  }
  out.schema = res.payload["schema"].get<std::string>();
  const TaskSchema* schema = cfg.schema(out.schema);
  if (schema == nullptr) {
    throw Error(ErrorCode::NoSchemaMatch, "schema '" + out.schema + "' is not active",
                {{"schema", out.schema}});
  }
  out.raw_params = res.payload.value("params", json::object());
  check_param_types(*schema, out.raw_params);
  out.params = out.raw_params;
  return out;
}

PostprocessOutcome postprocess_checked(const TaskSchema& schema, const json& raw_params,
                                       const ActiveConfig& cfg) {
  check_param_types(schema, raw_params);
  PostprocessOutcome out;
  for (const auto& [k, v] : raw_params.items()) {
    if (v.is_null()) continue;
    const FieldSpec& f = *schema.field(k);
    json value;
    switch (f.type) {
      case SemanticType::Text: {
        std::string s = trim(v.get<std::string>());
        value = f.identifier ? to_lower(s) : s;
        break;
      }
      case SemanticType::Integer:
      case SemanticType::Real: {
        double n = 0;
        if (v.is_object()) {
          n = v["value"].get<double>();
          std::string unit = to_lower(v["unit"].get<std::string>());
          if (f.unit) {
            auto c = convert_unit(n, unit, *f.unit);
            if (!c) {
              out.violations.push_back({k, "unit '" + unit + "' not convertible to " + *f.unit});
              continue;
            }
            n = *c;
          }
        } else {
          n = v.get<double>();
        }
        if (f.type == SemanticType::Integer) {
          value = static_cast<std::int64_t>(std::llround(n));
        } else {
          value = canonical_value(json(n));
        }
        break;
      }
      case SemanticType::Boolean: value = v; break;
      case SemanticType::TextList: {
        value = json::array();
        for (const auto& e : v) {
          std::string s = trim(e.get<std::string>());
          value.push_back(f.identifier ? to_lower(s) : s);
        }
        break;
      }
    }
    out.params[k] = std::move(value);
  }
  for (const auto& id : cfg.plugins()) {
    if (const Plugin* p = PluginRegistry::builtin().find(id)) out.params = (*p)(schema, std::move(out.params));
  }
  for (const auto& [k, v] : out.params.items()) {
    if (auto reason = schema.field(k)->constraint.check(v)) out.violations.push_back({k, *reason});
  }
  return out;
}

json postprocess_intent(const TaskSchema& schema, const json& raw_params, const ActiveConfig& cfg) {
  auto out = postprocess_checked(schema, raw_params, cfg);
  if (!out.violations.empty()) {
    throw Error(ErrorCode::ConstraintViolation, "constraint check failed", out.violations);
  }
  return out.params;
}

}  // namespace dctl
