#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/error.hpp"
#include "dctl/model_gateway.hpp"

namespace dctl {

struct Utterance {
  std::string text;
  std::string session_id;
  std::uint64_t turn_index = 0;
  /// Milliseconds since the Unix epoch, UTC.
  std::int64_t timestamp_ms = 0;
};

struct ScopeResult {
  std::string domain{kOutOfScope};
  std::string rationale;
  /// Provider returned a domain outside the candidate set.
  bool coerced = false;
  Usage usage;
};

struct IntentResult {
  std::string schema;
  json raw_params = json::object();
  json params = json::object();
  std::string rationale;
  Usage usage;
};

struct PostprocessOutcome {
  json params = json::object();
  /// Fields failing type coercion or constraints, with reasons.
  std::vector<FieldIssue> violations;
};

ScopeResult detect_scope(const Utterance& x, std::string_view d_prev, const ActiveConfig& cfg,
                         const Gateway& gw);

/// Returns schema and θ̃; `params` is left equal to `raw_params` until postprocessing.
IntentResult recognize_intent(const Utterance& x, std::string_view domain, const ActiveConfig& cfg,
                              const Gateway& gw);

/// Normalizes θ̃ and reports every constraint failure instead of throwing.
PostprocessOutcome postprocess_checked(const TaskSchema& schema, const json& raw_params,
                                       const ActiveConfig& cfg);

/// Throws ConstraintViolation naming each failing field.
json postprocess_intent(const TaskSchema& schema, const json& raw_params, const ActiveConfig& cfg);

/// Type check of θ̃ against a schema; throws SchemaViolation.
void check_param_types(const TaskSchema& schema, const json& params);

/// Converts `value` expressed in `from` into `to`; nullopt when the units are incompatible.
std::optional<double> convert_unit(double value, std::string_view from, std::string_view to);

}  // namespace dctl
