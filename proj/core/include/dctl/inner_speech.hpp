#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/error.hpp"
#include "dctl/memory.hpp"
#include "dctl/model_gateway.hpp"

namespace dctl {

enum class Control { Proceed, Clarify, SwitchDomain, Reject };

std::string_view to_string(Control c);
std::optional<Control> control_from_string(std::string_view s);

struct ControlDecision {
  Control control = Control::Clarify;
  std::vector<std::string> missing_slots;
  int complete = 0;
  /// Undefined (nullopt) when complete = 0.
  std::optional<int> tool_needed;
  std::string rationale;
  std::optional<std::string> suggested_domain;
  /// Named constraint violations and model-flagged inconsistencies.
  std::vector<FieldIssue> violations;
  /// Per-field constraint results: field -> "ok" | reason | "absent".
  json field_checks = json::object();
  /// Rationale came from the deterministic template.
  bool fallback = false;
  Usage usage;

  json to_json() const;
};

/// 1 iff every required field is present and every present value satisfies its constraint.
int comp(const TaskSchema& schema, const json& params);

/// Required-absent and constraint-violating fields, in schema order.
std::vector<std::string> missing_or_invalid(const TaskSchema& schema, const json& params);

/// True when some W fact satisfies the descriptor.
bool satisfied(const WorkingContext& W, const EvidenceDescriptor& d, const json& params);

/// ρ = 1 − SAT(W, ℛ(schema, θ)). Throws PreconditionViolated when comp = 0.
int tool_needed(std::string_view domain, const TaskSchema& schema, const json& params,
                const WorkingContext& W);

struct AssessInput {
  std::string_view utterance;
  std::string_view domain;
  const TaskSchema* schema = nullptr;
  const json* params = nullptr;
  const WorkingContext* W = nullptr;
  const DomainManifest* manifest = nullptr;
  /// Domains the model may suggest for SwitchDomain.
  std::vector<std::string> registered;
  /// Constraint failures removed from θ during postprocessing.
  std::vector<FieldIssue> prior_violations;
};

/// Without a gateway (or on gateway failure) the decision is a pure function of
/// (schema, θ, W) and the rationale is templated.
ControlDecision assess(const AssessInput& in, const Gateway* gw);

}  // namespace dctl
