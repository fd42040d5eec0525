#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/grounding.hpp"
#include "dctl/inner_speech.hpp"
#include "dctl/memory.hpp"
#include "dctl/model_gateway.hpp"

namespace dctl {

enum class ClaimKind { Grounded, SafeDefault };
enum class ResponseKind { Answer, ClarificationQuestion, SwitchNotice, Refusal };

std::string_view to_string(ClaimKind k);
std::string_view to_string(ResponseKind k);

/// Points one claim value at a cell of a referenced evidence item.
struct SupportRef {
  std::string ref;
  std::size_t row = 0;
  std::string attr;
};

struct Claim {
  std::string text;
  ClaimKind kind = ClaimKind::Grounded;
  std::vector<std::string> evidence_refs;
  /// In text order. When present, the numeric literals of `text` must equal
  /// the literals of these cells, in order.
  std::vector<SupportRef> support;
  /// SafeDefault only.
  std::string template_id;
  json params = json::object();
  /// Clarification claims name the slot they ask for.
  std::optional<std::string> slot;

  json to_json() const;
  static Claim from_json(const json& j);
};

struct ClaimedResponse {
  ResponseKind response_kind = ResponseKind::Answer;
  std::vector<Claim> claims;
  std::string rendered_text;
  /// Free text returned by the model, kept for audit only.
  std::optional<std::string> model_text;
  bool template_fallback = true;

  json to_json() const;
};

/// Closed template registry for statements exempt from grounding.
class SafeDefaults {
 public:
  static constexpr std::string_view kVersion = "1";
  static const SafeDefaults& builtin();

  bool contains(std::string_view id) const;
  /// Throws TemplateError for unknown ids or unbound placeholders.
  std::string instantiate(std::string_view id, const json& params) const;
  Claim make(std::string_view id, json params) const;
  const std::map<std::string, std::string, std::less<>>& templates() const { return templates_; }

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

struct FaithfulnessViolation {
  std::size_t claim_index = 0;
  std::string claim_text;
  std::string reason;

  json to_json() const;
};

struct FaithfulnessReport {
  bool pass = true;
  std::vector<FaithfulnessViolation> violations;

  json to_json() const;
};

FaithfulnessReport check_faithfulness(const ClaimedResponse& y, const EvidenceBundle& B);

/// Claim texts joined by single spaces.
std::string render(const ClaimedResponse& y);

struct ComposeInput {
  std::string_view utterance;
  std::string_view domain;
  const TaskSchema* schema = nullptr;
  const json* params = nullptr;
  const WorkingContext* W = nullptr;
  const ControlDecision* decision = nullptr;
  const std::vector<EvidenceItem>* evidence = nullptr;
  const Verdict* verdict = nullptr;
};

struct ComposeResult {
  ClaimedResponse response;
  FaithfulnessReport faithfulness;
  std::size_t model_attempts = 0;
  Usage usage;
};

/// Answer on Proceed (model claims when they pass the check, else templates built
/// from the verdict or W), ClarificationQuestion on Clarify, Refusal on Reject.
ComposeResult compose(const ComposeInput& in, const Gateway* gw);

// Replies that do not depend on a task decision.
ClaimedResponse out_of_scope_reply(const std::vector<std::string>& domains);
ClaimedResponse switch_notice(std::string_view domain);
ClaimedResponse no_task_reply(std::string_view domain, const std::vector<std::string>& tasks);
ClaimedResponse error_reply(std::string_view code);
ClaimedResponse switch_loop_reply();

}  // namespace dctl
