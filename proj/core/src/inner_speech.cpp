#include "dctl/inner_speech.hpp"

#include <algorithm>

#include "dctl/text.hpp"

namespace dctl {

std::string_view to_string(Control c) {
  switch (c) {
    case Control::Proceed: return "Proceed";
    case Control::Clarify: return "Clarify";
    case Control::SwitchDomain: return "SwitchDomain";
    case Control::Reject: return "Reject";
  }
  return "Clarify";
}

std::optional<Control> control_from_string(std::string_view s) {
  for (auto c : {Control::Proceed, Control::Clarify, Control::SwitchDomain, Control::Reject}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

json ControlDecision::to_json() const {
  json v = json::array();
  for (const auto& i : violations) v.push_back({{"field", i.field}, {"reason", i.reason}});
  return {{"control", to_string(control)},
          {"missing_slots", missing_slots},
          {"complete", complete},
          {"tool_needed", tool_needed ? json(*tool_needed) : json(nullptr)},
          {"rationale", rationale},
          {"suggested_domain", suggested_domain ? json(*suggested_domain) : json(nullptr)},
          {"violations", v},
          {"field_checks", field_checks},
          {"fallback", fallback}};
}

namespace {

bool present(const json& params, const std::string& name) {
  return params.contains(name) && !params[name].is_null() &&
         !(params[name].is_string() && params[name].get_ref<const std::string&>().empty());
}

}  // namespace

std::vector<std::string> missing_or_invalid(const TaskSchema& schema, const json& params) {
  std::vector<std::string> out;
  for (const auto& f : schema.fields) {
    if (!present(params, f.name)) {
      if (f.required) out.push_back(f.name);
      continue;
    }
    if (f.constraint.check(params[f.name])) out.push_back(f.name);
  }
  return out;
}

int comp(const TaskSchema& schema, const json& params) {
  return missing_or_invalid(schema, params).empty() ? 1 : 0;
}

bool satisfied(const WorkingContext& W, const EvidenceDescriptor& d, const json& params) {
  if (d.live) return false;
  std::string prefix = to_lower(d.kind) + "." + d.key + ".";
  if (d.attributes.empty()) {
    return std::any_of(W.items.begin(), W.items.end(), [&](const WorkingItem& i) {
      return i.key && i.key->starts_with(prefix) && !i.value.is_null();
    });
  }
  for (const auto& attr : d.attributes) {
    const WorkingItem* item = W.fact(prefix + attr);
    if (item == nullptr) return false;
    // A value stated in θ must agree with memory, otherwise the backend is consulted.
    if (params.contains(attr) && !params[attr].is_null() &&
        canonical_value(params[attr]) != canonical_value(item->value)) {
      return false;
    }
  }
  return true;
}

int tool_needed(std::string_view, const TaskSchema& schema, const json& params, const WorkingContext& W) {
  if (comp(schema, params) == 0) {
    throw Error(ErrorCode::PreconditionViolated, "tool_needed is undefined for incomplete parameters");
  }
  auto descriptors = schema.instantiate_requirements(params);
  if (descriptors.empty()) return 1;
  for (const auto& d : descriptors) {
    if (!satisfied(W, d, params)) return 1;
  }
  return 0;
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::string template_rationale(const ControlDecision& d, const TaskSchema& schema) {
  switch (d.control) {
    case Control::Proceed:
      return schema.name + " is complete; " +
             (d.tool_needed.value_or(1) ? "backend evidence is required." : "working context covers the evidence.");
    case Control::Clarify:
      if (!d.missing_slots.empty()) return schema.name + " cannot run: missing or invalid " + join(d.missing_slots) + ".";
      return schema.name + " parameters are inconsistent and need confirmation.";
    case Control::SwitchDomain:
      return "request belongs to " + d.suggested_domain.value_or("another domain") + ".";
    case Control::Reject: return "request violates a domain policy.";
  }
  return {};
}

bool policy_rejects(const DomainManifest* m, std::string_view utterance) {
  if (m == nullptr) return false;
  std::string lower = " " + canonicalize(utterance) + " ";
  return std::any_of(m->reject_keywords.begin(), m->reject_keywords.end(), [&](const std::string& k) {
    return lower.find(to_lower(k)) != std::string::npos;
  });
}

}  // namespace

ControlDecision assess(const AssessInput& in, const Gateway* gw) {
  if (in.schema == nullptr || in.params == nullptr || in.W == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "assess needs a schema, parameters and a working context");
  }
  const TaskSchema& schema = *in.schema;
  const json& params = *in.params;

  ControlDecision d;
  d.complete = comp(schema, params);
  d.missing_slots = missing_or_invalid(schema, params);
  d.violations = in.prior_violations;
  for (const auto& v : in.prior_violations) {
    if (std::find(d.missing_slots.begin(), d.missing_slots.end(), v.field) == d.missing_slots.end()) {
      d.missing_slots.push_back(v.field);
    }
  }
  if (!in.prior_violations.empty()) d.complete = 0;
  for (const auto& f : schema.fields) {
    if (!present(params, f.name)) {
      auto prior = std::find_if(in.prior_violations.begin(), in.prior_violations.end(),
                                [&](const FieldIssue& i) { return i.field == f.name; });
      d.field_checks[f.name] = prior != in.prior_violations.end() ? prior->reason : "absent";
    } else if (auto r = f.constraint.check(params[f.name])) {
      d.field_checks[f.name] = *r;
      d.violations.push_back({f.name, *r});
    } else {
      d.field_checks[f.name] = "ok";
    }
  }
  if (d.complete) d.tool_needed = tool_needed(in.domain, schema, params, *in.W);

  d.control = d.complete ? Control::Proceed : Control::Clarify;

  json model;
  bool have_model = false;
  if (gw != nullptr) {
    ModelRequest req;
    req.module = ModuleId::InnerSpeech;
    req.input = std::string{in.utterance};
    req.output_schema_id = std::string{schema_ids::kInnerSpeech};
    req.prompt_assets.push_back(
        "Check the interpretation for missing or inconsistent parameters and explain whether the "
        "task can run. Suggest another domain only if the request clearly belongs elsewhere.");
    req.context_docs.push_back("Task " + schema.name + " params " + params.dump());
    for (const auto& i : in.W->items) req.context_docs.push_back(i.text);
    req.context = {{"schema", schema.name},
                   {"params", params},
                   {"complete", d.complete == 1},
                   {"missing", d.missing_slots},
                   {"tool_needed", d.tool_needed ? json(*d.tool_needed == 1) : json(nullptr)},
                   {"domain", std::string{in.domain}}};
    try {
      ModelResponse res = gw->complete(std::move(req));
      d.usage.add(res);
      model = res.payload;
      have_model = true;
    } catch (const Error&) {
      have_model = false;
    }
  }

  if (policy_rejects(in.manifest, in.utterance)) {
    d.control = Control::Reject;
  } else if (have_model && model.value("control", std::string{}) == "SwitchDomain" &&
             model.contains("suggested_domain") && model["suggested_domain"].is_string()) {
    std::string target = model["suggested_domain"].get<std::string>();
    bool known = std::find(in.registered.begin(), in.registered.end(), target) != in.registered.end();
    if (known && target != in.domain) {
      d.control = Control::SwitchDomain;
      d.suggested_domain = target;
    }
  }
  if (d.control == Control::Proceed && have_model) {
    for (const auto& issue : model.value("issues", json::array())) {
      if (!issue.is_object()) continue;
      std::string field = issue.value("field", std::string{});
      if (field.empty()) continue;
      d.violations.push_back({field, issue.value("reason", std::string{"flagged as inconsistent"})});
    }
    if (!d.violations.empty()) {
      d.control = Control::Clarify;
      d.tool_needed.reset();
    }
  }

  if (have_model) {
    d.rationale = model.value("rationale", std::string{});
  }
  if (d.rationale.empty()) {
    d.rationale = template_rationale(d, schema);
    d.fallback = true;
  }
  if (d.control != Control::Proceed) d.tool_needed.reset();
  return d;
}

}  // namespace dctl
