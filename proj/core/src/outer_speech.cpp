#include "dctl/outer_speech.hpp"

#include <algorithm>
#include <set>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

std::string_view to_string(ClaimKind k) { return k == ClaimKind::Grounded ? "Grounded" : "SafeDefault"; }

std::string_view to_string(ResponseKind k) {
  switch (k) {
    case ResponseKind::Answer: return "Answer";
    case ResponseKind::ClarificationQuestion: return "ClarificationQuestion";
    case ResponseKind::SwitchNotice: return "SwitchNotice";
    case ResponseKind::Refusal: return "Refusal";
  }
  return "Answer";
}

json Claim::to_json() const {
  json sup = json::array();
  for (const auto& s : support) sup.push_back({{"ref", s.ref}, {"row", s.row}, {"attr", s.attr}});
  json j{{"text", text}, {"kind", to_string(kind)}, {"evidence_refs", evidence_refs}, {"support", sup}};
  if (kind == ClaimKind::SafeDefault) {
    j["template_id"] = template_id;
    j["params"] = params;
  }
  if (slot) j["slot"] = *slot;
  return j;
}

Claim Claim::from_json(const json& j) {
  Claim c;
  c.text = j.at("text").get<std::string>();
  std::string kind = j.value("kind", std::string{"Grounded"});
  if (kind != "Grounded" && kind != "SafeDefault") {
    throw Error(ErrorCode::SchemaViolation, "unknown claim kind '" + kind + "'", {{"kind", kind}});
  }
  c.kind = kind == "Grounded" ? ClaimKind::Grounded : ClaimKind::SafeDefault;
  c.evidence_refs = j.value("evidence_refs", std::vector<std::string>{});
  for (const auto& s : j.value("support", json::array())) {
    c.support.push_back({s.at("ref").get<std::string>(), s.value("row", std::size_t{0}), s.at("attr").get<std::string>()});
  }
  c.template_id = j.value("template_id", std::string{});
  c.params = j.value("params", json::object());
  if (j.contains("slot") && j["slot"].is_string()) c.slot = j["slot"].get<std::string>();
  return c;
}

json ClaimedResponse::to_json() const {
  json cs = json::array();
  for (const auto& c : claims) cs.push_back(c.to_json());
  return {{"response_kind", to_string(response_kind)},
          {"claims", cs},
          {"rendered_text", rendered_text},
          {"model_text", model_text ? json(*model_text) : json(nullptr)},
          {"template_fallback", template_fallback}};
}

// ---------------------------------------------------------------------------

const SafeDefaults& SafeDefaults::builtin() {
  static const SafeDefaults reg = [] {
    SafeDefaults s;
    s.templates_ = {
        {"disclosure.evidence_only", "I can only answer from the records available to me."},
        {"advice.allergy", "Please double-check ingredient labels before eating it."},
        {"clarify.slot", "Please provide the ${label}."},
        {"clarify.invalid", "The ${label} ${reason}; please restate it."},
        {"clarify.inconsistent", "Please confirm the ${label}: ${reason}."},
        {"clarify.switch_loop", "I am not sure which service should handle this. Could you rephrase the request?"},
        {"switch.notice", "I switched to ${domain}. What would you like to do there?"},
        {"refusal.out_of_scope", "That request is outside what I can help with. I can help with: ${domains}."},
        {"refusal.policy", "I cannot help with that request in ${domain}."},
        {"refusal.no_task", "I could not match that to a ${domain} task. I can help with: ${tasks}."},
        {"refusal.error", "Something went wrong while handling that request (${code})."},
    };
    return s;
  }();
  return reg;
}

bool SafeDefaults::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

std::string SafeDefaults::instantiate(std::string_view id, const json& params) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error(ErrorCode::TemplateError, "unregistered safe default '" + std::string{id} + "'");
  std::vector<std::string> missing;
  json out = substitute_placeholders(json(it->second), params, missing);
  if (!missing.empty()) {
    throw Error(ErrorCode::TemplateError, "safe default '" + std::string{id} + "' is missing " + missing.front());
  }
  return out.is_string() ? out.get<std::string>() : display_value(out);
}

Claim SafeDefaults::make(std::string_view id, json params) const {
  Claim c;
  c.kind = ClaimKind::SafeDefault;
  c.template_id = std::string{id};
  c.text = instantiate(id, params);
  c.params = std::move(params);
  return c;
}

// ---------------------------------------------------------------------------
// Faithfulness

json FaithfulnessViolation::to_json() const {
  return {{"claim", claim_index}, {"text", claim_text}, {"reason", reason}};
}

json FaithfulnessReport::to_json() const {
  json v = json::array();
  for (const auto& x : violations) v.push_back(x.to_json());
  return {{"pass", pass}, {"violations", v}};
}

namespace {

std::string norm_number(const std::string& lit) {
  auto v = parse_number(lit);
  return v ? format_number(*v) : lit;
}

void collect_literals(const json& v, std::set<std::string>& out) {
  if (v.is_number()) {
    out.insert(format_number(v.get<double>()));
  } else if (v.is_string()) {
    for (const auto& l : numeric_literals(v.get<std::string>())) out.insert(norm_number(l));
  } else if (v.is_structured()) {
    for (const auto& e : v) collect_literals(e, out);
  }
}

std::vector<std::string> cell_literals(const json& cell) {
  std::vector<std::string> out;
  if (cell.is_number()) {
    out.push_back(format_number(cell.get<double>()));
  } else if (cell.is_string()) {
    for (const auto& l : numeric_literals(cell.get<std::string>())) out.push_back(norm_number(l));
  } else if (cell.is_array()) {
    for (const auto& e : cell) {
      auto sub = cell_literals(e);
      out.insert(out.end(), sub.begin(), sub.end());
    }
  }
  return out;
}

}  // namespace

FaithfulnessReport check_faithfulness(const ClaimedResponse& y, const EvidenceBundle& B) {
  FaithfulnessReport report;
  auto flag = [&](std::size_t i, std::string reason) {
    report.pass = false;
    report.violations.push_back({i, y.claims[i].text, std::move(reason)});
  };
  for (std::size_t i = 0; i < y.claims.size(); ++i) {
    const Claim& c = y.claims[i];
    if (c.kind == ClaimKind::SafeDefault) {
      if (!SafeDefaults::builtin().contains(c.template_id)) {
        flag(i, "safe default template '" + c.template_id + "' is not registered");
        continue;
      }
      try {
        if (SafeDefaults::builtin().instantiate(c.template_id, c.params) != c.text) {
          flag(i, "text differs from template '" + c.template_id + "'");
        }
      } catch (const Error& e) {
        flag(i, e.what());
      }
      continue;
    }
    if (c.evidence_refs.empty()) {
      flag(i, "grounded claim cites no evidence");
      continue;
    }
    bool resolved = true;
    std::set<std::string> available;
    for (const auto& ref : c.evidence_refs) {
      auto rows = B.rows(ref);
      if (!rows) {
        flag(i, "unresolved evidence ref " + ref);
        resolved = false;
        continue;
      }
      collect_literals(*rows, available);
    }
    if (!resolved) continue;
    auto literals = numeric_literals(c.text);
    if (!c.support.empty()) {
      std::vector<std::string> expected;
      bool ok = true;
      for (const auto& s : c.support) {
        if (std::find(c.evidence_refs.begin(), c.evidence_refs.end(), s.ref) == c.evidence_refs.end()) {
          flag(i, "support ref " + s.ref + " is not cited");
          ok = false;
          break;
        }
        auto rows = B.rows(s.ref);
        if (!rows || !rows->is_array() || s.row >= rows->size() || !(*rows)[s.row].is_object() ||
            !(*rows)[s.row].contains(s.attr)) {
          flag(i, "support " + s.ref + "[" + std::to_string(s.row) + "]." + s.attr + " does not exist");
          ok = false;
          break;
        }
        auto cell = cell_literals((*rows)[s.row][s.attr]);
        expected.insert(expected.end(), cell.begin(), cell.end());
      }
      if (!ok) continue;
      std::size_t n = std::min(literals.size(), expected.size());
      bool matched = literals.size() == expected.size();
      for (std::size_t k = 0; k < n && matched; ++k) {
        if (norm_number(literals[k]) != expected[k]) {
          flag(i, "unmatched literal " + literals[k]);
          matched = true;
          ok = false;
          break;
        }
      }
      if (ok && literals.size() != expected.size()) {
        flag(i, "literal count " + std::to_string(literals.size()) + " differs from supported values " +
                    std::to_string(expected.size()));
      }
      continue;
    }
    for (const auto& l : literals) {
      if (!available.count(norm_number(l))) {
        flag(i, "unmatched literal " + l);
        break;
      }
    }
  }
  return report;
}

std::string render(const ClaimedResponse& y) {
  std::string out;
  for (const auto& c : y.claims) {
    if (c.text.empty()) continue;
    out += (out.empty() ? "" : " ") + c.text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

const SafeDefaults& SD() { return SafeDefaults::builtin(); }

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string join_words(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += i + 1 == v.size() ? " and " : ", ";
    out += v[i];
  }
  return out;
}

std::string phrase(const std::string& attr, const json& value) {
  std::string v = display_value(value);
  if (attr == "calories") return v + " kcal";
  if (attr == "protein") return v + " g of protein";
  if (attr == "carbs") return v + " g of carbohydrates";
  if (attr == "fat") return v + " g of fat";
  if (attr == "daily_calories") return "a daily calorie target of " + v + " kcal";
  if (attr == "daily_protein") return "a daily protein target of " + v + " g";
  if (attr == "daily_carbs") return "a daily carbohydrate target of " + v + " g";
  if (attr == "daily_fat") return "a daily fat target of " + v + " g";
  std::string label = attr;
  std::replace(label.begin(), label.end(), '_', ' ');
  return label + " " + v;
}

/// Attributes the user asked about, e.g. "carbohydrates" -> carbs.
std::set<std::string> focus(std::string_view utterance) {
  static const std::map<std::string, std::string> kSyn{
      {"carb", "carbs"},       {"carbs", "carbs"},       {"carbohydrate", "carbs"}, {"carbohydrates", "carbs"},
      {"protein", "protein"},  {"proteins", "protein"},  {"fat", "fat"},            {"fats", "fat"},
      {"calorie", "calories"}, {"calories", "calories"}, {"kcal", "calories"},      {"energy", "calories"},
  };
  std::set<std::string> out;
  for (const auto& t : tokenize(utterance)) {
    auto it = kSyn.find(t);
    if (it != kSyn.end()) out.insert(it->second);
  }
  return out;
}

std::vector<std::string> focused(const std::vector<std::string>& attrs, const std::set<std::string>& f) {
  std::vector<std::string> out;
  for (const auto& a : attrs) {
    std::string base = a.starts_with("daily_") ? a.substr(6) : a;
    if (f.count(base)) out.push_back(a);
  }
  return out.empty() ? attrs : out;
}

Claim grounded(std::string text, std::vector<std::string> refs, std::vector<SupportRef> support = {}) {
  Claim c;
  c.kind = ClaimKind::Grounded;
  c.text = std::move(text);
  c.evidence_refs = std::move(refs);
  c.support = std::move(support);
  return c;
}

std::vector<std::string> strings(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(display_value(e));
  }
  return out;
}

std::vector<Claim> memory_claims(const ComposeInput& in) {
  std::vector<Claim> claims;
  auto f = focus(in.utterance);
  for (const auto& d : in.schema->instantiate_requirements(*in.params)) {
    std::string prefix = to_lower(d.kind) + "." + d.key + ".";
    std::vector<std::string> attrs = d.attributes;
    if (attrs.empty()) {
      for (const auto& item : in.W->items) {
        if (item.key && item.key->starts_with(prefix)) attrs.push_back(item.key->substr(prefix.size()));
      }
    }
    std::vector<std::string> phrases;
    std::vector<std::string> refs;
    std::vector<SupportRef> support;
    for (const auto& a : focused(attrs, f)) {
      const WorkingItem* item = in.W->fact(prefix + a);
      if (item == nullptr) continue;
      phrases.push_back(phrase(a, item->value));
      refs.push_back(item->id);
      support.push_back({item->id, 0, a});
    }
    if (phrases.empty()) continue;
    std::string subject = d.key;
    std::replace(subject.begin(), subject.end(), '_', ' ');
    claims.push_back(grounded("From what I already know, " + subject + " has " + join_words(phrases) + ".",
                              refs, support));
  }
  return claims;
}

std::vector<Claim> dish_info_claims(const ComposeInput& in, const json& r) {
  std::vector<Claim> claims;
  std::string dish = r.value("dish", std::string{});
  std::string ref = r.value("ref", std::string{});
  if (!r.value("found", false)) {
    claims.push_back(grounded("I found no record of " + dish + ".", {ref}));
    claims.push_back(SD().make("disclosure.evidence_only", json::object()));
    return claims;
  }
  const json& n = r["nutrition"];
  std::vector<std::string> attrs;
  for (const char* a : {"calories", "protein", "carbs", "fat"}) {
    if (n.contains(a) && !n[a].is_null()) attrs.push_back(a);
  }
  auto wanted = focus(in.utterance);
  bool side_question = r.contains("compatibility") || r.contains("ingredient_checks");
  attrs = side_question && wanted.empty() ? std::vector<std::string>{} : focused(attrs, wanted);
  std::vector<std::string> phrases;
  std::vector<SupportRef> support;
  for (const auto& a : attrs) {
    phrases.push_back(phrase(a, n[a]));
    support.push_back({ref, 0, a});
  }
  if (!phrases.empty()) {
    claims.push_back(grounded(capitalize(dish) + " contains " + join_words(phrases) + ".", {ref}, support));
  }
  if (r.contains("compatibility")) {
    const json& c = r["compatibility"];
    std::string user = display_value(c["user"]);
    auto refs = c["refs"].get<std::vector<std::string>>();
    if (!c.value("user_found", false)) {
      claims.push_back(grounded("I found no profile for " + user + ", so I could not check allergies.", refs));
    } else if (c.value("compatible", false)) {
      claims.push_back(grounded(capitalize(dish) + " is compatible with " + user + "'s allergy profile.", refs));
    } else {
      claims.push_back(grounded(capitalize(dish) + " is not compatible with " + user + "'s allergy profile: it contains " +
                                    join_words(strings(c["offending"])) + ".",
                                refs));
      claims.push_back(SD().make("advice.allergy", json::object()));
    }
  }
  if (r.contains("ingredient_checks")) {
    auto refs = r["ingredient_refs"].get<std::vector<std::string>>();
    for (const auto& ch : r["ingredient_checks"]) {
      std::string ing = ch.value("ingredient", std::string{});
      std::string status = ch.value("status", std::string{});
      if (status == "contained") {
        claims.push_back(grounded(capitalize(dish) + " contains " + ing + ".", refs));
      } else if (status == "not_contained") {
        claims.push_back(grounded(capitalize(dish) + " does not contain " + ing + ".", refs));
      } else {
        claims.push_back(grounded(capitalize(ing) + " is not an ingredient in my records.", refs));
      }
    }
  }
  return claims;
}

std::vector<Claim> add_person_claims(const ComposeInput& in, const json& r) {
  std::vector<Claim> claims;
  std::string ref = r.value("ref", std::string{});
  const EvidenceItem* item = nullptr;
  for (const auto& e : *in.evidence) {
    if (e.id == ref) item = &e;
  }
  std::string user = r.value("user", std::string{});
  if (item == nullptr || item->rows.empty()) {
    claims.push_back(grounded("I could not confirm the new profile for " + user + ".", {ref}));
    return claims;
  }
  const json& row = item->rows[0];
  std::vector<std::string> phrases;
  std::vector<SupportRef> support;
  for (const char* a : {"daily_calories", "daily_protein", "daily_carbs", "daily_fat"}) {
    if (!row.contains(a) || row[a].is_null()) continue;
    phrases.push_back(phrase(a, row[a]));
    support.push_back({ref, 0, a});
  }
  claims.push_back(grounded("I added " + user + " with " + join_words(phrases) + ".", {ref}, support));
  auto allergies = strings(row.value("allergies", json::array()));
  if (!allergies.empty()) claims.push_back(grounded("Recorded allergies: " + join_words(allergies) + ".", {ref}));
  auto unknown = strings(r.value("unknown_intolerances", json::array()));
  if (!unknown.empty()) {
    claims.push_back(grounded("I could not match " + join_words(unknown) + " to a known allergen.", {ref}));
  }
  return claims;
}

std::vector<Claim> substitute_claims(const json& r) {
  std::vector<Claim> claims;
  auto refs = r["refs"].get<std::vector<std::string>>();
  std::string user = r.value("user", std::string{});
  if (!r.value("user_found", false)) {
    claims.push_back(grounded("I found no profile for " + user + ", so allergies could not be checked.", {refs[1]}));
  }
  const json& ranked = r["ranked"];
  if (ranked.empty()) {
    claims.push_back(grounded("No dish satisfies those constraints for " + user + ".", {refs[0]}));
    return claims;
  }
  const json& best = ranked[0];
  claims.push_back(grounded("I suggest " + best.value("name", std::string{}) + " for " + user + ".", refs));
  auto hits = strings(best.value("preferred_hits", json::array()));
  if (!hits.empty()) claims.push_back(grounded("It includes " + join_words(hits) + ", which you prefer.", {refs[0]}));
  auto excl = strings(r.value("exclude", json::array()));
  if (!excl.empty()) claims.push_back(grounded("It avoids " + join_words(excl) + ".", {refs[0]}));
  if (best.value("meal_match", false)) {
    claims.push_back(grounded("It is a " + display_value(r["meal"]) + " dish.", {refs[0]}));
  }
  std::vector<std::string> others;
  for (std::size_t i = 1; i < ranked.size() && others.size() < 2; ++i) others.push_back(ranked[i].value("name", std::string{}));
  if (!others.empty()) claims.push_back(grounded("Other options: " + join_words(others) + ".", {refs[0]}));
  return claims;
}

std::vector<Claim> movie_claims(const json& r) {
  std::vector<Claim> claims;
  std::string ref = r.value("ref", std::string{});
  std::string title = r.value("title", std::string{});
  if (!r.value("found", false)) {
    claims.push_back(grounded("I found no record of " + title + ".", {ref}));
    claims.push_back(SD().make("disclosure.evidence_only", json::object()));
    return claims;
  }
  const json& m = r["movie"];
  std::string name = capitalize(display_value(m.value("title", json(title))));
  std::string text = name;
  std::vector<SupportRef> support;
  if (m.contains("year") && !m["year"].is_null()) {
    text += " (" + display_value(m["year"]) + ")";
    support.push_back({ref, 0, "year"});
  }
  text += " is a " + display_value(m.value("genre", json("film"))) + " film";
  if (m.contains("director") && !m["director"].is_null()) text += " directed by " + display_value(m["director"]);
  if (m.contains("runtime") && !m["runtime"].is_null()) {
    text += ", running " + display_value(m["runtime"]) + " minutes";
    support.push_back({ref, 0, "runtime"});
  }
  claims.push_back(grounded(text + ".", {ref}, support));
  return claims;
}

std::vector<Claim> timetable_claims(const ComposeInput& in, const json& r) {
  std::vector<Claim> claims;
  std::string ref = r.value("ref", std::string{});
  const EvidenceItem* item = nullptr;
  for (const auto& e : *in.evidence) {
    if (e.id == ref) item = &e;
  }
  if (item == nullptr || item->rows.empty()) {
    claims.push_back(grounded("I found no screenings of " + r.value("title", std::string{}) + ".", {ref}));
    return claims;
  }
  for (std::size_t i = 0; i < item->rows.size(); ++i) {
    const json& row = item->rows[i];
    claims.push_back(grounded(capitalize(display_value(row.value("movie", json("")))) + " shows at " +
                                  display_value(row.value("cinema", json(""))) + " on " +
                                  display_value(row.value("day", json(""))) + " at " +
                                  display_value(row.value("time", json(""))) + ".",
                              {ref}, {{ref, i, "time"}}));
  }
  return claims;
}

std::vector<Claim> generic_claims(const ComposeInput& in) {
  std::vector<Claim> claims;
  for (const auto& e : *in.evidence) {
    if (e.failed) {
      claims.push_back(grounded("The lookup could not be completed.", {e.id}));
      continue;
    }
    if (e.rows.empty()) {
      claims.push_back(grounded("I found no matching records.", {e.id}));
      continue;
    }
    for (std::size_t i = 0; i < e.rows.size() && i < 3; ++i) {
      claims.push_back(grounded("Result: " + display_value(e.rows[i]) + ".", {e.id}));
    }
  }
  return claims;
}

std::vector<Claim> verdict_claims(const ComposeInput& in) {
  if (in.verdict == nullptr) return generic_claims(in);
  const json& r = in.verdict->record;
  const std::string& s = in.verdict->semantics;
  if (s == "advisor.dish_info") return dish_info_claims(in, r);
  if (s == "advisor.add_person") return add_person_claims(in, r);
  if (s == "advisor.substitute_dish") return substitute_claims(r);
  if (s == "movies.movie_info") return movie_claims(r);
  if (s == "movies.timetable") return timetable_claims(in, r);
  return generic_claims(in);
}

ClaimedResponse single(ResponseKind kind, Claim c) {
  ClaimedResponse y;
  y.response_kind = kind;
  y.claims.push_back(std::move(c));
  y.rendered_text = render(y);
  return y;
}

std::string list_text(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

ClaimedResponse out_of_scope_reply(const std::vector<std::string>& domains) {
  return single(ResponseKind::Refusal, SD().make("refusal.out_of_scope", {{"domains", list_text(domains)}}));
}

ClaimedResponse switch_notice(std::string_view domain) {
  return single(ResponseKind::SwitchNotice, SD().make("switch.notice", {{"domain", std::string{domain}}}));
}

ClaimedResponse no_task_reply(std::string_view domain, const std::vector<std::string>& tasks) {
  return single(ResponseKind::Refusal,
                SD().make("refusal.no_task", {{"domain", std::string{domain}}, {"tasks", list_text(tasks)}}));
}

ClaimedResponse error_reply(std::string_view code) {
  return single(ResponseKind::Refusal, SD().make("refusal.error", {{"code", std::string{code}}}));
}

ClaimedResponse switch_loop_reply() {
  ClaimedResponse y = single(ResponseKind::ClarificationQuestion, SD().make("clarify.switch_loop", json::object()));
  return y;
}

ComposeResult compose(const ComposeInput& in, const Gateway* gw) {
  if (in.decision == nullptr || in.schema == nullptr || in.params == nullptr || in.W == nullptr ||
      in.evidence == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "compose needs the full turn context");
  }
  ComposeResult out;
  const ControlDecision& d = *in.decision;
  ClaimedResponse& y = out.response;

  switch (d.control) {
    case Control::Clarify: {
      y.response_kind = ResponseKind::ClarificationQuestion;
      for (const auto& slot : d.missing_slots) {
        const FieldSpec* f = in.schema->field(slot);
        std::string label = f ? f->display_label() : slot;
        auto v = std::find_if(d.violations.begin(), d.violations.end(),
                              [&](const FieldIssue& i) { return i.field == slot; });
        Claim c = v == d.violations.end() ? SD().make("clarify.slot", {{"label", label}})
                                          : SD().make("clarify.invalid", {{"label", label}, {"reason", v->reason}});
        c.slot = slot;
        y.claims.push_back(std::move(c));
      }
      if (d.missing_slots.empty()) {
        for (const auto& v : d.violations) {
          const FieldSpec* f = in.schema->field(v.field);
          y.claims.push_back(SD().make("clarify.inconsistent",
                                       {{"label", f ? f->display_label() : v.field}, {"reason", v.reason}}));
        }
      }
      if (y.claims.empty()) y.claims.push_back(SD().make("clarify.switch_loop", json::object()));
      y.rendered_text = render(y);
      return out;
    }
    case Control::Reject:
      out.response = single(ResponseKind::Refusal, SD().make("refusal.policy", {{"domain", std::string{in.domain}}}));
      return out;
    case Control::SwitchDomain:
      out.response = switch_notice(d.suggested_domain.value_or(std::string{in.domain}));
      return out;
    case Control::Proceed: break;
  }

  EvidenceBundle B{in.W, *in.evidence};
  y.response_kind = ResponseKind::Answer;
  if (gw != nullptr) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      ++out.model_attempts;
      ModelRequest req;
      req.module = ModuleId::OuterSpeech;
      req.input = std::string{in.utterance};
      req.output_schema_id = std::string{schema_ids::kOuterSpeech};
      req.prompt_assets.push_back(
          "Answer using only the evidence. Return claims; each Grounded claim cites evidence ids "
          "and states no value that is not in the cited rows.");
      json ev = json::array();
      for (const auto& e : *in.evidence) {
        ev.push_back(e.to_json());
        req.context_docs.push_back(e.id + ": " + e.rows.dump());
      }
      json w = json::array();
      for (const auto& i : in.W->items) {
        w.push_back({{"id", i.id}, {"text", i.text}});
        req.context_docs.push_back(i.id + ": " + i.text);
      }
      req.context = {{"evidence", ev},
                     {"working_context", w},
                     {"verdict", in.verdict ? in.verdict->to_json() : json(nullptr)}};
      try {
        ModelResponse res = gw->complete(std::move(req));
        out.usage.add(res);
        ClaimedResponse candidate;
        candidate.response_kind = ResponseKind::Answer;
        for (const auto& jc : res.payload.at("claims")) candidate.claims.push_back(Claim::from_json(jc));
        if (res.payload.contains("rendered_text") && res.payload["rendered_text"].is_string()) {
          candidate.model_text = res.payload["rendered_text"].get<std::string>();
        }
        auto report = check_faithfulness(candidate, B);
        if (report.pass && !candidate.claims.empty()) {
          candidate.template_fallback = false;
          candidate.rendered_text = render(candidate);
          out.response = std::move(candidate);
          out.faithfulness = std::move(report);
          return out;
        }
      } catch (const Error&) {
      } catch (const json::exception&) {
      }
    }
  }

  y.claims = d.tool_needed.value_or(1) == 0 ? memory_claims(in) : verdict_claims(in);
  if (y.claims.empty()) y.claims.push_back(SD().make("disclosure.evidence_only", json::object()));
  y.template_fallback = true;
  y.rendered_text = render(y);
  out.faithfulness = check_faithfulness(y, B);
  return out;
}

}  // namespace dctl
