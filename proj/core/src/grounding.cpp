#include "dctl/grounding.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>

#include <httplib.h>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

json EvidenceItem::to_json() const {
  return {{"id", id}, {"query_ref", query_ref}, {"rows", rows}, {"caption", caption}, {"failed", failed}};
}

EvidenceItem EvidenceItem::from_json(const json& j) {
  EvidenceItem e;
  e.id = j.at("id").get<std::string>();
  e.query_ref = j.value("query_ref", std::string{});
  e.rows = j.value("rows", json::array());
  e.caption = j.value("caption", std::string{});
  e.failed = j.value("failed", false);
  return e;
}

const EvidenceItem* EvidenceBundle::find_item(std::string_view id) const {
  for (const auto& e : E) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

std::optional<json> EvidenceBundle::rows(std::string_view id) const {
  if (const auto* e = find_item(id)) return std::optional<json>{std::in_place, e->rows};
  if (W != nullptr) {
    if (const auto* w = W->find(id)) {
      if (w->key) {
        auto dot = w->key->rfind('.');
        return json::array({{{w->key->substr(dot + 1), w->value}}});
      }
      return json::array({{{"text", w->text}}});
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Adapters

std::string Adapter::create_node(const Node&, const std::vector<Edge>&) {
  throw Error(ErrorCode::CapabilityMissing, "adapter '" + id() + "' does not support writes");
}

InMemoryGraphAdapter::InMemoryGraphAdapter(GraphStore store) : store_(std::move(store)) {}

std::set<std::string> InMemoryGraphAdapter::capabilities() const {
  return {"match", "filter", "traverse", "transitive", "where", "path", "project", "reach", "aggregate", "write"};
}

json InMemoryGraphAdapter::execute(const QuerySpec& q) const {
  std::shared_lock lock{mu_};
  validate_query(q, store_.schema());
  return graph_execute(q, store_);
}

std::string InMemoryGraphAdapter::create_node(const Node& n, const std::vector<Edge>& edges) {
  std::unique_lock lock{mu_};
  GraphStore next = store_;
  next.add_node(n);
  for (const auto& e : edges) next.add_edge(e);
  store_ = std::move(next);
  return n.id;
}

GraphStore InMemoryGraphAdapter::snapshot() const {
  std::shared_lock lock{mu_};
  return store_;
}

ExternalGraphAdapter::ExternalGraphAdapter(std::string endpoint, std::optional<std::string> api_key_env)
    : endpoint_(std::move(endpoint)), api_key_env_(std::move(api_key_env)) {}

json ExternalGraphAdapter::execute(const QuerySpec& q) const {
  if (!q.raw_passthrough) throw Error(ErrorCode::CapabilityMissing, "external-graph needs a raw statement");
  auto scheme = endpoint_.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::InvalidArgument, "bad endpoint " + endpoint_);
  auto path_at = endpoint_.find('/', scheme + 3);
  std::string origin = path_at == std::string::npos ? endpoint_ : endpoint_.substr(0, path_at);
  std::string path = path_at == std::string::npos ? "/" : endpoint_.substr(path_at);
  httplib::Client client{origin};
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  httplib::Headers headers;
  if (api_key_env_) {
    if (const char* key = std::getenv(api_key_env_->c_str())) headers.emplace("Authorization", std::string{"Bearer "} + key);
  }
  json body{{"statement", *q.raw_passthrough}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::TransportError, "graph endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error(ErrorCode::TransportError, "graph endpoint returned " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("rows");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string{"bad graph response: "} + e.what());
  }
}

json ExternalVectorAdapter::execute(const QuerySpec&) const {
  throw Error(ErrorCode::CapabilityMissing, "external-vector adapter executes no query kinds");
}

std::shared_ptr<Adapter> make_adapter(const BackendBinding& binding, const std::filesystem::path& base_dir) {
  if (binding.adapter == "in-memory-graph") {
    GraphStore store;
    if (binding.params.contains("store")) {
      std::filesystem::path p = binding.params["store"].get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      store = GraphStore::load(p);
    }
    return std::make_shared<InMemoryGraphAdapter>(std::move(store));
  }
  if (binding.adapter == "external-graph") {
    std::optional<std::string> key;
    if (binding.params.contains("api_key_env")) key = binding.params["api_key_env"].get<std::string>();
    return std::make_shared<ExternalGraphAdapter>(binding.params.value("endpoint", std::string{}), key);
  }
  if (binding.adapter == "external-vector") return std::make_shared<ExternalVectorAdapter>();
  throw Error(ErrorCode::AdapterMissing, "no adapter named '" + binding.adapter + "'");
}

void AdapterRegistry::bind(std::string domain, std::shared_ptr<Adapter> adapter) {
  by_domain_[std::move(domain)] = std::move(adapter);
}

Adapter* AdapterRegistry::for_domain(std::string_view domain) const {
  auto it = by_domain_.find(domain);
  return it == by_domain_.end() ? nullptr : it->second.get();
}

AdapterRegistry AdapterRegistry::from_manifests(const DomainRegistry& reg, const std::filesystem::path& base_dir) {
  AdapterRegistry out;
  for (const auto& m : reg.manifests()) {
    if (m->backend) out.bind(m->domain_id, make_adapter(*m->backend, base_dir));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query generation and execution

GeneratedQueries generate_queries(const GenerateInput& in, const Gateway* gw) {
  if (in.decision == nullptr || in.decision->control != Control::Proceed ||
      in.decision->tool_needed.value_or(0) != 1) {
    throw Error(ErrorCode::PreconditionViolated, "queries are generated only for Proceed with tool grounding");
  }
  if (in.schema == nullptr || in.params == nullptr || in.cfg == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "generate_queries needs schema, parameters and config");
  }
  const TaskSchema& schema = *in.schema;
  const json& params = *in.params;
  GeneratedQueries out;

  const DomainManifest* m = in.cfg->active_manifest();
  if (m != nullptr && m->backend && m->backend->adapter == "external-graph") {
    if (gw == nullptr) throw Error(ErrorCode::Unsupported, "raw query generation needs a model");
    ModelRequest req;
    req.module = ModuleId::QueryGeneration;
    req.input = std::string{in.utterance};
    req.output_schema_id = std::string{schema_ids::kQueryRaw};
    req.prompt_assets.push_back("Write one read-only graph query answering the task.");
    if (auto a = in.cfg->prompt_asset(ModuleId::QueryGeneration)) req.prompt_assets.push_back(*a);
    req.context_docs.push_back("Task " + schema.name + " params " + params.dump());
    req.context = {{"schema", schema.name}, {"params", params}};
    ModelResponse res = gw->complete(std::move(req));
    out.usage.add(res);
    QuerySpec q;
    q.id = schema.name + ".raw";
    q.label = "raw";
    q.raw_passthrough = res.payload.at("statement").get<std::string>();
    out.specs.push_back(std::move(q));
    return out;
  }

  const auto* templates = in.cfg->templates(schema.name);
  if (templates == nullptr) throw Error(ErrorCode::DanglingTemplate, "no query template for " + schema.name);
  json bindings = params;
  for (const auto& f : schema.fields) {
    if (!bindings.contains(f.name)) bindings[f.name] = nullptr;
  }
  for (const auto& f : schema.fields) {
    if (f.required && bindings[f.name].is_null()) {
      throw Error(ErrorCode::TemplateError, "required field '" + f.name + "' is unbound", {{f.name, "unbound"}});
    }
  }
  for (const auto& t : *templates) {
    if (t.when && (!params.contains(*t.when) || params[*t.when].is_null())) continue;
    std::vector<std::string> missing;
    json spec = substitute_placeholders(t.spec, bindings, missing);
    std::vector<FieldIssue> issues;
    for (const auto& name : missing) {
      if (schema.field(name) == nullptr) issues.push_back({name, "no such field"});
    }
    if (!issues.empty()) {
      throw Error(ErrorCode::TemplateError, "template '" + t.label + "' references unknown slots", issues);
    }
    spec["id"] = schema.name + "." + t.label;
    spec["label"] = t.label;
    out.specs.push_back(QuerySpec::from_json(spec));
  }
  return out;
}

EvidenceItem execute(std::string_view domain, const QuerySpec& q, const AdapterRegistry& reg, std::string evidence_id) {
  Adapter* adapter = reg.for_domain(domain);
  if (adapter == nullptr) {
    throw Error(ErrorCode::AdapterMissing, "no adapter bound for domain '" + std::string{domain} + "'");
  }
  auto caps = adapter->capabilities();
  for (const auto& k : q.kinds()) {
    if (!caps.count(k)) {
      throw Error(ErrorCode::CapabilityMissing, "adapter '" + adapter->id() + "' cannot run step kind '" + k + "'",
                  {{"kind", k}});
    }
  }
  EvidenceItem item;
  item.id = std::move(evidence_id);
  item.query_ref = q.id;
  try {
    item.rows = adapter->execute(q);
    if (!item.rows.is_array()) item.rows = json::array({item.rows});
    item.caption = (q.label.empty() ? q.id : q.label) + ": " + std::to_string(item.rows.size()) +
                   (item.rows.size() == 1 ? " row" : " rows");
  } catch (const Error& e) {
    item.failed = true;
    item.rows = json::array({{{std::string{kFailureMarker}, e.what()}}});
    item.caption = (q.label.empty() ? q.id : q.label) + ": failed (" + std::string{to_string(e.code())} + ")";
  }
  return item;
}

// ---------------------------------------------------------------------------
// Execution semantics

json Verdict::to_json() const {
  json fs = json::array();
  for (const auto& f : facts) fs.push_back({{"key", f.key}, {"value", f.value}, {"priority", to_string(f.priority)}});
  return {{"semantics", semantics}, {"record", record}, {"facts", fs}};
}

namespace {

const EvidenceItem* by_label(const SemanticsContext& ctx, std::string_view label) {
  std::string suffix = "." + std::string{label};
  for (const auto& e : *ctx.evidence) {
    if (e.query_ref.ends_with(suffix)) return &e;
  }
  return nullptr;
}

const EvidenceItem& run(SemanticsContext& ctx, const json& spec_json) {
  QuerySpec q = QuerySpec::from_json(spec_json);
  std::string id = ctx.evidence_prefix + std::to_string(ctx.evidence->size() + 1);
  ctx.evidence->push_back(execute(ctx.domain, q, *ctx.adapters, id));
  ctx.queries->push_back(std::move(q));
  return ctx.evidence->back();
}

json first_row(const EvidenceItem* e) {
  if (e == nullptr || e->failed || e->rows.empty()) return nullptr;
  return e->rows[0];
}

std::vector<std::string> strings_of(const json& v) {
  std::vector<std::string> out;
  if (v.is_array()) {
    for (const auto& e : v) {
      if (e.is_string()) out.push_back(e.get<std::string>());
    }
  }
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

void require_success(const EvidenceItem* e, std::string_view what) {
  if (e == nullptr) throw Error(ErrorCode::PreconditionViolated, std::string{what} + " evidence is missing");
  if (e->failed) throw Error(ErrorCode::TransportError, std::string{what} + " query failed");
}

Verdict dish_info(SemanticsContext& ctx) {
  const json& p = *ctx.params;
  Verdict v;
  v.semantics = "advisor.dish_info";
  std::string dish = p.at("dish").get<std::string>();
  const EvidenceItem* item = by_label(ctx, "dish");
  require_success(item, "dish");
  json row = first_row(item);
  json& r = v.record;
  r["dish"] = dish;
  r["found"] = !row.is_null();
  r["ref"] = item->id;
  if (!row.is_null()) {
    r["nutrition"] = row;
    for (const char* attr : {"calories", "protein", "carbs", "fat"}) {
      if (row.contains(attr) && !row[attr].is_null()) {
        v.facts.push_back({"dish." + key_segment(dish) + "." + attr, row[attr], Priority::Episodic});
      }
    }
  }
  if (p.contains("user") && !p["user"].is_null()) {
    const EvidenceItem* d = by_label(ctx, "dish_allergens");
    const EvidenceItem* u = by_label(ctx, "person_allergies");
    require_success(d, "dish allergen");
    require_success(u, "person allergy");
    json drow = first_row(d);
    json urow = first_row(u);
    auto allergens = drow.is_null() ? std::vector<std::string>{} : strings_of(drow["allergens"]);
    auto allergies = urow.is_null() ? std::vector<std::string>{} : strings_of(urow["allergies"]);
    std::vector<std::string> offending;
    for (const auto& a : allergens) {
      if (contains(allergies, a)) offending.push_back(a);
    }
    r["compatibility"] = {{"user", p["user"]},
                          {"user_found", !urow.is_null()},
                          {"dish_found", !drow.is_null()},
                          {"compatible", offending.empty()},
                          {"offending", offending},
                          {"allergens", allergens},
                          {"allergies", allergies},
                          {"refs", {d->id, u->id}}};
  }
  if (p.contains("ingredients") && !p["ingredients"].is_null()) {
    const EvidenceItem* d = by_label(ctx, "dish_ingredients");
    const EvidenceItem* k = by_label(ctx, "known_ingredients");
    require_success(d, "dish ingredient");
    require_success(k, "known ingredient");
    json drow = first_row(d);
    auto contained = drow.is_null() ? std::vector<std::string>{} : strings_of(drow["contains"]);
    std::vector<std::string> known;
    for (const auto& kr : k->rows) {
      if (kr.contains("name") && kr["name"].is_string()) known.push_back(kr["name"].get<std::string>());
    }
    json checks = json::array();
    for (const auto& ing : strings_of(p["ingredients"])) {
      std::string status = !contains(known, ing) ? "unknown" : contains(contained, ing) ? "contained" : "not_contained";
      checks.push_back({{"ingredient", ing}, {"status", status}});
    }
    r["ingredient_checks"] = checks;
    r["ingredient_refs"] = {d->id, k->id};
  }
  return v;
}

Verdict add_person(SemanticsContext& ctx) {
  const json& p = *ctx.params;
  const TaskSchema& schema = *ctx.schema;
  Verdict v;
  v.semantics = "advisor.add_person";
  std::string user = p.at("user").get<std::string>();
  const EvidenceItem* existing = by_label(ctx, "existing");
  require_success(existing, "person lookup");
  if (!existing->rows.empty()) {
    throw Error(ErrorCode::DuplicatePerson, "person '" + user + "' already exists", {{"user", user}});
  }
  Adapter* adapter = ctx.adapters->for_domain(ctx.domain);
  if (adapter == nullptr) throw Error(ErrorCode::AdapterMissing, "no adapter for " + std::string{ctx.domain});

  Node n;
  n.id = "person:" + key_segment(user);
  n.label = "Person";
  n.props["name"] = user;
  for (const char* f : {"daily_calories", "daily_protein", "daily_carbs", "daily_fat"}) n.props[f] = p.at(f);
  std::vector<Edge> edges;
  std::vector<std::string> unknown;
  auto intolerances = p.contains("intolerances") ? strings_of(p["intolerances"]) : std::vector<std::string>{};
  if (!intolerances.empty()) {
    n.props["intolerances"] = intolerances;
    const EvidenceItem& known = run(ctx, {{"id", "AddToDatabase.allergen_lookup"},
                                          {"label", "allergen_lookup"},
                                          {"steps", {{{"match", {{"label", "Allergen"},
                                                                 {"filters", {{{"attr", "name"}, {"op", "in"}, {"values", intolerances}}}}}},
                                                      {"project", {"id", "name"}}}}}});
    require_success(&known, "allergen lookup");
    for (const auto& name : intolerances) {
      auto it = std::find_if(known.rows.begin(), known.rows.end(),
                             [&](const json& row) { return row.value("name", std::string{}) == name; });
      if (it == known.rows.end()) {
        unknown.push_back(name);
      } else {
        edges.push_back({n.id, (*it)["id"].get<std::string>(), "ALLERGIC_TO"});
      }
    }
  }
  std::string created = adapter->create_node(n, edges);
  const EvidenceItem& check = run(ctx, {{"id", "AddToDatabase.verify"},
                                        {"label", "verify"},
                                        {"steps", {{{"match", {{"label", "Person"},
                                                               {"filters", {{{"attr", "name"}, {"op", "eq"}, {"value", user}}}}}},
                                                    {"project", {"name", "daily_calories", "daily_protein", "daily_carbs", "daily_fat",
                                                                 json{{"attr", "name"},
                                                                      {"reach", {{{"edge", "ALLERGIC_TO"}, {"direction", "out"}}}},
                                                                      {"as", "allergies"}}}}}}}});
  require_success(&check, "profile verification");
  v.record = {{"user", user},   {"created", created},       {"ref", check.id},
              {"row", 0},       {"intolerances", intolerances}, {"unknown_intolerances", unknown}};
  for (const auto& f : schema.fields) {
    if (!f.memory_key || !p.contains(f.name) || p[f.name].is_null()) continue;
    if (auto key = expand_memory_key(*f.memory_key, p)) v.facts.push_back({*key, p[f.name], f.memory_priority});
  }
  return v;
}


Verdict substitute_dish(SemanticsContext& ctx) {
  const json& p = *ctx.params;
  Verdict v;
  v.semantics = "advisor.substitute_dish";
  std::string user = p.at("user").get<std::string>();
  const EvidenceItem* person = by_label(ctx, "person");
  const EvidenceItem* cands = by_label(ctx, "candidates");
  require_success(person, "person");
  require_success(cands, "candidate");
  auto prefer = p.contains("prefer") ? strings_of(p["prefer"]) : std::vector<std::string>{};
  auto exclude = p.contains("exclude") ? strings_of(p["exclude"]) : std::vector<std::string>{};
  bool only_flag = p.value("only_flag", false) && p.contains("only_ingredients");
  auto only = only_flag ? strings_of(p["only_ingredients"]) : std::vector<std::string>{};
  std::string meal = p.contains("meal") && p["meal"].is_string() ? p["meal"].get<std::string>() : "";

  struct Ranked {
    std::size_t row;
    std::string name;
    std::vector<std::string> preferred_hits;
    bool recommended;
    bool meal_match;
  };
  std::vector<Ranked> ranked;
  for (std::size_t i = 0; i < cands->rows.size(); ++i) {
    const json& row = cands->rows[i];
    if (only_flag) {
      auto direct = strings_of(row.value("ingredients", json::array()));
      bool ok = std::all_of(direct.begin(), direct.end(), [&](const std::string& s) { return contains(only, s); });
      if (!ok) continue;
    }
    Ranked r{i, row.value("name", std::string{}), {}, false, false};
    auto all = strings_of(row.value("all_ingredients", json::array()));
    for (const auto& pi : prefer) {
      if (contains(all, pi)) r.preferred_hits.push_back(pi);
    }
    r.recommended = contains(strings_of(row.value("recommended_for", json::array())), user);
    r.meal_match = !meal.empty() && row.value("meal_type", std::string{}) == meal;
    ranked.push_back(std::move(r));
  }
  if (std::any_of(ranked.begin(), ranked.end(), [](const Ranked& r) { return r.meal_match; })) {
    std::erase_if(ranked, [](const Ranked& r) { return !r.meal_match; });
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.preferred_hits.size() != b.preferred_hits.size()) return a.preferred_hits.size() > b.preferred_hits.size();
    if (a.recommended != b.recommended) return a.recommended;
    if (a.meal_match != b.meal_match) return a.meal_match;
    return a.name < b.name;
  });
  json list = json::array();
  for (const auto& r : ranked) {
    list.push_back({{"name", r.name},
                    {"row", r.row},
                    {"preferred_hits", r.preferred_hits},
                    {"recommended", r.recommended},
                    {"meal_match", r.meal_match}});
  }
  json prow = first_row(person);
  v.record = {{"user", user},
              {"user_found", !prow.is_null()},
              {"allergies", prow.is_null() ? json::array() : prow.value("allergies", json::array())},
              {"exclude", exclude},
              {"prefer", prefer},
              {"only_ingredients", only_flag ? json(only) : json(nullptr)},
              {"meal", meal.empty() ? json(nullptr) : json(meal)},
              {"day", p.value("day", json(nullptr))},
              {"ranked", list},
              {"refs", {cands->id, person->id}}};
  if (!ranked.empty()) {
    v.facts.push_back({"person." + key_segment(user) + ".last_suggestion", ranked.front().name, Priority::Episodic});
  }
  return v;
}

Verdict movie_info(SemanticsContext& ctx) {
  Verdict v;
  v.semantics = "movies.movie_info";
  std::string title = ctx.params->at("title").get<std::string>();
  const EvidenceItem* item = by_label(ctx, "movie");
  require_success(item, "movie");
  json row = first_row(item);
  v.record = {{"title", title}, {"found", !row.is_null()}, {"ref", item->id}, {"row", 0}, {"movie", row}};
  if (!row.is_null()) {
    for (const auto& [k, val] : row.items()) {
      if (k != "title" && !val.is_null()) v.facts.push_back({"movie." + key_segment(title) + "." + k, val, Priority::Episodic});
    }
  }
  return v;
}

Verdict timetable(SemanticsContext& ctx) {
  Verdict v;
  v.semantics = "movies.timetable";
  std::string title = ctx.params->at("title").get<std::string>();
  const EvidenceItem* item = by_label(ctx, "screenings");
  require_success(item, "screening");
  v.record = {{"title", title}, {"ref", item->id}, {"screenings", item->rows.size()},
              {"day", ctx.params->value("day", json(nullptr))}};
  return v;
}

Verdict generic_lookup(SemanticsContext& ctx) {
  Verdict v;
  v.semantics = "generic.lookup";
  json refs = json::array();
  std::size_t rows = 0;
  for (const auto& e : *ctx.evidence) {
    refs.push_back(e.id);
    rows += e.failed ? 0 : e.rows.size();
  }
  v.record = {{"refs", refs}, {"rows", rows}};
  return v;
}

}  // namespace

const std::map<std::string, SemanticsHandler, std::less<>>& semantics_handlers() {
  static const std::map<std::string, SemanticsHandler, std::less<>> kHandlers{
      {"advisor.add_person", add_person},       {"advisor.dish_info", dish_info},
      {"advisor.substitute_dish", substitute_dish}, {"movies.movie_info", movie_info},
      {"movies.timetable", timetable},          {"generic.lookup", generic_lookup},
  };
  return kHandlers;
}

Verdict apply_execution_semantics(SemanticsContext& ctx) {
  if (ctx.schema == nullptr || ctx.params == nullptr || ctx.evidence == nullptr || ctx.queries == nullptr ||
      ctx.adapters == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "incomplete semantics context");
  }
  auto it = semantics_handlers().find(ctx.schema->execution_semantics);
  if (it == semantics_handlers().end()) {
    throw Error(ErrorCode::InvalidArgument, "no execution semantics '" + ctx.schema->execution_semantics + "'");
  }
  return it->second(ctx);
}

}  // namespace dctl
