#include "dctl/customization.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

std::string_view to_string(SemanticType t) {
  switch (t) {
    case SemanticType::Text: return "text";
    case SemanticType::Integer: return "integer";
    case SemanticType::Real: return "real";
    case SemanticType::Boolean: return "boolean";
    case SemanticType::TextList: return "list-of-text";
  }
  return "text";
}

std::optional<SemanticType> semantic_type_from_string(std::string_view s) {
  for (auto t : {SemanticType::Text, SemanticType::Integer, SemanticType::Real, SemanticType::Boolean,
                 SemanticType::TextList}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::string_view to_string(Priority p) {
  switch (p) {
    case Priority::HardConstraint: return "HardConstraint";
    case Priority::Identity: return "Identity";
    case Priority::Preference: return "Preference";
    case Priority::Episodic: return "Episodic";
  }
  return "Episodic";
}

std::optional<Priority> priority_from_string(std::string_view s) {
  for (auto p : {Priority::HardConstraint, Priority::Identity, Priority::Preference, Priority::Episodic}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

int rank(Priority p) { return 3 - static_cast<int>(p); }

std::optional<std::string> Constraint::check(const json& value) const {
  if (value.is_array()) {
    for (const auto& v : value) {
      if (auto r = check(v)) return r;
    }
    return std::nullopt;
  }
  if (value.is_number()) {
    double v = value.get<double>();
    if (min && v < *min) return "must be >= " + format_number(*min);
    if (max && v > *max) return "must be <= " + format_number(*max);
  }
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (!one_of.empty() && std::find(one_of.begin(), one_of.end(), s) == one_of.end()) {
      std::string allowed;
      for (const auto& o : one_of) allowed += (allowed.empty() ? "" : ", ") + o;
      return "must be one of {" + allowed + "}";
    }
    if (regex && !std::regex_match(s, std::regex{*regex})) return "must match " + *regex;
  }
  return std::nullopt;
}

std::string FieldSpec::display_label() const {
  if (!label.empty()) return label;
  std::string out = name;
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

const FieldSpec* TaskSchema::field(std::string_view n) const {
  for (const auto& f : fields) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

std::vector<std::string> TaskSchema::required_fields() const {
  std::vector<std::string> out;
  for (const auto& f : fields) {
    if (f.required) out.push_back(f.name);
  }
  return out;
}

std::vector<EvidenceDescriptor> TaskSchema::instantiate_requirements(const json& params) const {
  std::vector<EvidenceDescriptor> out;
  for (const auto& r : evidence_requirements) {
    if (r.when && (!params.contains(*r.when) || params[*r.when].is_null())) continue;
    if (!params.contains(r.key_field) || params[r.key_field].is_null()) continue;
    const json& key = params[r.key_field];
    if (key.is_array()) {
      for (const auto& k : key) {
        out.push_back({r.kind, key_segment(display_value(k)), r.attributes, r.live});
      }
    } else {
      out.push_back({r.kind, key_segment(display_value(key)), r.attributes, r.live});
    }
  }
  return out;
}

json TaskSchema::to_json() const {
  json fs = json::array();
  for (const auto& f : fields) {
    json jf{{"name", f.name}, {"type", to_string(f.type)}, {"required", f.required}};
    if (f.unit) jf["unit"] = *f.unit;
    if (!f.patterns.empty()) jf["patterns"] = f.patterns;
    fs.push_back(std::move(jf));
  }
  return {{"name", name}, {"description", description}, {"keywords", keywords}, {"fields", fs}};
}

const TaskSchema* DomainManifest::schema(std::string_view n) const {
  for (const auto& s : task_schemas) {
    if (s.name == n) return &s;
  }
  return nullptr;
}

std::vector<std::string> DomainManifest::task_list() const {
  if (task_schemas.empty()) return task_names;
  std::vector<std::string> out;
  for (const auto& s : task_schemas) out.push_back(s.name);
  return out;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<T>();
}

FieldSpec parse_field(const json& j, const std::string& where) {
  FieldSpec f;
  f.name = j.at("name").get<std::string>();
  f.label = get_or<std::string>(j, "label", "");
  std::string type = get_or<std::string>(j, "type", "text");
  auto t = semantic_type_from_string(type);
  if (!t) throw Error(ErrorCode::ParseError, where + ": unknown type '" + type + "'", {{f.name, "unknown type"}});
  f.type = *t;
  f.required = get_or<bool>(j, "required", false);
  if (j.contains("unit")) f.unit = j["unit"].get<std::string>();
  f.identifier = get_or<bool>(j, "identifier", false);
  if (j.contains("constraint")) {
    const auto& c = j["constraint"];
    if (c.contains("min")) f.constraint.min = c["min"].get<double>();
    if (c.contains("max")) f.constraint.max = c["max"].get<double>();
    if (c.contains("enum")) f.constraint.one_of = c["enum"].get<std::vector<std::string>>();
    if (c.contains("regex")) {
      f.constraint.regex = c["regex"].get<std::string>();
      try {
        std::regex probe{*f.constraint.regex};
      } catch (const std::regex_error&) {
        throw Error(ErrorCode::ParseError, where + ": bad regex", {{f.name, "bad regex"}});
      }
    }
  }
  if (j.contains("memory_key")) f.memory_key = j["memory_key"].get<std::string>();
  if (j.contains("memory_priority")) {
    auto p = priority_from_string(j["memory_priority"].get<std::string>());
    if (!p) throw Error(ErrorCode::ParseError, where + ": unknown priority", {{f.name, "unknown priority"}});
    f.memory_priority = *p;
  }
  f.patterns = get_or<std::vector<std::string>>(j, "patterns", {});
  return f;
}

TaskSchema parse_schema(const json& j, const std::string& where) {
  TaskSchema s;
  s.name = j.at("name").get<std::string>();
  s.description = get_or<std::string>(j, "description", "");
  s.execution_semantics = get_or<std::string>(j, "execution_semantics", "generic.lookup");
  s.keywords = get_or<std::vector<std::string>>(j, "keywords", {});
  std::set<std::string> seen;
  for (const auto& jf : j.value("fields", json::array())) {
    FieldSpec f = parse_field(jf, where + ":" + s.name);
    if (!seen.insert(f.name).second) {
      throw Error(ErrorCode::DuplicateField, where + ": field '" + f.name + "' repeated in " + s.name,
                  {{f.name, "duplicate in schema " + s.name}});
    }
    s.fields.push_back(std::move(f));
  }
  for (const auto& jr : j.value("evidence_requirements", json::array())) {
    EvidenceRequirement r;
    r.kind = jr.at("kind").get<std::string>();
    r.key_field = jr.at("key_field").get<std::string>();
    r.attributes = get_or<std::vector<std::string>>(jr, "attributes", {});
    if (jr.contains("when")) r.when = jr["when"].get<std::string>();
    r.live = get_or<bool>(jr, "live", false);
    if (s.field(r.key_field) == nullptr) {
      throw Error(ErrorCode::ParseError, where + ": evidence key '" + r.key_field + "' is not a field",
                  {{r.key_field, "not a field of " + s.name}});
    }
    s.evidence_requirements.push_back(std::move(r));
  }
  return s;
}

}  // namespace

DomainManifest DomainManifest::from_json(const json& j, std::string_view source) {
  std::string where{source};
  DomainManifest m;
  try {
    m.domain_id = j.at("domain_id").get<std::string>();
    m.description = get_or<std::string>(j, "description", "");
    for (const auto& js : j.value("tasks", json::array())) {
      m.task_schemas.push_back(parse_schema(js, where));
    }
    m.task_names = get_or<std::vector<std::string>>(j, "task_names", {});
    if (j.contains("qg_templates")) {
      for (const auto& [schema, list] : j["qg_templates"].items()) {
        auto& out = m.qg_templates[schema];
        for (const auto& t : list) {
          QueryTemplate qt;
          qt.label = get_or<std::string>(t, "label", schema);
          if (t.contains("when")) qt.when = t["when"].get<std::string>();
          qt.spec = t.at("spec");
          out.push_back(std::move(qt));
        }
      }
    }
    m.plugins = get_or<std::vector<std::string>>(j, "plugins", {});
    m.prompt_assets = get_or<std::map<std::string, std::string>>(j, "prompt_assets", {});
    if (j.contains("backend")) {
      m.backend = BackendBinding{j["backend"].at("adapter").get<std::string>(),
                                 j["backend"].value("params", json::object())};
    }
    m.reject_keywords = get_or<std::vector<std::string>>(j, "reject_keywords", {});
    m.keywords = get_or<std::vector<std::string>>(j, "keywords", {});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, where + ": " + e.what());
  }
  if (m.domain_id.empty() || m.domain_id == kOutOfScope) {
    throw Error(ErrorCode::ParseError, where + ": invalid domain_id", {{"domain_id", "reserved or empty"}});
  }
  std::set<std::string> names;
  for (const auto& s : m.task_schemas) {
    if (!names.insert(s.name).second) {
      throw Error(ErrorCode::DuplicateField, where + ": schema '" + s.name + "' repeated", {{s.name, "duplicate schema"}});
    }
    auto it = m.qg_templates.find(s.name);
    if (it == m.qg_templates.end() || it->second.empty()) {
      throw Error(ErrorCode::DanglingTemplate, where + ": schema '" + s.name + "' has no query template",
                  {{s.name, "no qg_template for " + s.execution_semantics}});
    }
  }
  for (const auto& p : m.plugins) {
    if (PluginRegistry::builtin().find(p) == nullptr) {
      throw Error(ErrorCode::ParseError, where + ": unknown plugin '" + p + "'", {{"plugins", p}});
    }
  }
  return m;
}

DomainManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return DomainManifest::from_json(j, path.string());
}

void DomainRegistry::register_domain(DomainManifest m) {
  if (contains(m.domain_id)) {
    throw Error(ErrorCode::DuplicateDomain, "domain '" + m.domain_id + "' already registered",
                {{"domain_id", m.domain_id}});
  }
  manifests_.push_back(std::make_shared<const DomainManifest>(std::move(m)));
}

bool DomainRegistry::contains(std::string_view id) const { return find(id) != nullptr; }

std::shared_ptr<const DomainManifest> DomainRegistry::find(std::string_view id) const {
  for (const auto& m : manifests_) {
    if (m->domain_id == id) return m;
  }
  return nullptr;
}

std::shared_ptr<const DomainManifest> DomainRegistry::get(std::string_view id) const {
  auto m = find(id);
  if (!m) throw Error(ErrorCode::UnknownDomain, "unknown domain '" + std::string{id} + "'");
  return m;
}

std::vector<std::string> DomainRegistry::list() const {
  std::vector<std::string> out;
  for (const auto& m : manifests_) out.push_back(m->domain_id);
  out.emplace_back(kOutOfScope);
  return out;
}

DomainRegistry DomainRegistry::load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "domains directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  DomainRegistry reg;
  for (const auto& f : files) {
    auto m = load_manifest(f);
    if (m.domain_id != f.stem().string()) {
      throw Error(ErrorCode::ParseError, f.string() + ": domain_id '" + m.domain_id + "' does not match file name");
    }
    reg.register_domain(std::move(m));
  }
  return reg;
}

ActiveConfig::ActiveConfig(std::vector<std::shared_ptr<const DomainManifest>> candidates, std::string active)
    : candidates_(std::move(candidates)), active_(std::move(active)) {
  if (active_ != kOutOfScope && !has_candidate(active_)) {
    throw Error(ErrorCode::UnknownDomain, "unknown domain '" + active_ + "'");
  }
}

ActiveConfig ActiveConfig::from_registry(const DomainRegistry& reg, std::string active) {
  return ActiveConfig{reg.manifests(), std::move(active)};
}

bool ActiveConfig::has_candidate(std::string_view id) const {
  return std::any_of(candidates_.begin(), candidates_.end(),
                     [&](const auto& m) { return m->domain_id == id; });
}

const DomainManifest* ActiveConfig::active_manifest() const {
  for (const auto& m : candidates_) {
    if (m->domain_id == active_) return m.get();
  }
  return nullptr;
}

std::vector<const TaskSchema*> ActiveConfig::schemas() const {
  std::vector<const TaskSchema*> out;
  if (const auto* m = active_manifest()) {
    for (const auto& s : m->task_schemas) out.push_back(&s);
  }
  return out;
}

const TaskSchema* ActiveConfig::schema(std::string_view name) const {
  const auto* m = active_manifest();
  return m ? m->schema(name) : nullptr;
}

const std::vector<QueryTemplate>* ActiveConfig::templates(std::string_view schema_name) const {
  const auto* m = active_manifest();
  if (!m) return nullptr;
  auto it = m->qg_templates.find(schema_name);
  return it == m->qg_templates.end() ? nullptr : &it->second;
}

std::vector<std::string> ActiveConfig::plugins() const {
  const auto* m = active_manifest();
  return m ? m->plugins : std::vector<std::string>{};
}

std::optional<std::string> ActiveConfig::prompt_asset(ModuleId module) const {
  const auto* m = active_manifest();
  if (!m) return std::nullopt;
  auto it = m->prompt_assets.find(std::string{to_string(module)});
  if (it == m->prompt_assets.end()) return std::nullopt;
  return it->second;
}

bool ActiveConfig::operator==(const ActiveConfig& o) const {
  return active_ == o.active_ && candidates_ == o.candidates_;
}

ActiveConfig activate_domain(const ActiveConfig& cfg, std::string_view domain) {
  if (domain != kOutOfScope && !cfg.has_candidate(domain)) {
    throw Error(ErrorCode::UnknownDomain, "unknown domain '" + std::string{domain} + "'",
                {{"domain", std::string{domain}}});
  }
  return ActiveConfig{cfg.candidates(), std::string{domain}};
}

std::optional<std::string> expand_memory_key(std::string_view tmpl, const json& params) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    auto open = tmpl.find("${", i);
    if (open == std::string_view::npos) {
      out += tmpl.substr(i);
      break;
    }
    auto close = tmpl.find('}', open);
    if (close == std::string_view::npos) return std::nullopt;
    out += tmpl.substr(i, open - i);
    std::string name{tmpl.substr(open + 2, close - open - 2)};
    if (!params.contains(name) || params[name].is_null()) return std::nullopt;
    out += key_segment(display_value(params[name]));
    i = close + 1;
  }
  return to_lower(out);
}

// ---------------------------------------------------------------------------

namespace {

json dedup_lowercase_lists(const TaskSchema& schema, json params) {
  for (auto& [k, v] : params.items()) {
    const FieldSpec* f = schema.field(k);
    if (f == nullptr || f->type != SemanticType::TextList || !v.is_array()) continue;
    json out = json::array();
    std::set<std::string> seen;
    for (const auto& e : v) {
      if (!e.is_string()) continue;
      std::string s = to_lower(trim(e.get<std::string>()));
      if (!s.empty() && seen.insert(s).second) out.push_back(s);
    }
    v = std::move(out);
  }
  return params;
}

}  // namespace

const PluginRegistry& PluginRegistry::builtin() {
  static const PluginRegistry reg = [] {
    PluginRegistry r;
    r.add("dedup_lowercase_lists", dedup_lowercase_lists);
    return r;
  }();
  return reg;
}

void PluginRegistry::add(std::string id, Plugin p) { plugins_[std::move(id)] = std::move(p); }

const Plugin* PluginRegistry::find(std::string_view id) const {
  auto it = plugins_.find(id);
  return it == plugins_.end() ? nullptr : &it->second;
}

}  // namespace dctl
