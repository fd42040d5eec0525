#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>
#include <set>

#include <httplib.h>

#include "dctl/error.hpp"
#include "dctl/model_gateway.hpp"
#include "dctl/text.hpp"

namespace dctl {

// ---------------------------------------------------------------------------
// Scripted

std::string ScriptedProvider::key(ModuleId module, std::string_view input) {
  return std::string{to_string(module)} + ":" + sha256_hex(canonicalize(input));
}

void ScriptedProvider::add(ModuleId module, std::string_view input, json payload) {
  entries_[key(module, input)] = std::move(payload);
}

void ScriptedProvider::add_keyed(std::string key, json payload) {
  entries_[std::move(key)] = std::move(payload);
}

bool ScriptedProvider::has(ModuleId module, std::string_view input) const {
  return entries_.count(key(module, input)) > 0;
}

ScriptedProvider ScriptedProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) throw Error(ErrorCode::IoError, "cannot open script " + path.string());
  ScriptedProvider provider;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    json entry;
    try {
      entry = json::parse(t);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto where = path.string() + ":" + std::to_string(lineno);
    if (!entry.contains("module") || !entry.contains("payload")) {
      throw Error(ErrorCode::ParseError, where + ": entry needs module and payload");
    }
    auto module = module_from_string(entry["module"].get<std::string>());
    if (!module) throw Error(ErrorCode::ParseError, where + ": unknown module");
    if (entry.contains("key")) {
      provider.add_keyed(std::string{to_string(*module)} + ":" + entry["key"].get<std::string>(),
                         entry["payload"]);
    } else if (entry.contains("input")) {
      provider.add(*module, entry["input"].get<std::string>(), entry["payload"]);
    } else {
      throw Error(ErrorCode::ParseError, where + ": entry needs input or key");
    }
  }
  return provider;
}

ProviderReply ScriptedProvider::generate(const ModelRequest& request) const {
  auto it = entries_.find(key(request.module, request.input));
  if (it == entries_.end()) {
    throw Error(ErrorCode::ScriptMiss, "no script entry for " + std::string{to_string(request.module)} +
                                           " input \"" + canonicalize(request.input) + "\"");
  }
  return ProviderReply{it->second, std::nullopt, std::nullopt};
}

// ---------------------------------------------------------------------------
// Heuristic

namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> kWords{
      "a", "an", "the", "is", "are", "was", "were", "be", "to", "of", "in", "on", "at", "for",
      "and", "or", "with", "how", "what", "which", "who", "when", "where", "why", "do", "does",
      "did", "can", "could", "would", "should", "will", "please", "me", "my", "i", "im", "i'm",
      "you", "your", "it", "its", "this", "that", "there", "many", "much", "some", "any", "about",
      "by", "from", "as", "s", "m", "have", "has", "want", "like", "tell", "give", "show", "get",
      "need", "us", "we", "our", "help", "am"};
  return kWords;
}

std::string stem(std::string t) {
  if (t.size() > 4 && t.ends_with("ies")) return t.substr(0, t.size() - 3) + "y";
  if (t.size() > 3 && t.ends_with("s") && !t.ends_with("ss")) t.pop_back();
  return t;
}

std::set<std::string> content_tokens(std::string_view text) {
  std::set<std::string> out;
  for (auto& t : tokenize(text)) {
    if (stopwords().count(t) == 0) out.insert(stem(t));
  }
  return out;
}

/// "SubstituteDish" -> "substitute dish".
std::string split_camel(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0 && std::isupper(static_cast<unsigned char>(s[i])) &&
        std::islower(static_cast<unsigned char>(s[i - 1]))) {
      out.push_back(' ');
    }
    out.push_back(s[i]);
  }
  return out;
}

std::string join_strings(const json& arr) {
  std::string out;
  if (!arr.is_array()) return out;
  for (const auto& e : arr) {
    if (!e.is_string()) continue;
    out += ' ';
    out += split_camel(e.get<std::string>());
  }
  return out;
}

double overlap_ratio(const std::set<std::string>& query, const std::set<std::string>& doc) {
  if (query.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& t : query) hit += doc.count(t);
  return static_cast<double>(hit) / static_cast<double>(query.size());
}

json heuristic_scope(const ModelRequest& req) {
  const json& ctx = req.context;
  auto query = content_tokens(req.input);
  std::string best = "OutOfScope";
  double best_score = 0.0;
  std::string previous = ctx.value("previous", std::string{});
  bool previous_is_candidate = false;
  for (const auto& c : ctx.value("candidates", json::array())) {
    std::string id = c.value("id", std::string{});
    if (id == previous) previous_is_candidate = true;
    std::string doc = c.value("description", std::string{}) + join_strings(c.value("tasks", json::array())) +
                      join_strings(c.value("keywords", json::array()));
    double score = overlap_ratio(query, content_tokens(doc));
    bool better = score > best_score || (score == best_score && score > 0 && id == previous);
    if (better) {
      best_score = score;
      best = id;
    }
  }
  if (best_score < HeuristicProvider::kScopeThreshold) {
    auto toks = tokenize(req.input);
    bool continuation = !toks.empty() && (toks[0] == "and" || toks[0] == "also" ||
                                          (toks.size() > 1 && toks[1] == "about" &&
                                           (toks[0] == "what" || toks[0] == "how")));
    if (continuation && previous_is_candidate) {
      return {{"domain", previous}, {"rationale", "continuation of the previous domain"}};
    }
    return {{"domain", "OutOfScope"},
            {"rationale", "best overlap " + format_number(best_score) + " below threshold"}};
  }
  return {{"domain", best}, {"rationale", "token overlap " + format_number(best_score)}};
}

std::vector<std::string> split_list(const std::string& s) {
  static const std::regex kSep{R"(\s*(?:,|\band\b|\bor\b|;)\s*)", std::regex::icase};
  std::vector<std::string> out;
  for (auto it = std::sregex_token_iterator(s.begin(), s.end(), kSep, -1);
       it != std::sregex_token_iterator(); ++it) {
    std::string t = trim(it->str());
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

json extract_field(const json& field, const std::string& text) {
  std::string type = field.value("type", std::string{"text"});
  for (const auto& p : field.value("patterns", json::array())) {
    std::regex re{p.get<std::string>(), std::regex::icase | std::regex::ECMAScript};
    std::smatch m;
    if (!std::regex_search(text, m, re)) continue;
    if (type == "boolean") return true;
    std::string cap = m.size() > 1 ? m[1].str() : m[0].str();
    if (type == "integer" || type == "real") {
      auto v = parse_number(cap);
      if (!v) continue;
      if (m.size() > 2 && m[2].matched && !m[2].str().empty()) {
        return {{"value", *v}, {"unit", to_lower(m[2].str())}};
      }
      return type == "integer" ? json(static_cast<std::int64_t>(*v)) : json(*v);
    }
    if (type == "list-of-text") return json(split_list(cap));
    return trim(cap);
  }
  return nullptr;
}

json heuristic_intent(const ModelRequest& req) {
  auto query = content_tokens(req.input);
  const json schemas = req.context.value("schemas", json::array());
  const json* best = nullptr;
  double best_score = 0.0;
  for (const auto& s : schemas) {
    std::string doc = split_camel(s.value("name", std::string{})) + " " +
                      join_strings(s.value("keywords", json::array()));
    double score = overlap_ratio(query, content_tokens(doc));
    if (score > best_score) {
      best_score = score;
      best = &s;
    }
  }
  if (best == nullptr) return {{"schema", nullptr}, {"rationale", "no task keywords matched"}};
  json params = json::object();
  for (const auto& f : best->value("fields", json::array())) {
    json v = extract_field(f, req.input);
    if (!v.is_null()) params[f.value("name", std::string{})] = v;
  }
  return {{"schema", best->value("name", std::string{})},
          {"params", params},
          {"rationale", "keyword overlap " + format_number(best_score)}};
}

json heuristic_suff(const ModelRequest& req) {
  auto toks = tokenize(req.input);
  static const std::set<std::string, std::less<>> kPersonal{"my", "me", "mine", "i", "im", "myself"};
  bool personal = false;
  for (const auto& t : toks) personal = personal || kPersonal.count(t) > 0;
  if (!personal) return {{"sufficient", true}, {"rationale", "no personal context referenced"}};
  std::string known;
  for (const auto& k : {"core", "history"}) {
    for (const auto& d : req.context.value(k, json::array())) {
      if (d.is_string()) known += " " + d.get<std::string>();
    }
  }
  auto have = content_tokens(known);
  auto need = content_tokens(req.input);
  for (const auto& t : need) {
    if (have.count(t) == 0) {
      return {{"sufficient", false}, {"rationale", "'" + t + "' not found in core or history"}};
    }
  }
  return {{"sufficient", true}, {"rationale", "all referenced terms present locally"}};
}

json heuristic_inner(const ModelRequest& req) {
  const json& ctx = req.context;
  std::string schema = ctx.value("schema", std::string{});
  if (!ctx.value("complete", false)) {
    std::string missing = display_value(ctx.value("missing", json::array()));
    return {{"rationale", schema + " cannot run yet; missing or invalid: " + missing}};
  }
  bool tool = ctx.value("tool_needed", true);
  return {{"rationale", schema + " has every required field; " +
                            (tool ? std::string{"evidence must be fetched from the backend"}
                                  : std::string{"working context already covers the evidence"})}};
}

}  // namespace

ProviderReply HeuristicProvider::generate(const ModelRequest& request) const {
  switch (request.module) {
    case ModuleId::ScopeDetection: return {heuristic_scope(request), std::nullopt, std::nullopt};
    case ModuleId::IntentRecognition: return {heuristic_intent(request), std::nullopt, std::nullopt};
    case ModuleId::MemorySuff: return {heuristic_suff(request), std::nullopt, std::nullopt};
    case ModuleId::InnerSpeech: return {heuristic_inner(request), std::nullopt, std::nullopt};
    default:
      throw Error(ErrorCode::Unsupported,
                  "heuristic provider does not generate " + std::string{to_string(request.module)});
  }
}

// ---------------------------------------------------------------------------
// Remote

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must be an absolute URL: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

RemoteProvider::RemoteProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
}

json RemoteProvider::build_body(const ModelRequest& request) const {
  std::string system;
  for (const auto& a : request.prompt_assets) system += a + "\n\n";
  system += "Reply with a single JSON object matching the schema '" + request.output_schema_id +
            "'. Do not add fields that the schema does not define.";
  std::string user;
  for (const auto& d : request.context_docs) user += d + "\n\n";
  user += "Input:\n" + request.input;
  return {{"model", *config_.model_name},
          {"temperature", request.temperature},
          {"response_format", {{"type", "json_object"}}},
          {"messages", json::array({{{"role", "system"}, {"content", system}},
                                    {{"role", "user"}, {"content", user}}})}};
}

ProviderReply RemoteProvider::generate(const ModelRequest& request) const {
  ParsedUrl url = parse_url(*config_.endpoint);
  httplib::Client client{url.origin};
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
  client.set_connection_timeout(secs > 0 ? secs : 1);
  client.set_read_timeout(secs > 0 ? secs : 1);

  httplib::Headers headers;
  if (config_.api_key_env) {
    if (const char* key = std::getenv(config_.api_key_env->c_str())) {
      headers.emplace("Authorization", std::string{"Bearer "} + key);
    }
  }
  json body = build_body(request);
  if (config_.trace) {
    std::cerr << "[remote] POST " << *config_.endpoint << " Authorization: Bearer ***\n"
              << body.dump() << "\n";
  }
  auto res = client.Post(url.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::TransportError,
                "request to " + *config_.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (config_.trace) std::cerr << "[remote] " << res->status << " " << res->body << "\n";
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::TransportError,
                "endpoint returned HTTP " + std::to_string(res->status));
  }
  json envelope;
  try {
    envelope = json::parse(res->body);
    std::string content = envelope.at("choices").at(0).at("message").at("content").get<std::string>();
    ProviderReply reply{json::parse(content), std::nullopt, std::nullopt};
    if (envelope.contains("usage")) {
      const auto& u = envelope["usage"];
      if (u.contains("prompt_tokens")) reply.input_tokens = u["prompt_tokens"].get<std::size_t>();
      if (u.contains("completion_tokens")) reply.output_tokens = u["completion_tokens"].get<std::size_t>();
    }
    return reply;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string{"unparseable completion: "} + e.what());
  }
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::Scripted:
      return std::make_shared<ScriptedProvider>(ScriptedProvider::from_file(*config.script_path));
    case ProviderKind::Remote: return std::make_shared<RemoteProvider>(config);
    case ProviderKind::Heuristic: return std::make_shared<HeuristicProvider>();
  }
  return std::make_shared<HeuristicProvider>();
}

}  // namespace dctl
