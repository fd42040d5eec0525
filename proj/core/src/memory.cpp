#include "dctl/memory.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

// ---------------------------------------------------------------------------
// Serialization

std::string Fact::text() const { return key + ": " + display_value(value); }

json Fact::to_json() const {
  json j{{"id", id},
         {"key", key},
         {"value", value},
         {"priority", to_string(priority)},
         {"turn_id", turn_id},
         {"timestamp_ms", timestamp_ms},
         {"superseded_by", nullptr}};
  if (superseded_by) j["superseded_by"] = *superseded_by;
  return j;
}

Fact Fact::from_json(const json& j) {
  Fact f;
  f.id = j.at("id").get<std::uint64_t>();
  f.key = j.at("key").get<std::string>();
  f.value = j.at("value");
  f.priority = priority_from_string(j.at("priority").get<std::string>()).value_or(Priority::Episodic);
  f.turn_id = j.value("turn_id", std::uint64_t{0});
  f.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  if (j.contains("superseded_by") && !j["superseded_by"].is_null()) {
    f.superseded_by = j["superseded_by"].get<std::uint64_t>();
  }
  return f;
}

bool valid_fact_key(std::string_view key) {
  std::size_t segments = 1;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= key.size(); ++i) {
    if (i == key.size() || key[i] == '.') {
      if (i == start) return false;
      if (i < key.size()) ++segments;
      start = i + 1;
    }
  }
  return segments >= 3;
}

void TurnTrace::finalize() {
  std::string s = "Turn " + std::to_string(turn_id) + " in " + (domain.empty() ? "unknown" : domain) +
                  ": user said \"" + utterance + "\".";
  if (!schema.empty()) {
    s += " Task " + schema;
    if (!params.empty()) {
      s += " with ";
      bool first = true;
      for (const auto& [k, v] : params.items()) {
        s += (first ? "" : "; ") + k + "=" + display_value(v);
        first = false;
      }
    }
    s += ".";
  }
  s += " Control " + (control.empty() ? std::string{"none"} : control);
  if (!missing.empty()) {
    s += ", missing ";
    for (std::size_t i = 0; i < missing.size(); ++i) s += (i ? ", " : "") + missing[i];
  }
  s += "; s=" + std::to_string(sufficiency);
  if (tool_needed) s += ", rho=" + std::to_string(*tool_needed);
  s += ".";
  if (!evidence.empty()) {
    s += " Evidence:";
    for (const auto& e : evidence) s += " " + e.id + " (" + e.caption + ")";
    s += ".";
  }
  if (!reply.empty()) s += " Reply: \"" + reply + "\"";
  summary = std::move(s);
  char_length = utf8_length(summary);
}

json TurnTrace::to_json() const {
  json ev = json::array();
  for (const auto& e : evidence) ev.push_back({{"id", e.id}, {"caption", e.caption}});
  json fs = json::array();
  for (const auto& f : facts) {
    fs.push_back({{"key", f.key}, {"value", f.value}, {"priority", to_string(f.priority)}});
  }
  return {{"turn_id", turn_id},       {"timestamp_ms", timestamp_ms},
          {"utterance", utterance},   {"reply", reply},
          {"domain", domain},         {"schema", schema},
          {"params", params},         {"control", control},
          {"missing", missing},       {"sufficiency", sufficiency},
          {"tool_needed", tool_needed ? json(*tool_needed) : json(nullptr)},
          {"evidence", ev},           {"facts", fs},
          {"summary", summary},       {"char_length", char_length}};
}

TurnTrace TurnTrace::from_json(const json& j) {
  TurnTrace t;
  t.turn_id = j.at("turn_id").get<std::uint64_t>();
  t.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  t.utterance = j.value("utterance", std::string{});
  t.reply = j.value("reply", std::string{});
  t.domain = j.value("domain", std::string{});
  t.schema = j.value("schema", std::string{});
  t.params = j.value("params", json::object());
  t.control = j.value("control", std::string{});
  t.missing = j.value("missing", std::vector<std::string>{});
  t.sufficiency = j.value("sufficiency", 1);
  if (j.contains("tool_needed") && !j["tool_needed"].is_null()) t.tool_needed = j["tool_needed"].get<int>();
  for (const auto& e : j.value("evidence", json::array())) {
    t.evidence.push_back({e.at("id").get<std::string>(), e.value("caption", std::string{})});
  }
  for (const auto& f : j.value("facts", json::array())) {
    t.facts.push_back({f.at("key").get<std::string>(), f.at("value"),
                       priority_from_string(f.value("priority", std::string{"Episodic"})).value_or(Priority::Episodic)});
  }
  t.summary = j.value("summary", std::string{});
  t.char_length = j.value("char_length", utf8_length(t.summary));
  return t;
}

std::string_view to_string(ArchiveSource s) {
  return s == ArchiveSource::CoreOverflow ? "CoreOverflow" : "ConsolidationByproduct";
}

json ArchiveItem::to_json() const {
  return {{"id", id()},
          {"seq", seq},
          {"text", text},
          {"embedding", embedding},
          {"source", to_string(source)},
          {"fact", fact ? fact->to_json() : json(nullptr)},
          {"turn_id", turn_id},
          {"timestamp_ms", timestamp_ms}};
}

ArchiveItem ArchiveItem::from_json(const json& j) {
  ArchiveItem a;
  a.seq = j.at("seq").get<std::uint64_t>();
  a.text = j.at("text").get<std::string>();
  a.embedding = j.contains("embedding") ? j["embedding"].get<Vector>() : embed(a.text);
  a.source = j.value("source", std::string{}) == "ConsolidationByproduct" ? ArchiveSource::ConsolidationByproduct
                                                                         : ArchiveSource::CoreOverflow;
  if (j.contains("fact") && !j["fact"].is_null()) a.fact = Fact::from_json(j["fact"]);
  a.turn_id = j.value("turn_id", std::uint64_t{0});
  a.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  return a;
}

json Budgets::to_json() const { return {{"H_max", h_max}, {"B_core", b_core}, {"B_W", b_w}, {"k", k}}; }

Budgets Budgets::from_json(const json& j) {
  Budgets b;
  b.h_max = j.value("H_max", b.h_max);
  b.b_core = j.value("B_core", b.b_core);
  b.b_w = j.value("B_W", b.b_w);
  b.k = j.value("k", b.k);
  if (b.h_max == 0 || b.k == 0) {
    throw Error(ErrorCode::InvalidArgument, "H_max and k must be positive");
  }
  return b;
}

std::size_t MemoryState::core_length() const {
  std::size_t n = 0;
  for (const auto& f : C) n += utf8_length(f.text());
  return n;
}

const Fact* MemoryState::live_fact(std::string_view key) const {
  for (const auto& f : C) {
    if (f.live() && f.key == key) return &f;
  }
  return nullptr;
}

json MemoryState::to_json() const {
  json h = json::array();
  for (const auto& t : H) h.push_back(t.to_json());
  json c = json::array();
  for (const auto& f : C) c.push_back(f.to_json());
  json a = json::array();
  for (const auto& i : A) a.push_back(i.to_json());
  return {{"H", h},
          {"C", c},
          {"A", a},
          {"budgets", budgets.to_json()},
          {"core_length", core_length()},
          {"next_fact_id", next_fact_id},
          {"next_archive_seq", next_archive_seq}};
}

MemoryState MemoryState::from_json(const json& j) {
  MemoryState s;
  for (const auto& t : j.value("H", json::array())) s.H.push_back(TurnTrace::from_json(t));
  for (const auto& f : j.value("C", json::array())) s.C.push_back(Fact::from_json(f));
  for (const auto& a : j.value("A", json::array())) s.A.push_back(ArchiveItem::from_json(a));
  s.budgets = Budgets::from_json(j.value("budgets", json::object()));
  s.next_fact_id = j.value("next_fact_id", std::uint64_t{1});
  s.next_archive_seq = j.value("next_archive_seq", std::uint64_t{1});
  return s;
}

std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::History: return "History";
    case Tier::Core: return "Core";
    case Tier::Archive: return "Archive";
  }
  return "History";
}

json WorkingItem::to_json() const {
  return {{"id", id},
          {"text", text},
          {"tier", to_string(tier)},
          {"priority", to_string(priority)},
          {"char_length", char_length},
          {"key", key ? json(*key) : json(nullptr)},
          {"value", value},
          {"timestamp_ms", timestamp_ms},
          {"turn_id", turn_id}};
}

const WorkingItem* WorkingContext::find(std::string_view id) const {
  for (const auto& i : items) {
    if (i.id == id) return &i;
  }
  return nullptr;
}

const WorkingItem* WorkingContext::fact(std::string_view key) const {
  for (const auto& i : items) {
    if (i.key && *i.key == key && !i.value.is_null()) return &i;
  }
  return nullptr;
}

json WorkingContext::to_json() const {
  json items_j = json::array();
  for (const auto& i : items) items_j.push_back(i.to_json());
  return {{"items", items_j}, {"total_chars", total_chars}};
}

// ---------------------------------------------------------------------------
// Retrieval and the sufficiency gate

std::vector<Retrieved> retrieve_topk(std::string_view query, const std::vector<ArchiveItem>& archive,
                                     std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  Vector q = embed(query);
  std::vector<Retrieved> all;
  all.reserve(archive.size());
  for (const auto& a : archive) all.push_back({a, dot(q, a.embedding)});
  std::stable_sort(all.begin(), all.end(), [](const Retrieved& x, const Retrieved& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    return x.item.seq < y.item.seq;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

SuffResult suff(std::string_view x, const MemoryState& state, const Gateway* gw) {
  SuffResult out;
  if (state.A.empty()) {
    out.rationale = "archive empty; nothing to retrieve";
    return out;
  }
  if (gw == nullptr) {
    out.s = 0;
    out.rationale = "no classifier configured; retrieving";
    return out;
  }
  ModelRequest req;
  req.module = ModuleId::MemorySuff;
  req.input = std::string{x};
  req.output_schema_id = std::string{schema_ids::kSuff};
  req.prompt_assets.push_back(
      "Decide whether core facts and recent history suffice to answer, or archival retrieval is needed.");
  json core = json::array();
  for (const auto& f : state.C) {
    if (f.live()) {
      core.push_back(f.text());
      req.context_docs.push_back(f.text());
    }
  }
  json hist = json::array();
  for (const auto& t : state.H) {
    hist.push_back(t.summary);
    req.context_docs.push_back(t.summary);
  }
  req.context = {{"core", core}, {"history", hist}};
  try {
    ModelResponse res = gw->complete(std::move(req));
    out.usage.add(res);
    out.s = res.payload.at("sufficient").get<bool>() ? 1 : 0;
    out.rationale = res.payload.value("rationale", std::string{});
  } catch (const Error& e) {
    out.s = 0;
    out.rationale = std::string{"classifier unavailable ("} + std::string{to_string(e.code())} + "); retrieving";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Working context

namespace {

int tier_rank(Tier t) {
  switch (t) {
    case Tier::Core: return 2;
    case Tier::History: return 1;
    case Tier::Archive: return 0;
  }
  return 0;
}

/// Total order: does `a` beat `b` for the same key?
bool beats(const WorkingItem& a, const WorkingItem& b) {
  if (rank(a.priority) != rank(b.priority)) return rank(a.priority) > rank(b.priority);
  if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms > b.timestamp_ms;
  if (a.turn_id != b.turn_id) return a.turn_id > b.turn_id;
  if (tier_rank(a.tier) != tier_rank(b.tier)) return tier_rank(a.tier) > tier_rank(b.tier);
  return a.id > b.id;
}

WorkingItem fact_item(std::string id, Tier tier, const std::string& key, const json& value,
                      Priority p, std::int64_t ts, std::uint64_t turn) {
  WorkingItem w;
  w.id = std::move(id);
  w.tier = tier;
  w.key = key;
  w.value = value;
  w.text = key + ": " + display_value(value);
  w.char_length = utf8_length(w.text);
  w.priority = p;
  w.timestamp_ms = ts;
  w.turn_id = turn;
  return w;
}

}  // namespace

std::vector<WorkingItem> coherent(std::vector<WorkingItem> items) {
  std::map<std::string, std::size_t> winner_by_key;
  std::map<std::string, std::size_t> winner_by_text;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& slot = items[i].key ? winner_by_key : winner_by_text;
    const std::string& k = items[i].key ? *items[i].key : items[i].text;
    auto it = slot.find(k);
    if (it == slot.end() || beats(items[i], items[it->second])) slot[k] = i;
  }
  std::vector<WorkingItem> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& slot = items[i].key ? winner_by_key : winner_by_text;
    const std::string& k = items[i].key ? *items[i].key : items[i].text;
    if (slot.at(k) != i) continue;
    if (items[i].key && items[i].value.is_null()) continue;
    out.push_back(std::move(items[i]));
  }
  return out;
}

ReadResult read_context(std::string_view x, const MemoryState& state, const Gateway* gw) {
  ReadResult out;
  out.suff = suff(x, state, gw);

  std::vector<WorkingItem> candidates;
  for (const auto& f : state.C) {
    if (!f.live()) continue;
    candidates.push_back(fact_item("W:core:" + std::to_string(f.id), Tier::Core, f.key, f.value, f.priority,
                                   f.timestamp_ms, f.turn_id));
  }
  for (const auto& t : state.H) {
    std::string base = "W:hist:" + std::to_string(t.turn_id) + ":";
    WorkingItem summary;
    summary.id = base + "0";
    summary.tier = Tier::History;
    summary.text = t.summary;
    summary.char_length = t.char_length;
    summary.priority = Priority::Episodic;
    summary.timestamp_ms = t.timestamp_ms;
    summary.turn_id = t.turn_id;
    candidates.push_back(std::move(summary));
    for (std::size_t n = 0; n < t.facts.size(); ++n) {
      const auto& d = t.facts[n];
      candidates.push_back(fact_item(base + std::to_string(n + 1), Tier::History, d.key, d.value, d.priority,
                                     t.timestamp_ms, t.turn_id));
    }
  }
  if (out.suff.s == 0 && !state.A.empty()) {
    for (auto& r : retrieve_topk(x, state.A, state.budgets.k)) {
      const auto& a = r.item;
      if (a.fact) {
        candidates.push_back(fact_item("W:arch:" + std::to_string(a.seq), Tier::Archive, a.fact->key,
                                       a.fact->value, a.fact->priority, a.fact->timestamp_ms, a.fact->turn_id));
      } else {
        WorkingItem w;
        w.id = "W:arch:" + std::to_string(a.seq);
        w.tier = Tier::Archive;
        w.text = a.text;
        w.char_length = utf8_length(a.text);
        w.timestamp_ms = a.timestamp_ms;
        w.turn_id = a.turn_id;
        candidates.push_back(std::move(w));
      }
    }
  }

  auto resolved = coherent(std::move(candidates));
  std::stable_sort(resolved.begin(), resolved.end(), [](const WorkingItem& a, const WorkingItem& b) {
    if (rank(a.priority) != rank(b.priority)) return rank(a.priority) > rank(b.priority);
    if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms > b.timestamp_ms;
    if (a.turn_id != b.turn_id) return a.turn_id > b.turn_id;
    return a.id < b.id;
  });
  for (auto& item : resolved) {
    if (out.W.total_chars + item.char_length > state.budgets.b_w) break;
    out.W.total_chars += item.char_length;
    out.W.items.push_back(std::move(item));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Update

namespace {

bool same_value(const json& a, const json& b) { return canonical_value(a) == canonical_value(b); }

/// u: inserts `f` into C, superseding whichever side loses the conflict.
void merge_fact(MemoryState& s, Fact f) {
  for (auto& e : s.C) {
    if (!e.live() || e.key != f.key) continue;
    if (same_value(e.value, f.value) && rank(f.priority) <= rank(e.priority)) {
      f.superseded_by = e.id;
      break;
    }
    bool f_wins = rank(f.priority) != rank(e.priority) ? rank(f.priority) > rank(e.priority)
                  : f.timestamp_ms != e.timestamp_ms  ? f.timestamp_ms > e.timestamp_ms
                                                      : f.id > e.id;
    if (f_wins) {
      e.superseded_by = f.id;
    } else {
      f.superseded_by = e.id;
    }
    break;
  }
  s.C.push_back(std::move(f));
}

void archive(MemoryState& s, std::string text, ArchiveSource source, std::optional<Fact> fact,
             std::uint64_t turn, std::int64_t ts) {
  ArchiveItem a;
  a.seq = s.next_archive_seq++;
  a.embedding = embed(text);
  a.text = std::move(text);
  a.source = source;
  a.fact = std::move(fact);
  a.turn_id = turn;
  a.timestamp_ms = ts;
  s.A.push_back(std::move(a));
}

std::vector<FactDraft> summarize(const TurnTrace& t, const Gateway* gw, std::string& summary,
                                 bool& fallback) {
  std::vector<FactDraft> drafts = t.facts;
  summary = first_sentence(t.summary);
  fallback = true;
  if (gw == nullptr) return drafts;
  ModelRequest req;
  req.module = ModuleId::MemorySummarize;
  req.input = t.summary;
  req.output_schema_id = std::string{schema_ids::kSummary};
  req.prompt_assets.push_back(
      "Summarize the interaction trace in one sentence and list stable facts as "
      "{key: namespace.subject.attribute, value, priority}.");
  json known = json::array();
  for (const auto& d : t.facts) known.push_back({{"key", d.key}, {"value", d.value}});
  req.context = {{"facts", known}};
  try {
    ModelResponse res = gw->complete(std::move(req));
    summary = res.payload.at("summary").get<std::string>();
    fallback = false;
    for (const auto& jf : res.payload.value("facts", json::array())) {
      if (!jf.is_object() || !jf.contains("key") || !jf["key"].is_string() || !jf.contains("value")) continue;
      std::string key = to_lower(jf["key"].get<std::string>());
      if (!valid_fact_key(key)) continue;
      auto p = priority_from_string(jf.value("priority", std::string{"Episodic"}));
      FactDraft d{key, canonical_value(jf["value"]), p.value_or(Priority::Episodic)};
      if (std::find(drafts.begin(), drafts.end(), d) == drafts.end()) drafts.push_back(std::move(d));
    }
  } catch (const Error&) {
    fallback = true;
  }
  return drafts;
}

/// π victim: superseded facts first (oldest), then live facts by lowest priority, oldest, key.
std::size_t pick_victim(const MemoryState& s) {
  std::size_t best = s.C.size();
  auto worse = [&](const Fact& a, const Fact& b) {
    if (a.live() != b.live()) return !a.live();
    if (rank(a.priority) != rank(b.priority)) return rank(a.priority) < rank(b.priority);
    if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms < b.timestamp_ms;
    if (a.key != b.key) return a.key < b.key;
    return a.id < b.id;
  };
  for (std::size_t i = 0; i < s.C.size(); ++i) {
    if (best == s.C.size() || worse(s.C[i], s.C[best])) best = i;
  }
  return best;
}

}  // namespace

json UpdateReport::to_json() const {
  return {{"consolidated_turns", consolidated_turns},
          {"extracted_fact_ids", extracted_fact_ids},
          {"archived_fact_ids", archived_fact_ids},
          {"summary_items", summary_items},
          {"summarize_fallback", summarize_fallback}};
}

UpdateReport update(MemoryState& state, TurnTrace xi, const Gateway* gw) {
  if (!state.H.empty() && xi.turn_id <= state.H.back().turn_id) {
    throw Error(ErrorCode::PreconditionViolated,
                "turn " + std::to_string(xi.turn_id) + " is not newer than the last trace");
  }
  UpdateReport report;
  xi.finalize();
  state.H.push_back(std::move(xi));

  while (state.H.size() > state.budgets.h_max) {
    TurnTrace old = std::move(state.H.front());
    state.H.pop_front();
    report.consolidated_turns.push_back(old.turn_id);
    std::string summary;
    bool fallback = true;
    auto drafts = summarize(old, gw, summary, fallback);
    report.summarize_fallback = report.summarize_fallback || fallback;
    if (!summary.empty()) {
      archive(state, summary, ArchiveSource::ConsolidationByproduct, std::nullopt, old.turn_id, old.timestamp_ms);
      report.summary_items.push_back(state.A.back().id());
    }
    for (auto& d : drafts) {
      Fact f;
      f.id = state.next_fact_id++;
      f.key = d.key;
      f.value = d.value;
      f.priority = d.priority;
      f.turn_id = old.turn_id;
      f.timestamp_ms = old.timestamp_ms;
      report.extracted_fact_ids.push_back(f.id);
      merge_fact(state, std::move(f));
    }
  }

  while (state.core_length() > state.budgets.b_core && !state.C.empty()) {
    std::size_t v = pick_victim(state);
    Fact f = state.C[v];
    state.C.erase(state.C.begin() + static_cast<std::ptrdiff_t>(v));
    report.archived_fact_ids.push_back(f.id);
    std::string text = f.text();
    auto turn = f.turn_id;
    auto ts = f.timestamp_ms;
    archive(state, std::move(text), ArchiveSource::CoreOverflow, std::move(f), turn, ts);
  }
  return report;
}

// ---------------------------------------------------------------------------

MemoryAgent::MemoryAgent(Budgets budgets, const Gateway* gw) : gw_(gw) { state_.budgets = budgets; }

ReadResult MemoryAgent::read_context(std::string_view x) const {
  std::lock_guard lock{mu_};
  return dctl::read_context(x, state_, gw_);
}

UpdateReport MemoryAgent::update(TurnTrace xi) {
  std::lock_guard lock{mu_};
  auto report = dctl::update(state_, std::move(xi), gw_);
  if (snapshot_path_) {
    std::filesystem::create_directories(snapshot_path_->parent_path());
    std::ofstream out{*snapshot_path_};
    out << state_.to_json().dump();
  }
  return report;
}

MemoryState MemoryAgent::snapshot() const {
  std::lock_guard lock{mu_};
  return state_;
}

std::vector<Retrieved> MemoryAgent::search(std::string_view query, std::size_t k) const {
  std::lock_guard lock{mu_};
  return retrieve_topk(query, state_.A, k);
}

void MemoryAgent::persist_to(std::filesystem::path path) {
  std::lock_guard lock{mu_};
  snapshot_path_ = std::move(path);
}

void MemoryAgent::save(const std::filesystem::path& path) const {
  std::lock_guard lock{mu_};
  std::ofstream out{path};
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << state_.to_json().dump();
}

MemoryState MemoryAgent::load(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  try {
    return MemoryState::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void MemoryAgent::restore(MemoryState state) {
  std::lock_guard lock{mu_};
  state_ = std::move(state);
}

}  // namespace dctl
