#include "dctl/runtime.hpp"

#include <fstream>
#include <random>

#include "dctl/error.hpp"

namespace dctl {

std::filesystem::path RuntimeConfig::base_dir() const {
  if (data_dir) return *data_dir;
  return std::filesystem::absolute(domains_dir).lexically_normal().parent_path();
}

void RuntimeConfig::validate() const {
  provider.validate();
  if (!std::filesystem::is_directory(domains_dir)) {
    throw Error(ErrorCode::InvalidArgument, "domains directory not found: " + domains_dir.string(),
                {{"domains_dir", "missing"}});
  }
  if (!state_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(state_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create state directory " + state_dir.string());
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidArgument, "port out of range", {{"port", "range"}});
}

RuntimeConfig RuntimeConfig::from_json(const json& j, const std::filesystem::path& base) {
  RuntimeConfig c;
  auto path = [&](const std::string& s) {
    std::filesystem::path p{s};
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  if (j.contains("provider")) c.provider = ProviderConfig::from_json(j["provider"], base);
  if (j.contains("budgets")) c.budgets = Budgets::from_json(j["budgets"]);
  if (j.contains("domains_dir")) c.domains_dir = path(j["domains_dir"].get<std::string>());
  if (j.contains("data_dir")) c.data_dir = path(j["data_dir"].get<std::string>());
  if (j.contains("state_dir")) c.state_dir = path(j["state_dir"].get<std::string>());
  c.listen_address = j.value("listen_address", c.listen_address);
  c.port = j.value("port", c.port);
  return c;
}

RuntimeConfig RuntimeConfig::load(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + p.string());
  try {
    return from_json(json::parse(in), p.parent_path());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, p.string() + ": " + e.what());
  }
}

json RuntimeConfig::to_json() const {
  json j{{"provider", provider.to_json()},
         {"budgets", budgets.to_json()},
         {"domains_dir", domains_dir.string()},
         {"state_dir", state_dir.string()},
         {"listen_address", listen_address},
         {"port", port}};
  if (data_dir) j["data_dir"] = data_dir->string();
  return j;
}

FifoGate::Ticket::Ticket(FifoGate& g) : gate_(g) {
  std::unique_lock lock(g.mu_);
  std::uint64_t mine = g.next_++;
  g.cv_.wait(lock, [&] { return g.serving_ == mine; });
}

FifoGate::Ticket::~Ticket() {
  {
    std::lock_guard lock(gate_.mu_);
    ++gate_.serving_;
  }
  gate_.cv_.notify_all();
}

// ---------------------------------------------------------------------------

Runtime::Runtime(RuntimeConfig cfg) : Runtime(cfg, make_provider(cfg.provider)) {}

Runtime::Runtime(RuntimeConfig cfg, std::shared_ptr<const Provider> provider) : cfg_(std::move(cfg)) {
  cfg_.validate();
  domains_ = DomainRegistry::load_directory(cfg_.domains_dir);
  adapters_ = AdapterRegistry::from_manifests(domains_, cfg_.base_dir());
  gw_ = std::make_unique<Gateway>(std::move(provider), cfg_.provider);
  controller_ = std::make_unique<Controller>(domains_, adapters_, *gw_);
}

std::filesystem::path Runtime::session_dir() const { return cfg_.state_dir / "sessions"; }

std::filesystem::path Runtime::trace_path(const std::string& id) const {
  return cfg_.state_dir / "traces" / (id + ".ndjson");
}

void Runtime::persist_meta(const Entry& e) const {
  if (cfg_.state_dir.empty()) return;
  std::filesystem::create_directories(session_dir());
  json meta{{"session_id", e.session->id()},
            {"active_domain", e.session->active_config().active_domain()},
            {"next_turn_index", e.session->next_turn_index()}};
  std::ofstream out(session_dir() / (e.session->id() + ".json"));
  out << meta.dump(2) << '\n';
}

std::string Runtime::create_session(std::string id) {
  std::lock_guard lock(mu_);
  if (id.empty()) {
    std::random_device rd;
    do {
      char buf[32];
      std::snprintf(buf, sizeof buf, "s%llu-%04x", static_cast<unsigned long long>(++counter_), rd() & 0xffffu);
      id = buf;
    } while (sessions_.count(id));
  }
  if (id.find_first_of("/\\. ") != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "invalid session id '" + id + "'", {{"session_id", "invalid"}});
  }
  if (sessions_.count(id) || load_persisted(id) != nullptr) return id;
  auto e = std::make_unique<Entry>();
  e->session = std::make_unique<Session>(id, ActiveConfig::from_registry(domains_), cfg_.budgets, gw_.get());
  if (!cfg_.state_dir.empty()) {
    std::filesystem::create_directories(cfg_.state_dir / "memory");
    e->session->memory().persist_to(cfg_.state_dir / "memory" / (id + ".json"));
    std::filesystem::remove(trace_path(id));
  }
  persist_meta(*e);
  sessions_[id] = std::move(e);
  return id;
}

Runtime::Entry* Runtime::load_persisted(const std::string& id) {
  if (cfg_.state_dir.empty()) return nullptr;
  auto meta_path = session_dir() / (id + ".json");
  if (!std::filesystem::exists(meta_path)) return nullptr;
  std::ifstream in(meta_path);
  json meta = json::parse(in);
  auto e = std::make_unique<Entry>();
  std::string active = meta.value("active_domain", std::string{kOutOfScope});
  if (active != kOutOfScope && !domains_.contains(active)) active = std::string{kOutOfScope};
  e->session = std::make_unique<Session>(id, ActiveConfig::from_registry(domains_, active), cfg_.budgets, gw_.get());
  e->session->set_next_turn_index(meta.value("next_turn_index", std::uint64_t{1}));
  auto mem = cfg_.state_dir / "memory" / (id + ".json");
  if (std::filesystem::exists(mem)) e->session->memory().restore(MemoryAgent::load(mem));
  e->session->memory().persist_to(mem);
  if (std::filesystem::exists(trace_path(id))) e->records = read_trace_file(trace_path(id));
  Entry* raw = e.get();
  sessions_[id] = std::move(e);
  return raw;
}

Runtime::Entry* Runtime::find(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it != sessions_.end()) return it->second.get();
  return load_persisted(id);
}

bool Runtime::has_session(const std::string& id) { return find(id) != nullptr; }

std::vector<std::string> Runtime::session_ids() {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

TurnRecord Runtime::run_turn(const std::string& session_id, const std::string& text, std::int64_t timestamp_ms) {
  Entry* e = find(session_id);
  if (e == nullptr) throw Error(ErrorCode::InvalidArgument, "unknown session " + session_id, {{"session_id", "unknown"}});
  FifoGate::Ticket ticket(e->gate);
  std::lock_guard turn_lock(e->session->turn_mutex());
  Utterance x{text, session_id, 0, timestamp_ms};
  TurnRecord rec = controller_->run_turn(*e->session, x);
  e->records.push_back(rec.to_json());
  if (!cfg_.state_dir.empty()) append_trace(trace_path(session_id), rec);
  persist_meta(*e);
  return rec;
}

MemoryState Runtime::memory_snapshot(const std::string& id) {
  Entry* e = find(id);
  if (e == nullptr) throw Error(ErrorCode::InvalidArgument, "unknown session " + id, {{"session_id", "unknown"}});
  return e->session->memory().snapshot();
}

std::vector<Retrieved> Runtime::search_memory(const std::string& id, const std::string& query, std::size_t k) {
  Entry* e = find(id);
  if (e == nullptr) throw Error(ErrorCode::InvalidArgument, "unknown session " + id, {{"session_id", "unknown"}});
  return e->session->memory().search(query, k);
}

std::vector<json> Runtime::traces(const std::string& id) {
  Entry* e = find(id);
  if (e == nullptr) throw Error(ErrorCode::InvalidArgument, "unknown session " + id, {{"session_id", "unknown"}});
  FifoGate::Ticket ticket(e->gate);
  return e->records;
}

std::optional<json> Runtime::trace(const std::string& id, std::uint64_t turn_id) {
  for (const auto& r : traces(id)) {
    if (r.value("turn_id", std::uint64_t{0}) == turn_id) return std::optional<json>{std::in_place, r};
  }
  return std::nullopt;
}

ReplayReport Runtime::replay_records(const std::vector<json>& records, const std::string& session_id) {
  DomainRegistry domains = DomainRegistry::load_directory(cfg_.domains_dir);
  AdapterRegistry adapters = AdapterRegistry::from_manifests(domains, cfg_.base_dir());
  Controller ctl(domains, adapters, *gw_);
  Session fresh(session_id, ActiveConfig::from_registry(domains), cfg_.budgets, gw_.get());
  return replay(records, ctl, fresh);
}

ReplayReport Runtime::replay_session(const std::string& session_id) {
  std::vector<json> records;
  if (!cfg_.state_dir.empty() && std::filesystem::exists(trace_path(session_id))) {
    records = read_trace_file(trace_path(session_id));
  } else {
    records = traces(session_id);
  }
  return replay_records(records, session_id);
}

}  // namespace dctl
