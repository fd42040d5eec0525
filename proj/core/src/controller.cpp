#include "dctl/controller.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

namespace {

json issues_json(const std::vector<FieldIssue>& v) {
  json out = json::array();
  for (const auto& i : v) out.push_back({{"field", i.field}, {"reason", i.reason}});
  return out;
}

json usage_json(const Usage& u) {
  return {{"calls", u.calls},
          {"input_tokens", u.input_tokens},
          {"output_tokens", u.output_tokens},
          {"model_latency_ms", u.model_latency_ms},
          {"tokens_estimated", u.tokens_estimated}};
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string pending_key(const TaskSchema& s, std::string_view field) {
  return "pending." + key_segment(s.name) + "." + std::string{field};
}

bool has_placeholder(std::string_view k) { return k.find("${") != std::string_view::npos; }

}  // namespace

json TurnRecord::to_json() const {
  json j;
  j["turn_id"] = turn_id;
  j["session_id"] = session_id;
  j["timestamp_ms"] = timestamp_ms;
  j["utterance"] = utterance;
  j["domain_before"] = domain_before;
  j["domain"] = domain;
  j["scope"] = scope ? json{{"domain", scope->domain}, {"rationale", scope->rationale}, {"coerced", scope->coerced}}
                     : json(nullptr);
  j["intent"] = intent ? json{{"schema", intent->schema},
                              {"raw_params", intent->raw_params},
                              {"params", intent->params},
                              {"rationale", intent->rationale}}
                       : json(nullptr);
  j["param_violations"] = issues_json(param_violations);
  j["filled"] = filled;
  j["params"] = params;
  j["sufficiency"] = sufficiency ? json(*sufficiency) : json(nullptr);
  j["working_context"] = working_context;
  j["decision"] = decision ? decision->to_json() : json(nullptr);
  json qs = json::array();
  for (const auto& q : queries) qs.push_back(q.to_json());
  j["queries"] = qs;
  json ev = json::array();
  for (const auto& e : evidence) ev.push_back(e.to_json());
  j["evidence"] = ev;
  j["verdict"] = verdict ? verdict->to_json() : json(nullptr);
  j["response"] = response.to_json();
  j["faithfulness"] = faithfulness.to_json();
  j["domain_switches"] = domain_switches;
  j["error"] = error ? json{{"stage", error->stage},
                            {"code", error->code},
                            {"message", error->message},
                            {"issues", issues_json(error->issues)}}
                     : json(nullptr);
  j["memory_update"] = memory_update;
  json t = json::object();
  for (const auto& s : timings) {
    json u = usage_json(s.usage);
    u["latency_ms"] = s.latency_ms;
    t[s.stage] = u;
  }
  j["timings"] = t;
  return j;
}

json TurnRecord::to_response() const {
  json full = to_json();
  json claims = json::array();
  for (const auto& c : full["response"]["claims"]) {
    claims.push_back({{"text", c["text"]}, {"kind", c["kind"]}, {"evidence_refs", c["evidence_refs"]}});
  }
  json ev = json::array();
  for (const auto& e : full["evidence"]) ev.push_back({{"id", e["id"]}, {"caption", e["caption"]}, {"rows", e["rows"]}});
  json control{{"decision", decision ? json(std::string{to_string(decision->control)}) : json(nullptr)},
               {"missing_slots", decision ? json(decision->missing_slots) : json::array()},
               {"domain", domain}};
  return {{"turn_id", turn_id},
          {"response_kind", full["response"]["response_kind"]},
          {"rendered_text", response.rendered_text},
          {"claims", claims},
          {"evidence", ev},
          {"control", control},
          {"timings", full["timings"]}};
}

json strip_latency(json j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key().ends_with("latency_ms")) continue;
      out[it.key()] = strip_latency(it.value());
    }
    return out;
  }
  if (j.is_array()) {
    for (auto& e : j) e = strip_latency(std::move(e));
  }
  return j;
}

Session::Session(std::string id, ActiveConfig cfg, Budgets budgets, const Gateway* memory_gw)
    : id_(std::move(id)), cfg_(std::move(cfg)), memory_(budgets, memory_gw) {}

Controller::Controller(const DomainRegistry& domains, AdapterRegistry& adapters, const Gateway& gw)
    : domains_(domains), adapters_(adapters), gw_(gw) {}

TurnRecord Controller::run_turn(Session& sess, const Utterance& in) const {
  Utterance x = in;
  TurnRecord rec;
  rec.turn_id = x.turn_index != 0 ? x.turn_index : sess.next_turn_index();
  x.turn_index = rec.turn_id;
  x.session_id = sess.id();
  if (x.timestamp_ms == 0) x.timestamp_ms = now_ms();
  rec.session_id = sess.id();
  rec.timestamp_ms = x.timestamp_ms;
  rec.utterance = x.text;

  ActiveConfig cfg = sess.active_config();
  rec.domain_before = cfg.active_domain();
  rec.domain = rec.domain_before;

  std::vector<std::string> registered;
  for (const auto& id : domains_.list()) {
    if (id != kOutOfScope) registered.push_back(id);
  }

  const TaskSchema* schema = nullptr;
  json explicit_params = json::object();
  WorkingContext W;
  std::string stage = "scope";
  bool switched = false;

  try {
    Stopwatch sw;
    ScopeResult scope = detect_scope(x, cfg.active_domain(), cfg, gw_);
    rec.timings.push_back({"scope", sw.ms(), scope.usage});
    rec.scope = scope;
    rec.domain = scope.domain;

    if (scope.domain == kOutOfScope) {
      rec.response = out_of_scope_reply(registered);
    } else {
      if (scope.domain != cfg.active_domain()) {
        cfg = activate_domain(cfg, scope.domain);
        ++rec.domain_switches;
        switched = true;
      }
      bool inner_switched = false;
      while (true) {
        stage = "intent";
        Stopwatch sw_ir;
        IntentResult ir;
        try {
          ir = recognize_intent(x, cfg.active_domain(), cfg, gw_);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoSchemaMatch) throw;
          rec.timings.push_back({"intent", sw_ir.ms(), {}});
          const DomainManifest* m = cfg.active_manifest();
          rec.response = switched ? switch_notice(cfg.active_domain())
                                  : no_task_reply(cfg.active_domain(), m ? m->task_list() : std::vector<std::string>{});
          break;
        }
        schema = cfg.schema(ir.schema);
        stage = "postprocess";
        PostprocessOutcome pp = postprocess_checked(*schema, ir.raw_params, cfg);
        ir.params = pp.params;
        rec.timings.push_back({"intent", sw_ir.ms(), ir.usage});
        rec.intent = ir;
        rec.param_violations = pp.violations;
        explicit_params = pp.params;

        stage = "read_context";
        Stopwatch sw_mem;
        ReadResult rr = sess.memory().read_context(x.text);
        rec.timings.push_back({"read_context", sw_mem.ms(), rr.suff.usage});
        W = std::move(rr.W);
        rec.sufficiency = rr.suff.s;
        rec.working_context.clear();
        for (const auto& item : W.items) rec.working_context.push_back(item.id);

        // Memory fill: pending slots first, then keys without placeholders, then keyed by θ.
        json eff = pp.params;
        rec.filled = json::object();
        std::set<std::string> violated;
        for (const auto& v : pp.violations) violated.insert(v.field);
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& f : schema->fields) {
            if ((eff.contains(f.name) && !eff[f.name].is_null()) || violated.count(f.name)) continue;
            const WorkingItem* item = nullptr;
            if (pass == 0) item = W.fact(pending_key(*schema, f.name));
            if (item == nullptr && f.memory_key && has_placeholder(*f.memory_key) == (pass == 1)) {
              if (auto k = expand_memory_key(*f.memory_key, eff)) item = W.fact(*k);
            }
            if (item == nullptr) continue;
            eff[f.name] = item->value;
            rec.filled[f.name] = item->id;
          }
        }
        rec.params = eff;

        stage = "assess";
        Stopwatch sw_is;
        AssessInput ai{x.text, cfg.active_domain(), schema, &rec.params, &W, cfg.active_manifest(), registered,
                       pp.violations};
        ControlDecision d = assess(ai, &gw_);
        rec.timings.push_back({"assess", sw_is.ms(), d.usage});

        if (d.control == Control::SwitchDomain) {
          if (!inner_switched && d.suggested_domain && *d.suggested_domain != cfg.active_domain()) {
            inner_switched = true;
            switched = true;
            cfg = activate_domain(cfg, *d.suggested_domain);
            ++rec.domain_switches;
            rec.domain = cfg.active_domain();
            continue;
          }
          d.control = Control::Clarify;
          d.tool_needed.reset();
          rec.decision = d;
          rec.response = switch_loop_reply();
          break;
        }
        rec.decision = d;

        if (d.control == Control::Proceed && d.tool_needed == 1) {
          stage = "generate_queries";
          Stopwatch sw_qg;
          GenerateInput gi{x.text, cfg.active_domain(), schema, &rec.params, &W, &d, &cfg};
          GeneratedQueries gq = generate_queries(gi, &gw_);
          rec.timings.push_back({"generate_queries", sw_qg.ms(), gq.usage});
          rec.queries = gq.specs;

          stage = "execute";
          Stopwatch sw_ex;
          std::string prefix = "E" + std::to_string(rec.turn_id) + ".";
          for (const auto& q : rec.queries) {
            rec.evidence.push_back(
                execute(cfg.active_domain(), q, adapters_, prefix + std::to_string(rec.evidence.size() + 1)));
          }
          SemanticsContext ctx{cfg.active_domain(), schema, &rec.params, &rec.evidence, &rec.queries, &adapters_,
                               prefix};
          rec.verdict = apply_execution_semantics(ctx);
          rec.timings.push_back({"execute", sw_ex.ms(), {}});
        }

        stage = "compose";
        Stopwatch sw_os;
        ComposeInput ci{x.text,   cfg.active_domain(), schema, &rec.params, &W, &*rec.decision, &rec.evidence,
                        rec.verdict ? &*rec.verdict : nullptr};
        ComposeResult cr = compose(ci, &gw_);
        rec.timings.push_back({"compose", sw_os.ms(), cr.usage});
        rec.response = std::move(cr.response);
        break;
      }
      rec.domain = cfg.active_domain();
    }

    stage = "faithfulness";
    EvidenceBundle B{&W, rec.evidence};
    rec.faithfulness = check_faithfulness(rec.response, B);
    if (!rec.faithfulness.pass) {
      std::set<std::size_t> bad;
      for (const auto& v : rec.faithfulness.violations) bad.insert(v.claim_index);
      std::vector<Claim> kept;
      for (std::size_t i = 0; i < rec.response.claims.size(); ++i) {
        if (!bad.count(i)) kept.push_back(rec.response.claims[i]);
      }
      kept.push_back(SafeDefaults::builtin().make("disclosure.evidence_only", json::object()));
      rec.response.claims = std::move(kept);
      rec.response.template_fallback = true;
      rec.response.rendered_text = render(rec.response);
    }
  } catch (const Error& e) {
    rec.error = StageError{stage, std::string{to_string(e.code())}, e.what(), e.issues()};
    rec.response = error_reply(to_string(e.code()));
    rec.faithfulness = {};
  } catch (const std::exception& e) {
    rec.error = StageError{stage, "Internal", e.what(), {}};
    rec.response = error_reply("Internal");
    rec.faithfulness = {};
  }

  sess.set_active_config(cfg);

  // Facts carried by the trace.
  TurnTrace xi = build_trace(rec);
  if (schema != nullptr && rec.decision && !rec.error) {
    std::set<std::string> keys;
    for (const auto& f : xi.facts) keys.insert(f.key);
    if (rec.decision->control == Control::Clarify) {
      for (const auto& f : schema->fields) {
        if (rec.params.contains(f.name) && !rec.params[f.name].is_null()) {
          xi.facts.push_back({pending_key(*schema, f.name), rec.params[f.name], Priority::Episodic});
        }
      }
    } else if (rec.decision->control == Control::Proceed) {
      for (const auto& f : schema->fields) {
        if (!f.memory_key || !explicit_params.contains(f.name) || explicit_params[f.name].is_null()) continue;
        auto k = expand_memory_key(*f.memory_key, rec.params);
        if (!k || keys.count(*k) || !valid_fact_key(*k)) continue;
        xi.facts.push_back({*k, explicit_params[f.name], f.memory_priority});
        keys.insert(*k);
      }
      for (const auto& f : schema->fields) {
        std::string pk = pending_key(*schema, f.name);
        if (W.fact(pk) != nullptr) xi.facts.push_back({pk, nullptr, Priority::Episodic});
      }
    }
  }

  Stopwatch sw_up;
  try {
    rec.memory_update = sess.memory().update(std::move(xi)).to_json();
  } catch (const Error& e) {
    if (!rec.error) rec.error = StageError{"memory_update", std::string{to_string(e.code())}, e.what(), e.issues()};
  }
  rec.timings.push_back({"memory_update", sw_up.ms(), {}});
  sess.set_next_turn_index(rec.turn_id + 1);
  return rec;
}

TurnTrace build_trace(const TurnRecord& rec) {
  TurnTrace xi;
  xi.turn_id = rec.turn_id;
  xi.timestamp_ms = rec.timestamp_ms;
  xi.utterance = rec.utterance;
  xi.reply = rec.response.rendered_text;
  xi.domain = rec.domain;
  xi.schema = rec.intent ? rec.intent->schema : std::string{};
  xi.params = rec.params;
  if (rec.error) {
    xi.control = "Error";
  } else if (rec.decision) {
    xi.control = std::string{to_string(rec.decision->control)};
    xi.missing = rec.decision->missing_slots;
    xi.tool_needed = rec.decision->tool_needed;
  } else {
    xi.control = std::string{to_string(rec.response.response_kind)};
  }
  xi.sufficiency = rec.sufficiency.value_or(1);
  for (const auto& e : rec.evidence) xi.evidence.push_back({e.id, e.caption});
  if (rec.verdict && !rec.error) xi.facts = rec.verdict->facts;
  xi.finalize();
  return xi;
}

json ReplayReport::to_json() const {
  return {{"identical", identical},
          {"turns", turns},
          {"divergent_turn", divergent_turn ? json(*divergent_turn) : json(nullptr)},
          {"detail", detail}};
}

ReplayReport replay(const std::vector<json>& recorded, const Controller& ctl, Session& fresh) {
  ReplayReport rep;
  for (const auto& orig : recorded) {
    Utterance x;
    x.text = orig.at("utterance").get<std::string>();
    x.turn_index = orig.at("turn_id").get<std::uint64_t>();
    x.timestamp_ms = orig.at("timestamp_ms").get<std::int64_t>();
    TurnRecord rec;
    {
      std::lock_guard lock(fresh.turn_mutex());
      rec = ctl.run_turn(fresh, x);
    }
    ++rep.turns;
    std::string a = strip_latency(orig).dump();
    std::string b = strip_latency(rec.to_json()).dump();
    rep.records.push_back(std::move(rec));
    if (a != b) {
      rep.identical = false;
      rep.divergent_turn = x.turn_index;
      const auto& r = rep.records.back();
      if (r.error) {
        rep.detail = r.error->code + " in " + r.error->stage + ": " + r.error->message;
      } else {
        json da = json::parse(a), db = json::parse(b);
        json patch = json::diff(da, db);
        rep.detail = patch.empty() ? "records differ" : patch[0].value("path", std::string{"/"});
      }
      break;
    }
  }
  return rep;
}

std::vector<json> read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read trace file " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void append_trace(const std::filesystem::path& path, const TurnRecord& rec) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot write trace file " + path.string());
  out << rec.to_json().dump() << '\n';
}

}  // namespace dctl
