#include "dctl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dctl/error.hpp"
#include "dctl/inner_speech.hpp"
#include "dctl/interpreters.hpp"
#include "dctl/text.hpp"

namespace dctl {

namespace {

json canonical_atom(const json& v) {
  if (v.is_number()) return canonical_value(v);
  if (v.is_string()) return trim(v.get<std::string>());
  return v;
}

}  // namespace

bool atom_equal(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  if (a.is_string() && b.is_string()) return trim(a.get<std::string>()) == trim(b.get<std::string>());
  if (a.is_array() && b.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!atom_equal(a[i], b[i])) return false;
    }
    return true;
  }
  if (a.is_object() && b.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !atom_equal(it.value(), b[it.key()])) return false;
    }
    return true;
  }
  return a == b;
}

ParamScore param_f1(const json& A, const json& E) {
  ParamScore s;
  std::size_t na = A.is_object() ? A.size() : 0;
  std::size_t ne = E.is_object() ? E.size() : 0;
  if (ne > 0 && na > 0) {
    for (auto it = E.begin(); it != E.end(); ++it) {
      if (A.contains(it.key()) && atom_equal(A[it.key()], it.value())) ++s.tp;
    }
  }
  s.precision = na > 0 ? static_cast<double>(s.tp) / static_cast<double>(na) : 0.0;
  s.recall = ne > 0 ? static_cast<double>(s.tp) / static_cast<double>(ne) : 0.0;
  double pr = s.precision + s.recall;
  s.f1 = pr > 0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

json NormalizedResult::to_json() const {
  json out = json::array();
  for (const auto& r : records) out.push_back(r);
  for (const auto& a : atoms) out.push_back(a);
  return out;
}

NormalizedResult normalize_result(const json& raw) {
  NormalizedResult out;
  auto add_atom = [&](const json& v) {
    json c = canonical_atom(v);
    for (const auto& a : out.atoms) {
      if (atom_equal(a, c)) return;
    }
    out.atoms.push_back(std::move(c));
  };
  std::function<void(const json&)> walk = [&](const json& v) {
    if (v.is_array()) {
      for (const auto& e : v) walk(e);
    } else if (v.is_object()) {
      out.records.push_back(v);
    } else {
      add_atom(v);
    }
  };
  walk(raw);
  return out;
}

bool record_covered(const json& a, const json& b) {
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!b.contains(it.key()) || !atom_equal(it.value(), b[it.key()])) return false;
  }
  return true;
}

bool has_failure_marker(const json& raw) {
  if (raw.is_string()) return raw.get<std::string>() == kFailureMarker;
  if (raw.is_object()) {
    if (raw.contains(std::string{kFailureMarker})) return true;
    for (const auto& v : raw) {
      if (has_failure_marker(v)) return true;
    }
  }
  if (raw.is_array()) {
    for (const auto& v : raw) {
      if (has_failure_marker(v)) return true;
    }
  }
  return false;
}

std::size_t greedy_matches(const std::vector<json>& reference, const std::vector<json>& generated) {
  std::vector<bool> used(reference.size(), false);
  std::size_t m = 0;
  for (const auto& g : generated) {
    for (std::size_t i = 0; i < reference.size(); ++i) {
      if (used[i]) continue;
      if (record_covered(g, reference[i]) || record_covered(reference[i], g)) {
        used[i] = true;
        ++m;
        break;
      }
    }
  }
  return m;
}

double result_overlap(const json& R, const json& G) {
  if (has_failure_marker(G)) return 0.0;
  NormalizedResult r = normalize_result(R);
  NormalizedResult g = normalize_result(G);
  std::size_t m = greedy_matches(r.records, g.records);
  std::size_t inter = 0;
  for (const auto& a : r.atoms) {
    for (const auto& b : g.atoms) {
      if (atom_equal(a, b)) {
        ++inter;
        break;
      }
    }
  }
  std::size_t union_atoms = r.atoms.size() + g.atoms.size() - inter;
  std::size_t union_records = r.records.size() + g.records.size() - m;
  std::size_t denom = union_records + union_atoms;
  if (denom == 0) return 1.0;
  return static_cast<double>(m + inter) / static_cast<double>(denom);
}

double selection_accuracy(const std::vector<std::string>& references, const std::vector<std::string>& predictions) {
  if (references.empty()) throw Error(ErrorCode::EmptySet, "selection accuracy over an empty item set");
  if (references.size() != predictions.size()) {
    throw Error(ErrorCode::InvalidArgument, "reference and prediction counts differ");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < references.size(); ++i) hits += references[i] == predictions[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(references.size());
}

double validity_rate(const std::vector<json>& results) {
  if (results.empty()) throw Error(ErrorCode::EmptySet, "validity rate over no executions");
  std::size_t ok = 0;
  for (const auto& r : results) ok += has_failure_marker(r) ? 0 : 1;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

double validity_rate(const std::vector<EvidenceItem>& items) {
  if (items.empty()) throw Error(ErrorCode::EmptySet, "validity rate over no executions");
  std::size_t ok = 0;
  for (const auto& e : items) ok += e.failed ? 0 : 1;
  return static_cast<double>(ok) / static_cast<double>(items.size());
}

double sim_avg(std::string_view a, std::string_view b, std::string_view c, const Embedder& emb) {
  Vector va = emb(a), vb = emb(b), vc = emb(c);
  return (cosine(va, vb) + cosine(va, vc) + cosine(vb, vc)) / 3.0;
}

Distribution Distribution::of(std::vector<double> xs) {
  Distribution d;
  d.n = xs.size();
  if (xs.empty()) return d;
  std::sort(xs.begin(), xs.end());
  auto q = [&](double p) {
    double pos = p * static_cast<double>(xs.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
  };
  d.min = xs.front();
  d.max = xs.back();
  d.q1 = q(0.25);
  d.median = q(0.5);
  d.q3 = q(0.75);
  return d;
}

json Distribution::to_json() const {
  return {{"n", n}, {"min", min}, {"q1", q1}, {"median", median}, {"q3", q3}, {"max", max}};
}

const MetricRow* MetricReport::find(std::string_view module, std::string_view metric) const {
  for (const auto& r : rows) {
    if (r.module == module && r.metric == metric) return &r;
  }
  return nullptr;
}

json MetricReport::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    json j{{"module", r.module}, {"metric", r.metric}, {"value", r.value}, {"n", r.n}, {"counts_items", r.counts_items}};
    if (r.published_reference) {
      j["published_reference"] = *r.published_reference;
      j["published_reference_note"] = "published reference, hosted-model dependent";
    }
    rs.push_back(j);
  }
  auto dists = [](const std::map<std::string, Distribution>& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = v.to_json();
    return j;
  };
  return {{"rows", rs},
          {"total_items", total_items},
          {"latency_ms", dists(latency_ms)},
          {"input_tokens", dists(input_tokens)},
          {"output_tokens", dists(output_tokens)},
          {"items", items}};
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-36s %10s %5s %12s\n", "module", "metric", "value", "N", "published");
  os << buf;
  for (const auto& r : rows) {
    std::string ref = r.published_reference ? format_number(*r.published_reference) : "-";
    std::snprintf(buf, sizeof buf, "%-16s %-36s %10.4f %5zu %12s\n", r.module.c_str(), r.metric.c_str(), r.value, r.n,
                  ref.c_str());
    os << buf;
  }
  os << "\nper-call latency ms / tokens (median [q1, q3])\n";
  for (const auto& [m, d] : latency_ms) {
    const Distribution& in = input_tokens.at(m);
    const Distribution& out = output_tokens.at(m);
    std::snprintf(buf, sizeof buf, "%-16s n=%-4zu latency %.2f [%.2f, %.2f]  in %.0f [%.0f, %.0f]  out %.0f [%.0f, %.0f]\n",
                  m.c_str(), d.n, d.median, d.q1, d.q3, in.median, in.q1, in.q3, out.median, out.q1, out.q3);
    os << buf;
  }
  os << "published values come from a hosted model and are not asserted.\n";
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

struct Samples {
  std::vector<double> latency, in, out;
  void add(const Usage& u) {
    if (u.calls == 0) return;
    latency.push_back(u.model_latency_ms / static_cast<double>(u.calls));
    in.push_back(static_cast<double>(u.input_tokens) / static_cast<double>(u.calls));
    out.push_back(static_cast<double>(u.output_tokens) / static_cast<double>(u.calls));
  }
};

std::vector<std::filesystem::path> fixture_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

json load_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, p.string() + ": " + e.what());
  }
}

std::optional<double> ref_of(const json& j, const char* key = "published_reference") {
  if (j.contains(key) && j[key].is_number()) return j[key].get<double>();
  return std::nullopt;
}

template <class F>
auto guard(const std::filesystem::path& file, const json& item, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ScriptMiss) {
      throw Error(ErrorCode::ScriptMiss,
                  "fixture " + file.filename().string() + "#" + item.value("id", std::string{"?"}) + ": " + e.what());
    }
    throw;
  }
}

ActiveConfig scoped_config(const DomainRegistry& domains, const std::vector<std::string>& ids, std::string active) {
  std::vector<std::shared_ptr<const DomainManifest>> cands;
  for (const auto& id : ids) cands.push_back(domains.get(id));
  return ActiveConfig(std::move(cands), std::move(active));
}

WorkingContext context_from(const json& facts) {
  WorkingContext W;
  std::size_t i = 0;
  for (const auto& f : facts) {
    WorkingItem w;
    w.id = "W:core:" + std::to_string(++i);
    w.tier = Tier::Core;
    w.key = f.at("key").get<std::string>();
    w.value = f.at("value");
    w.priority = Priority::Identity;
    w.text = *w.key + ": " + display_value(w.value);
    w.char_length = utf8_length(w.text);
    W.total_chars += w.char_length;
    W.items.push_back(std::move(w));
  }
  return W;
}

}  // namespace

MetricReport run_suite(const std::filesystem::path& dir, const DomainRegistry& domains,
                       const AdapterRegistry& adapters, const Gateway& gw) {
  MetricReport report;
  std::map<std::string, Samples> samples;

  // Domain selection, one row per scope configuration plus the pooled row.
  {
    for (const auto& file : fixture_files(dir / "scope")) {
      json fx = load_json(file);
      auto ids = fx.at("domains").get<std::vector<std::string>>();
      std::string name = fx.value("config", file.stem().string());
      std::vector<std::string> ref, pred;
      for (const auto& item : fx.at("items")) {
        std::string prev = item.value("previous", std::string{kOutOfScope});
        ActiveConfig cfg = scoped_config(domains, ids, prev);
        Utterance x{item.at("utterance").get<std::string>(), "eval", 0, 0};
        ScopeResult r = guard(file, item, [&] { return detect_scope(x, prev, cfg, gw); });
        samples["scope"].add(r.usage);
        ref.push_back(item.at("expected").get<std::string>());
        pred.push_back(r.domain);
        report.items.push_back({{"module", "scope"}, {"config", name}, {"id", item.value("id", "")},
                                {"expected", ref.back()}, {"predicted", r.domain}, {"correct", ref.back() == r.domain}});
      }
      report.rows.push_back({"scope", "domain selection accuracy [" + name + "]", selection_accuracy(ref, pred),
                             ref.size(), ref_of(fx), true});
      report.total_items += ref.size();
      if (ids.size() == 3) {
        std::vector<std::string> descs;
        for (const auto& id : ids) descs.push_back(domains.get(id)->description);
        std::optional<double> sim_ref;
        sim_ref = ref_of(fx, "published_sim_avg");
        report.rows.push_back({"scope", "sim_avg [" + name + "]", sim_avg(descs[0], descs[1], descs[2]), 3, sim_ref,
                               false});
      }
    }
  }

  // Task selection and parameter extraction.
  {
    std::vector<std::string> ref, pred;
    double f1_sum = 0.0;
    std::size_t tp = 0, n_pred = 0, n_exp = 0;
    std::optional<double> acc_ref, f1_ref;
    for (const auto& file : fixture_files(dir / "intent")) {
      json fx = load_json(file);
      if (!acc_ref) acc_ref = ref_of(fx);
      if (!f1_ref) f1_ref = ref_of(fx, "published_f1");
      for (const auto& item : fx.at("items")) {
        std::string domain = item.at("domain").get<std::string>();
        ActiveConfig cfg = ActiveConfig::from_registry(domains, domain);
        Utterance x{item.at("utterance").get<std::string>(), "eval", 0, 0};
        std::string schema_name;
        json params = json::object();
        guard(file, item, [&] {
          try {
            IntentResult ir = recognize_intent(x, domain, cfg, gw);
            samples["intent"].add(ir.usage);
            schema_name = ir.schema;
            params = postprocess_checked(*cfg.schema(ir.schema), ir.raw_params, cfg).params;
          } catch (const Error& e) {
            if (e.code() == ErrorCode::ScriptMiss) throw;
            schema_name = "<" + std::string{to_string(e.code())} + ">";
          }
          return 0;
        });
        const json& exp = item.at("expected");
        ref.push_back(exp.at("schema").get<std::string>());
        pred.push_back(schema_name);
        ParamScore s = param_f1(params, exp.value("params", json::object()));
        f1_sum += s.f1;
        tp += s.tp;
        n_pred += params.size();
        n_exp += exp.value("params", json::object()).size();
        report.items.push_back({{"module", "intent"}, {"id", item.value("id", "")}, {"expected", exp},
                                {"predicted", {{"schema", schema_name}, {"params", params}}}, {"f1", s.f1}});
      }
    }
    if (!ref.empty()) {
      report.rows.push_back({"intent", "task selection accuracy", selection_accuracy(ref, pred), ref.size(), acc_ref,
                             true});
      report.rows.push_back({"intent", "parameter F1 (macro)", f1_sum / static_cast<double>(ref.size()), ref.size(),
                             f1_ref, false});
      double p = n_pred ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
      double r = n_exp ? static_cast<double>(tp) / static_cast<double>(n_exp) : 0.0;
      report.rows.push_back({"intent", "parameter F1 (micro)", p + r > 0 ? 2 * p * r / (p + r) : 0.0, ref.size(),
                             f1_ref, false});
      report.total_items += ref.size();
    }
  }

  // Inner speech readiness.
  {
    std::vector<std::string> ref, pred;
    std::optional<double> acc_ref;
    for (const auto& file : fixture_files(dir / "inner_speech")) {
      json fx = load_json(file);
      if (!acc_ref) acc_ref = ref_of(fx);
      for (const auto& item : fx.at("items")) {
        std::string domain = item.at("domain").get<std::string>();
        auto manifest = domains.get(domain);
        const TaskSchema* schema = manifest->schema(item.at("schema").get<std::string>());
        if (schema == nullptr) throw Error(ErrorCode::ParseError, file.string() + ": unknown schema");
        json params = item.value("params", json::object());
        WorkingContext W = context_from(item.value("working_context", json::array()));
        std::vector<FieldIssue> prior;
        for (const auto& v : item.value("violations", json::array())) {
          prior.push_back({v.at("field").get<std::string>(), v.at("reason").get<std::string>()});
        }
        std::vector<std::string> registered;
        for (const auto& id : domains.list()) {
          if (id != kOutOfScope) registered.push_back(id);
        }
        std::string utterance = item.at("utterance").get<std::string>();
        AssessInput in{utterance, domain, schema, &params, &W, manifest.get(),
                       registered, prior};
        ControlDecision d = guard(file, item, [&] { return assess(in, &gw); });
        samples["inner_speech"].add(d.usage);
        const json& exp = item.at("expected");
        std::string want = exp.at("control").get<std::string>();
        std::string got{to_string(d.control)};
        if (exp.contains("missing")) {
          want += "|" + exp["missing"].dump();
          got += "|" + json(d.missing_slots).dump();
        }
        if (exp.contains("tool_needed")) {
          want += "|" + exp["tool_needed"].dump();
          got += "|" + (d.tool_needed ? std::to_string(*d.tool_needed) : std::string{"null"});
        }
        ref.push_back(want);
        pred.push_back(got);
        report.items.push_back({{"module", "inner_speech"}, {"id", item.value("id", "")}, {"expected", want},
                                {"predicted", got}, {"correct", want == got}});
      }
    }
    if (!ref.empty()) {
      report.rows.push_back({"inner_speech", "readiness accuracy", selection_accuracy(ref, pred), ref.size(), acc_ref,
                             true});
      report.total_items += ref.size();
    }
  }

  // Query generation: validity and result overlap.
  {
    std::vector<json> results;
    double overlap_sum = 0.0;
    std::size_t n = 0;
    std::optional<double> validity_ref, overlap_ref;
    for (const auto& file : fixture_files(dir / "query_generation")) {
      json fx = load_json(file);
      if (!validity_ref) validity_ref = ref_of(fx);
      if (!overlap_ref) overlap_ref = ref_of(fx, "published_overlap");
      for (const auto& item : fx.at("items")) {
        std::string domain = item.at("domain").get<std::string>();
        ActiveConfig cfg = ActiveConfig::from_registry(domains, domain);
        const TaskSchema* schema = cfg.schema(item.at("schema").get<std::string>());
        if (schema == nullptr) throw Error(ErrorCode::ParseError, file.string() + ": unknown schema");
        json params = item.value("params", json::object());
        WorkingContext W;
        ControlDecision d;
        d.control = Control::Proceed;
        d.complete = 1;
        d.tool_needed = 1;
        json generated = json::array();
        std::string utterance = item.at("utterance").get<std::string>();
        GenerateInput gi{utterance, domain, schema, &params, &W, &d, &cfg};
        try {
          GeneratedQueries gq = guard(file, item, [&] { return generate_queries(gi, &gw); });
          samples["query_generation"].add(gq.usage);
          std::size_t k = 0;
          for (const auto& q : gq.specs) {
            EvidenceItem e = execute(domain, q, adapters, "Q" + std::to_string(++k));
            for (const auto& r : e.rows) generated.push_back(r);
          }
        } catch (const Error& e) {
          if (e.code() == ErrorCode::ScriptMiss) throw;
          generated = json::array({{{std::string{kFailureMarker}, e.what()}}});
        }
        results.push_back(generated);
        double ov = result_overlap(item.at("reference_rows"), generated);
        overlap_sum += ov;
        ++n;
        report.items.push_back({{"module", "query_generation"}, {"id", item.value("id", "")}, {"overlap", ov},
                                {"valid", !has_failure_marker(generated)}});
      }
    }
    if (n > 0) {
      report.rows.push_back({"query_generation", "query validity rate", validity_rate(results), n, validity_ref, true});
      report.rows.push_back({"query_generation", "result overlap (mean)", overlap_sum / static_cast<double>(n), n,
                             overlap_ref, false});
      report.total_items += n;
    }
  }

  for (auto& [module, s] : samples) {
    report.latency_ms[module] = Distribution::of(s.latency);
    report.input_tokens[module] = Distribution::of(s.in);
    report.output_tokens[module] = Distribution::of(s.out);
  }
  return report;
}

}  // namespace dctl
