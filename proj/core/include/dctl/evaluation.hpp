#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/customization.hpp"
#include "dctl/embedding.hpp"
#include "dctl/grounding.hpp"
#include "dctl/model_gateway.hpp"

namespace dctl {

struct ParamScore {
  std::size_t tp = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// A = predicted parameters, E = expected.
ParamScore param_f1(const json& A, const json& E);

/// Numbers compare by value, strings after trimming; no case folding.
bool atom_equal(const json& a, const json& b);

struct NormalizedResult {
  std::vector<json> records;
  /// Set semantics: canonical and deduplicated, in first-seen order.
  std::vector<json> atoms;

  json to_json() const;
};

NormalizedResult normalize_result(const json& raw);

/// Items(a) ⊆ Items(b).
bool record_covered(const json& a, const json& b);

/// True when `raw` carries the explicit query failure marker anywhere.
bool has_failure_marker(const json& raw);

/// Greedy one-to-one record matches: generated records in order, first unused reference that covers or is covered.
std::size_t greedy_matches(const std::vector<json>& reference, const std::vector<json>& generated);

/// R = reference result, G = generated result.
double result_overlap(const json& R, const json& G);

double selection_accuracy(const std::vector<std::string>& references, const std::vector<std::string>& predictions);

/// Fraction of executions without a failure marker.
double validity_rate(const std::vector<json>& results);
double validity_rate(const std::vector<EvidenceItem>& items);

using Embedder = std::function<Vector(std::string_view)>;

double sim_avg(std::string_view a, std::string_view b, std::string_view c, const Embedder& embed = embed);

struct Distribution {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;

  static Distribution of(std::vector<double> xs);
  json to_json() const;
};

struct MetricRow {
  std::string module;
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  /// Value reported for a hosted model; informational only.
  std::optional<double> published_reference;
  /// The row that counts each fixture item of its suite exactly once.
  bool counts_items = false;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::map<std::string, Distribution> latency_ms;
  std::map<std::string, Distribution> input_tokens;
  std::map<std::string, Distribution> output_tokens;
  std::size_t total_items = 0;
  json items = json::array();

  const MetricRow* find(std::string_view module, std::string_view metric) const;
  json to_json() const;
  std::string to_table() const;
};

/// Evaluates each module in isolation over fixtures/<scope|intent|inner_speech|query_generation>/*.json.
/// ScriptMiss is rethrown naming the uncovered fixture item.
MetricReport run_suite(const std::filesystem::path& fixtures_dir, const DomainRegistry& domains,
                       const AdapterRegistry& adapters, const Gateway& gw);

}  // namespace dctl
