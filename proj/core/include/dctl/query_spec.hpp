#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dctl {

using json = nlohmann::json;

enum class Direction { Out, In };

struct Hop {
  std::string edge_type;
  Direction direction = Direction::Out;
  /// Only legal on containment edges. Reflexive when another hop follows it.
  bool transitive = false;
};

enum class FilterOp { Eq, In, Ne, Lt, Le, Gt, Ge };

struct AttrFilter {
  std::string attr;
  FilterOp op = FilterOp::Eq;
  /// Always an array; Eq/Ne/Lt/... use the first element.
  json values = json::array();
};

struct NodePattern {
  std::string label;
  std::vector<AttrFilter> filters;
};

struct NodeSet {
  NodePattern match;
  std::vector<Hop> traverse;
};

/// Holds iff some node reachable along `path` (and inside `target`, when given) exists.
struct PathPredicate {
  bool negated = false;
  std::vector<Hop> path;
  std::optional<NodeSet> target;
};

struct WherePredicate {
  std::optional<AttrFilter> attr;
  std::optional<PathPredicate> path;
};

struct Projection {
  std::string attr;
  /// Non-empty: collect `attr` of nodes reached along these hops.
  std::vector<Hop> reach;
  std::string as;

  const std::string& column() const { return as.empty() ? attr : as; }
};

enum class AggregateOp { Count, Sum, Collect };

struct Aggregate {
  AggregateOp op = AggregateOp::Count;
  std::string attr;
  std::string as;
};

struct Step {
  NodePattern match;
  std::vector<Hop> traverse;
  std::vector<WherePredicate> where;
  std::vector<Projection> project;
  std::optional<Aggregate> aggregate;
};

struct QuerySpec {
  std::string id;
  std::string label;
  std::vector<Step> steps;
  std::optional<std::string> raw_passthrough;

  /// Step kinds used, matched against adapter capabilities:
  /// match, filter, traverse, transitive, where, path, project, reach, aggregate, raw.
  std::set<std::string> kinds() const;

  json to_json() const;
  /// Filters and predicates whose values are null are dropped (optional θ fields).
  static QuerySpec from_json(const json& j);
};

}  // namespace dctl
