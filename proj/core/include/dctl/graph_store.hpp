#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/query_spec.hpp"

namespace dctl {

using json = nlohmann::json;

struct Node {
  std::string id;
  std::string label;
  json props = json::object();
};

struct Edge {
  std::string from;
  std::string to;
  std::string type;

  bool operator==(const Edge&) const = default;
};

/// Declared vocabulary of a store. Empty label map means "undeclared" (no attribute checks).
struct GraphSchema {
  std::map<std::string, std::set<std::string>> labels;
  std::set<std::string> edge_types;
  std::set<std::string> containment;

  json to_json() const;
  static GraphSchema from_json(const json& j);
};

/// Property graph. Node iteration is ordered by id; containment edges stay acyclic.
class GraphStore {
 public:
  GraphStore() = default;
  explicit GraphStore(GraphSchema schema) : schema_(std::move(schema)) {}

  /// {"schema": {...}, "nodes": [...], "edges": [...]}. Throws InvalidStore.
  static GraphStore from_json(const json& j);
  static GraphStore load(const std::filesystem::path& path);
  json to_json() const;

  void add_node(Node n);
  void add_edge(Edge e);

  const GraphSchema& schema() const { return schema_; }
  const std::map<std::string, Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node* node(const std::string& id) const;

  /// Direct neighbours along one edge type, sorted by id.
  const std::vector<std::string>& neighbors(const std::string& id, const std::string& type, Direction dir) const;
  bool is_containment(const std::string& type) const { return schema_.containment.count(type) > 0; }

 private:
  bool reaches(const std::string& from, const std::string& to, const std::string& type) const;

  GraphSchema schema_;
  std::map<std::string, Node> nodes_;
  std::vector<Edge> edges_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> out_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> in_;
};

/// Structural checks against the store vocabulary. Throws InvalidQuery.
void validate_query(const QuerySpec& q, const GraphSchema& schema);

/// Rows in node-id order, one step after another.
json graph_execute(const QuerySpec& q, const GraphStore& store);

}  // namespace dctl
