#include "dctl/graph_store.hpp"

#include <algorithm>
#include <deque>
#include <fstream>

#include "dctl/error.hpp"
#include "dctl/text.hpp"

namespace dctl {

json GraphSchema::to_json() const {
  json l = json::object();
  for (const auto& [label, attrs] : labels) l[label] = attrs;
  return {{"labels", l}, {"edge_types", edge_types}, {"containment", containment}};
}

GraphSchema GraphSchema::from_json(const json& j) {
  GraphSchema s;
  json labels = j.value("labels", json::object());
  for (const auto& [label, attrs] : labels.items()) {
    s.labels[label] = attrs.get<std::set<std::string>>();
  }
  s.edge_types = j.value("edge_types", std::set<std::string>{});
  s.containment = j.value("containment", std::set<std::string>{});
  for (const auto& c : s.containment) s.edge_types.insert(c);
  return s;
}

GraphStore GraphStore::from_json(const json& j) {
  GraphStore g;
  try {
    g.schema_ = GraphSchema::from_json(j.value("schema", json::object()));
    for (const auto& jn : j.value("nodes", json::array())) {
      g.add_node({jn.at("id").get<std::string>(), jn.at("label").get<std::string>(),
                  jn.value("props", json::object())});
    }
    for (const auto& je : j.value("edges", json::array())) {
      g.add_edge({je.at("from").get<std::string>(), je.at("to").get<std::string>(), je.at("type").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidStore, std::string{"malformed store: "} + e.what());
  }
  return g;
}

GraphStore GraphStore::load(const std::filesystem::path& path) {
  std::ifstream in{path};
  if (!in) throw Error(ErrorCode::IoError, "cannot open store " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidStore, path.string() + ": " + e.what());
  }
}

json GraphStore::to_json() const {
  json ns = json::array();
  for (const auto& [id, n] : nodes_) ns.push_back({{"id", id}, {"label", n.label}, {"props", n.props}});
  json es = json::array();
  for (const auto& e : edges_) es.push_back({{"from", e.from}, {"to", e.to}, {"type", e.type}});
  return {{"schema", schema_.to_json()}, {"nodes", ns}, {"edges", es}};
}

void GraphStore::add_node(Node n) {
  if (n.id.empty()) throw Error(ErrorCode::InvalidStore, "node without id");
  if (nodes_.count(n.id)) throw Error(ErrorCode::InvalidStore, "duplicate node id '" + n.id + "'");
  if (!schema_.labels.empty() && !schema_.labels.count(n.label)) {
    throw Error(ErrorCode::InvalidStore, "undeclared label '" + n.label + "' on " + n.id);
  }
  if (!n.props.is_object()) throw Error(ErrorCode::InvalidStore, "props of " + n.id + " must be an object");
  nodes_.emplace(n.id, std::move(n));
}

bool GraphStore::reaches(const std::string& from, const std::string& to, const std::string& type) const {
  std::set<std::string> seen{from};
  std::deque<std::string> queue{from};
  while (!queue.empty()) {
    auto cur = queue.front();
    queue.pop_front();
    if (cur == to) return true;
    for (const auto& nb : neighbors(cur, type, Direction::Out)) {
      if (seen.insert(nb).second) queue.push_back(nb);
    }
  }
  return false;
}

void GraphStore::add_edge(Edge e) {
  if (!nodes_.count(e.from) || !nodes_.count(e.to)) {
    throw Error(ErrorCode::InvalidStore, "edge " + e.from + " -" + e.type + "-> " + e.to + " has a missing endpoint");
  }
  if (!schema_.edge_types.empty() && !schema_.edge_types.count(e.type)) {
    throw Error(ErrorCode::InvalidStore, "undeclared edge type '" + e.type + "'");
  }
  if (is_containment(e.type) && reaches(e.to, e.from, e.type)) {
    throw Error(ErrorCode::InvalidStore, "edge " + e.from + " -" + e.type + "-> " + e.to + " closes a containment cycle");
  }
  auto insert_sorted = [](std::vector<std::string>& v, const std::string& id) {
    auto it = std::lower_bound(v.begin(), v.end(), id);
    if (it == v.end() || *it != id) v.insert(it, id);
  };
  insert_sorted(out_[{e.from, e.type}], e.to);
  insert_sorted(in_[{e.to, e.type}], e.from);
  edges_.push_back(std::move(e));
}

const Node* GraphStore::node(const std::string& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const std::vector<std::string>& GraphStore::neighbors(const std::string& id, const std::string& type,
                                                      Direction dir) const {
  static const std::vector<std::string> kEmpty;
  const auto& idx = dir == Direction::Out ? out_ : in_;
  auto it = idx.find({id, type});
  return it == idx.end() ? kEmpty : it->second;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_attr(const GraphSchema& schema, const std::string& label, const std::string& attr) {
  if (schema.labels.empty() || label.empty() || attr == "id") return;
  auto it = schema.labels.find(label);
  if (it == schema.labels.end()) throw Error(ErrorCode::InvalidQuery, "unknown label '" + label + "'");
  if (!it->second.count(attr)) {
    throw Error(ErrorCode::InvalidQuery, "label '" + label + "' has no attribute '" + attr + "'");
  }
}

void check_hops(const GraphSchema& schema, const std::vector<Hop>& hops) {
  for (const auto& h : hops) {
    if (!schema.edge_types.empty() && !schema.edge_types.count(h.edge_type)) {
      throw Error(ErrorCode::InvalidQuery, "unknown edge type '" + h.edge_type + "'");
    }
    if (h.transitive && !schema.containment.count(h.edge_type)) {
      throw Error(ErrorCode::InvalidQuery, "transitive traversal over non-containment edge '" + h.edge_type + "'");
    }
  }
}

void check_pattern(const GraphSchema& schema, const NodePattern& p) {
  if (!schema.labels.empty() && !p.label.empty() && !schema.labels.count(p.label)) {
    throw Error(ErrorCode::InvalidQuery, "unknown label '" + p.label + "'");
  }
  for (const auto& f : p.filters) check_attr(schema, p.label, f.attr);
}

}  // namespace

void validate_query(const QuerySpec& q, const GraphSchema& schema) {
  if (q.steps.empty() && !q.raw_passthrough) throw Error(ErrorCode::InvalidQuery, "query spec has no steps");
  for (const auto& s : q.steps) {
    check_pattern(schema, s.match);
    check_hops(schema, s.traverse);
    // Attribute checks only apply where the label of the current node set is known.
    std::string current = s.traverse.empty() ? s.match.label : std::string{};
    for (const auto& w : s.where) {
      if (w.attr) check_attr(schema, current, w.attr->attr);
      if (w.path) {
        check_hops(schema, w.path->path);
        if (w.path->target) {
          check_pattern(schema, w.path->target->match);
          check_hops(schema, w.path->target->traverse);
        }
      }
    }
    for (const auto& p : s.project) {
      check_hops(schema, p.reach);
      if (p.reach.empty()) check_attr(schema, current, p.attr);
    }
    if (s.aggregate && s.aggregate->op != AggregateOp::Count) check_attr(schema, current, s.aggregate->attr);
  }
}

// ---------------------------------------------------------------------------
// Execution

namespace {

using NodeIds = std::set<std::string>;

json attr_value(const Node& n, const std::string& attr) {
  if (attr == "id") return n.id;
  if (attr == "label") return n.label;
  auto it = n.props.find(attr);
  return it == n.props.end() ? json(nullptr) : canonical_value(*it);
}

bool compare(const json& v, FilterOp op, const json& values) {
  if (v.is_null()) return op == FilterOp::Ne;
  json cv = canonical_value(v);
  switch (op) {
    case FilterOp::Eq: return cv == canonical_value(values[0]);
    case FilterOp::Ne: return cv != canonical_value(values[0]);
    case FilterOp::In:
      return std::any_of(values.begin(), values.end(), [&](const json& x) { return cv == canonical_value(x); });
    default: break;
  }
  if (!cv.is_number() || !values[0].is_number()) return false;
  double a = cv.get<double>();
  double b = values[0].get<double>();
  switch (op) {
    case FilterOp::Lt: return a < b;
    case FilterOp::Le: return a <= b;
    case FilterOp::Gt: return a > b;
    case FilterOp::Ge: return a >= b;
    default: return false;
  }
}

NodeIds match_nodes(const GraphStore& g, const NodePattern& p) {
  NodeIds out;
  for (const auto& [id, n] : g.nodes()) {
    if (!p.label.empty() && n.label != p.label) continue;
    bool ok = std::all_of(p.filters.begin(), p.filters.end(),
                          [&](const AttrFilter& f) { return compare(attr_value(n, f.attr), f.op, f.values); });
    if (ok) out.insert(id);
  }
  return out;
}

NodeIds follow(const GraphStore& g, const NodeIds& from, const std::vector<Hop>& hops) {
  NodeIds cur = from;
  for (std::size_t i = 0; i < hops.size(); ++i) {
    const Hop& h = hops[i];
    NodeIds next;
    if (h.transitive) {
      bool last = i + 1 == hops.size();
      std::deque<std::string> queue(cur.begin(), cur.end());
      NodeIds seen;
      if (!last) next = cur;  // reflexive when another hop follows
      while (!queue.empty()) {
        auto id = queue.front();
        queue.pop_front();
        for (const auto& nb : g.neighbors(id, h.edge_type, h.direction)) {
          next.insert(nb);
          if (seen.insert(nb).second) queue.push_back(nb);
        }
      }
    } else {
      for (const auto& id : cur) {
        for (const auto& nb : g.neighbors(id, h.edge_type, h.direction)) next.insert(nb);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

NodeIds resolve(const GraphStore& g, const NodeSet& s) { return follow(g, match_nodes(g, s.match), s.traverse); }

bool holds(const GraphStore& g, const std::string& id, const WherePredicate& w) {
  if (w.attr) return compare(attr_value(*g.node(id), w.attr->attr), w.attr->op, w.attr->values);
  const PathPredicate& p = *w.path;
  NodeIds reached = follow(g, NodeIds{id}, p.path);
  bool any;
  if (p.target) {
    NodeIds target = resolve(g, *p.target);
    any = std::any_of(reached.begin(), reached.end(), [&](const std::string& r) { return target.count(r) > 0; });
  } else {
    any = !reached.empty();
  }
  return p.negated ? !any : any;
}

}  // namespace

json graph_execute(const QuerySpec& q, const GraphStore& store) {
  if (q.raw_passthrough && q.steps.empty()) {
    throw Error(ErrorCode::InvalidQuery, "raw passthrough cannot run on the in-memory graph");
  }
  json rows = json::array();
  for (const auto& s : q.steps) {
    NodeIds nodes = follow(store, match_nodes(store, s.match), s.traverse);
    std::vector<std::string> kept;
    for (const auto& id : nodes) {
      bool ok = std::all_of(s.where.begin(), s.where.end(), [&](const WherePredicate& w) { return holds(store, id, w); });
      if (ok) kept.push_back(id);
    }
    if (s.aggregate) {
      const Aggregate& a = *s.aggregate;
      json row = json::object();
      if (a.op == AggregateOp::Count) {
        row[a.as.empty() ? "count" : a.as] = kept.size();
      } else if (a.op == AggregateOp::Sum) {
        double sum = 0;
        for (const auto& id : kept) {
          json v = attr_value(*store.node(id), a.attr);
          if (v.is_number()) sum += v.get<double>();
        }
        row[a.as.empty() ? "sum" : a.as] = canonical_value(json(sum));
      } else {
        json vals = json::array();
        for (const auto& id : kept) {
          json v = attr_value(*store.node(id), a.attr);
          if (!v.is_null()) vals.push_back(v);
        }
        row[a.as.empty() ? a.attr : a.as] = vals;
      }
      rows.push_back(std::move(row));
      continue;
    }
    for (const auto& id : kept) {
      const Node& n = *store.node(id);
      json row = json::object();
      if (s.project.empty()) row["id"] = id;
      for (const auto& p : s.project) {
        if (p.reach.empty()) {
          row[p.column()] = attr_value(n, p.attr);
          continue;
        }
        json vals = json::array();
        for (const auto& r : follow(store, NodeIds{id}, p.reach)) {
          json v = attr_value(*store.node(r), p.attr);
          if (!v.is_null()) vals.push_back(v);
        }
        row[p.column()] = vals;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace dctl
