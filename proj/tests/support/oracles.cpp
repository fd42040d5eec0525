#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <tuple>

namespace oracle {

using dctl::AggregateOp;
using dctl::AttrFilter;
using dctl::Direction;
using dctl::FilterOp;
using dctl::GraphStore;
using dctl::Hop;
using dctl::QuerySpec;

namespace {

using Ids = std::set<std::string>;
using Relation = std::set<std::pair<std::string, std::string>>;

Relation relation(const GraphStore& g, const std::string& type, Direction dir) {
  Relation r;
  for (const auto& e : g.edges()) {
    if (e.type != type) continue;
    if (dir == Direction::Out) r.insert({e.from, e.to});
    else r.insert({e.to, e.from});
  }
  return r;
}

Relation closure(Relation r) {
  for (;;) {
    Relation next = r;
    for (const auto& [a, b] : r) {
      for (auto it = r.lower_bound({b, std::string{}}); it != r.end() && it->first == b; ++it) next.insert({a, it->second});
    }
    if (next.size() == r.size()) return r;
    r = std::move(next);
  }
}

Ids image(const Relation& r, const Ids& s) {
  Ids out;
  for (const auto& [a, b] : r) {
    if (s.count(a)) out.insert(b);
  }
  return out;
}

/// Relations and their closures, computed once per query evaluation.
class Relations {
 public:
  explicit Relations(const GraphStore& g) : g_(g) {}

  const Relation& get(const Hop& h) {
    auto key = std::make_tuple(h.edge_type, h.direction, h.transitive);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Relation r = relation(g_, h.edge_type, h.direction);
    if (h.transitive) r = closure(std::move(r));
    return cache_.emplace(key, std::move(r)).first->second;
  }

 private:
  const GraphStore& g_;
  std::map<std::tuple<std::string, Direction, bool>, Relation> cache_;
};

Ids walk(Relations& rel, Ids cur, const std::vector<Hop>& hops) {
  for (std::size_t i = 0; i < hops.size(); ++i) {
    Ids reached = image(rel.get(hops[i]), cur);
    if (hops[i].transitive && i + 1 < hops.size()) reached.insert(cur.begin(), cur.end());
    cur = std::move(reached);
  }
  return cur;
}

json attr(const dctl::Node& n, const std::string& a) {
  if (a == "id") return n.id;
  if (a == "label") return n.label;
  return n.props.contains(a) ? n.props[a] : json(nullptr);
}

bool same(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  return a == b;
}

bool passes(const json& v, const AttrFilter& f) {
  if (v.is_null()) return f.op == FilterOp::Ne;
  const json& x = f.values.at(0);
  switch (f.op) {
    case FilterOp::Eq: return same(v, x);
    case FilterOp::Ne: return !same(v, x);
    case FilterOp::In:
      return std::any_of(f.values.begin(), f.values.end(), [&](const json& y) { return same(v, y); });
    default: break;
  }
  if (!v.is_number() || !x.is_number()) return false;
  double a = v.get<double>(), b = x.get<double>();
  if (f.op == FilterOp::Lt) return a < b;
  if (f.op == FilterOp::Le) return a <= b;
  if (f.op == FilterOp::Gt) return a > b;
  return a >= b;
}

Ids matching(const GraphStore& g, const dctl::NodePattern& p) {
  Ids out;
  for (const auto& [id, n] : g.nodes()) {
    if (!p.label.empty() && n.label != p.label) continue;
    bool ok = true;
    for (const auto& f : p.filters) ok = ok && passes(attr(n, f.attr), f);
    if (ok) out.insert(id);
  }
  return out;
}

}  // namespace

json brute_force_execute(const QuerySpec& q, const GraphStore& g) {
  json rows = json::array();
  Relations rel(g);
  for (const auto& s : q.steps) {
    Ids nodes = walk(rel, matching(g, s.match), s.traverse);
    std::vector<std::string> kept;
    for (const auto& id : nodes) {
      bool ok = true;
      for (const auto& w : s.where) {
        if (w.attr) {
          ok = ok && passes(attr(*g.node(id), w.attr->attr), *w.attr);
          continue;
        }
        Ids reached = walk(rel, {id}, w.path->path);
        if (w.path->target) {
          Ids t = walk(rel, matching(g, w.path->target->match), w.path->target->traverse);
          Ids both;
          std::set_intersection(reached.begin(), reached.end(), t.begin(), t.end(), std::inserter(both, both.end()));
          reached = both;
        }
        ok = ok && (reached.empty() == w.path->negated);
      }
      if (ok) kept.push_back(id);
    }
    if (s.aggregate) {
      const auto& a = *s.aggregate;
      json row = json::object();
      if (a.op == AggregateOp::Count) {
        row[a.as.empty() ? "count" : a.as] = kept.size();
      } else if (a.op == AggregateOp::Sum) {
        double total = 0;
        for (const auto& id : kept) {
          json v = attr(*g.node(id), a.attr);
          if (v.is_number()) total += v.get<double>();
        }
        row[a.as.empty() ? "sum" : a.as] = total;
      } else {
        json vals = json::array();
        for (const auto& id : kept) {
          json v = attr(*g.node(id), a.attr);
          if (!v.is_null()) vals.push_back(v);
        }
        row[a.as.empty() ? a.attr : a.as] = vals;
      }
      rows.push_back(row);
      continue;
    }
    for (const auto& id : kept) {
      json row = json::object();
      if (s.project.empty()) row["id"] = id;
      for (const auto& p : s.project) {
        if (p.reach.empty()) {
          row[p.column()] = attr(*g.node(id), p.attr);
          continue;
        }
        json vals = json::array();
        for (const auto& r : walk(rel, {id}, p.reach)) {
          json v = attr(*g.node(r), p.attr);
          if (!v.is_null()) vals.push_back(v);
        }
        row[p.column()] = vals;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

bool rows_equivalent(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!rows_equivalent(a[i], b[i])) return false;
    }
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !rows_equivalent(it.value(), b[it.key()])) return false;
    }
    return true;
  }
  return a == b;
}

namespace {

std::string trimmed(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool atom_same(const json& a, const json& b) {
  if (a.is_string() && b.is_string()) return trimmed(a.get<std::string>()) == trimmed(b.get<std::string>());
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!atom_same(a[i], b[i])) return false;
    }
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key()) || !atom_same(it.value(), b[it.key()])) return false;
    }
    return true;
  }
  return a == b;
}

bool subset(const json& a, const json& b) {
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!b.contains(it.key()) || !atom_same(it.value(), b[it.key()])) return false;
  }
  return true;
}

void flatten(const json& v, std::vector<json>& records, std::vector<json>& atoms) {
  if (v.is_array()) {
    for (const auto& e : v) flatten(e, records, atoms);
  } else if (v.is_object()) {
    records.push_back(v);
  } else if (std::none_of(atoms.begin(), atoms.end(), [&](const json& a) { return atom_same(a, v); })) {
    atoms.push_back(v);
  }
}

bool failure(const json& v) {
  if (v.is_string()) return v.get<std::string>() == "__query_failure__";
  if (v.is_object() && v.contains("__query_failure__")) return true;
  if (v.is_array() || v.is_object()) {
    return std::any_of(v.begin(), v.end(), [](const json& e) { return failure(e); });
  }
  return false;
}

}  // namespace

std::size_t max_record_matches(const std::vector<json>& reference, const std::vector<json>& generated) {
  std::vector<bool> used(reference.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t gi) -> std::size_t {
    if (gi == generated.size()) return 0;
    std::size_t top = best(gi + 1);
    for (std::size_t r = 0; r < reference.size(); ++r) {
      if (used[r]) continue;
      if (!subset(generated[gi], reference[r]) && !subset(reference[r], generated[gi])) continue;
      used[r] = true;
      top = std::max(top, 1 + best(gi + 1));
      used[r] = false;
    }
    return top;
  };
  return best(0);
}

double brute_force_overlap(const json& R, const json& G) {
  if (failure(G)) return 0.0;
  std::vector<json> dr, ar, dg, ag;
  flatten(R, dr, ar);
  flatten(G, dg, ag);
  std::size_t m = max_record_matches(dr, dg);
  std::size_t inter = 0;
  for (const auto& a : ar) {
    inter += std::any_of(ag.begin(), ag.end(), [&](const json& b) { return atom_same(a, b); }) ? 1 : 0;
  }
  double denom = static_cast<double>(dr.size() + dg.size() - m + ar.size() + ag.size() - inter);
  return denom == 0 ? 1.0 : static_cast<double>(m + inter) / denom;
}

dctl::GraphStore random_store(std::mt19937& rng, std::size_t n) {
  dctl::GraphSchema schema;
  for (const char* l : {"A", "B", "C"}) schema.labels[l] = {"x", "tag"};
  schema.edge_types = {"CONTAINS", "LINK"};
  schema.containment = {"CONTAINS"};
  GraphStore g(schema);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto name = [](std::size_t i) {
    std::string s = std::to_string(i);
    return "n" + std::string(4 - s.size(), '0') + s;
  };
  for (std::size_t i = 0; i < n; ++i) {
    dctl::Node node{name(i), std::string(1, static_cast<char>('A' + pick(0, 2))), json::object()};
    if (pick(0, 4) > 0) node.props["x"] = pick(0, 9);
    node.props["tag"] = pick(0, 1) ? "red" : "blue";
    g.add_node(node);
  }
  std::size_t edges = n * 2;
  for (std::size_t k = 0; k < edges && n > 1; ++k) {
    std::size_t a = static_cast<std::size_t>(pick(0, static_cast<int>(n) - 1));
    std::size_t b = static_cast<std::size_t>(pick(0, static_cast<int>(n) - 1));
    if (a == b) continue;
    if (pick(0, 2) > 0) {
      g.add_edge({name(std::min(a, b)), name(std::max(a, b)), "CONTAINS"});
    } else {
      g.add_edge({name(a), name(b), "LINK"});
    }
  }
  return g;
}

namespace {

AttrFilter random_filter(std::mt19937& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  AttrFilter f;
  if (pick(0, 2) == 0) {
    f.attr = "tag";
    f.op = pick(0, 1) ? FilterOp::Eq : FilterOp::Ne;
    f.values = json::array({pick(0, 1) ? "red" : "blue"});
    return f;
  }
  f.attr = "x";
  static const FilterOp ops[] = {FilterOp::Eq, FilterOp::In, FilterOp::Ne, FilterOp::Lt,
                                 FilterOp::Le, FilterOp::Gt, FilterOp::Ge};
  f.op = ops[pick(0, 6)];
  f.values = json::array({pick(0, 9)});
  if (f.op == FilterOp::In) f.values.push_back(pick(0, 9));
  return f;
}

Hop random_hop(std::mt19937& rng, bool force_transitive) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Hop h;
  h.direction = pick(0, 1) ? Direction::Out : Direction::In;
  if (force_transitive || pick(0, 1)) {
    h.edge_type = "CONTAINS";
    h.transitive = force_transitive || pick(0, 1);
  } else {
    h.edge_type = "LINK";
  }
  return h;
}

std::vector<Hop> random_path(std::mt19937& rng, int max_len, bool need_closure) {
  int len = std::uniform_int_distribution<int>(1, max_len)(rng);
  int closure_at = need_closure ? std::uniform_int_distribution<int>(0, len - 1)(rng) : -1;
  std::vector<Hop> hops;
  for (int i = 0; i < len; ++i) hops.push_back(random_hop(rng, i == closure_at));
  return hops;
}

}  // namespace

QuerySpec random_closure_query(std::mt19937& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  QuerySpec q;
  q.id = "random";
  int steps = pick(1, 2);
  for (int s = 0; s < steps; ++s) {
    dctl::Step st;
    static const char* labels[] = {"", "A", "B", "C"};
    st.match.label = labels[pick(0, 3)];
    for (int i = pick(0, 2); i > 0; --i) st.match.filters.push_back(random_filter(rng));
    // Where the closure goes: traversal, a path predicate, or a reach projection.
    int site = pick(0, 2);
    if (site == 0 || pick(0, 1)) st.traverse = random_path(rng, 3, site == 0);
    if (site == 1 || pick(0, 2) == 0) {
      dctl::PathPredicate p;
      p.negated = pick(0, 1);
      p.path = random_path(rng, 2, site == 1);
      if (pick(0, 1)) {
        dctl::NodeSet t;
        t.match.label = labels[pick(0, 3)];
        if (pick(0, 1)) t.match.filters.push_back(random_filter(rng));
        if (pick(0, 2) == 0) t.traverse = random_path(rng, 2, false);
        p.target = t;
      }
      st.where.push_back({std::nullopt, p});
    }
    if (pick(0, 2) == 0) st.where.push_back({random_filter(rng), std::nullopt});
    int shape = pick(0, 3);
    if (site == 2 || shape == 0) {
      st.project.push_back({"id", {}, ""});
      st.project.push_back({"x", random_path(rng, 2, site == 2), "reached"});
    } else if (shape == 1) {
      st.project.push_back({"id", {}, ""});
      st.project.push_back({"x", {}, ""});
      st.project.push_back({"tag", {}, ""});
    } else if (shape == 2) {
      static const AggregateOp ops[] = {AggregateOp::Count, AggregateOp::Sum, AggregateOp::Collect};
      st.aggregate = dctl::Aggregate{ops[pick(0, 2)], "x", ""};
    }
    q.steps.push_back(std::move(st));
  }
  return q;
}

}  // namespace oracle
