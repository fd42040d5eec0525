#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctl/graph_store.hpp"
#include "dctl/query_spec.hpp"

namespace oracle {

using json = nlohmann::json;

/// Evaluates a query by relation algebra: each hop is the image of a set under
/// a (type, direction) relation, closures are computed to a fixpoint.
json brute_force_execute(const dctl::QuerySpec& q, const dctl::GraphStore& g);

/// Row lists equal position by position; numbers compare by value.
bool rows_equivalent(const json& a, const json& b);

/// Largest one-to-one cover matching, by trying every assignment.
std::size_t max_record_matches(const std::vector<json>& reference, const std::vector<json>& generated);

/// Overlap score with its own flattening and the brute-force matching.
double brute_force_overlap(const json& R, const json& G);

/// Labels A/B/C with props x (int, sometimes absent) and tag; CONTAINS only points
/// from lower to higher ids, LINK edges are unconstrained.
dctl::GraphStore random_store(std::mt19937& rng, std::size_t nodes);

/// Random single- or two-step query that always carries a transitive hop.
dctl::QuerySpec random_closure_query(std::mt19937& rng);

}  // namespace oracle
