#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/hetgraph.hpp"

namespace mvhet {

// A schema-consistent typed path A_1 -R_1-> ... -R_{N-1}-> A_N. The target
// type is A_N; length N-1 aggregation steps.
struct Metapath {
  std::string name;
  std::vector<NodeTypeId> node_types;
  std::vector<RelationTypeId> relations;

  int length() const { return static_cast<int>(relations.size()); }
  NodeTypeId target_type() const { return node_types.back(); }
};

inline Metapath validate_metapath(const HeteroGraph& g, const std::string& name,
                                  const std::vector<std::string>& type_names,
                                  const std::vector<std::string>& relation_names) {
  if (type_names.size() < 2 || relation_names.size() + 1 != type_names.size())
    throw Error(ErrorKind::TypeChainBroken, name + ": need N>=2 types and N-1 relations", 1);
  Metapath p;
  p.name = name;
  for (const std::string& t : type_names) p.node_types.push_back(g.type_id(t));
  for (const std::string& r : relation_names) p.relations.push_back(g.relation_id(r));
  for (std::size_t l = 0; l < p.relations.size(); ++l) {
    const RelationSpec& r = g.relation(p.relations[l]);
    if (r.src_type != p.node_types[l] || r.dst_type != p.node_types[l + 1])
      throw Error(ErrorKind::TypeChainBroken,
                  name + ": relation " + r.name + " does not connect " +
                      g.type(p.node_types[l]).name + " -> " + g.type(p.node_types[l + 1]).name,
                  static_cast<long>(l + 1));
  }
  return p;
}

// Parses "A -write-> P -written_by-> A" into (types, relations) and
// validates against the schema.
inline Metapath parse_metapath(const HeteroGraph& g, const std::string& name,
                               const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  std::vector<std::string> types, rels;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (i % 2 == 0) {
      types.push_back(tok);
    } else {
      if (tok.size() < 4 || tok.front() != '-' || tok.substr(tok.size() - 2) != "->")
        throw Error(ErrorKind::ParseError, name + ": expected -relation->, got '" + tok + "'");
      rels.push_back(tok.substr(1, tok.size() - 3));
    }
  }
  if (tokens.size() % 2 == 0)
    throw Error(ErrorKind::ParseError, name + ": metapath must end with a node type");
  return validate_metapath(g, name, types, rels);
}

// One aggregation step of a compiled view: messages flow from nodes of
// src_level_type (A_{l-1}) into all nodes of level_type (A_l) via
// `relation` (= R_{l-1}). `gather` rows are level-l nodes, columns are
// level-(l-1) nodes; `norms` holds the in-degree C_i per level-l node.
struct ViewLevel {
  RelationTypeId relation = -1;
  NodeTypeId level_type = -1;
  NodeTypeId src_level_type = -1;
  Csr gather;
  std::vector<double> norms;

  bool operator==(const ViewLevel& o) const {
    return relation == o.relation && level_type == o.level_type &&
           src_level_type == o.src_level_type && gather == o.gather && norms == o.norms;
  }
};

// Level-wise propagation plan shared by all target nodes of a view.
struct ViewPlan {
  Metapath path;
  std::vector<ViewLevel> levels;  // levels l = 2..K in order
  int depth = 0;                  // = metapath length = K-1

  NodeTypeId target_type() const { return path.target_type(); }

  bool operator==(const ViewPlan& o) const {
    return path.node_types == o.path.node_types && path.relations == o.path.relations &&
           levels == o.levels && depth == o.depth;
  }
};

inline ViewPlan compile_view(const HeteroGraph& g, const Metapath& p) {
  ViewPlan plan;
  plan.path = p;
  plan.depth = p.length();
  for (int l = 2; l <= static_cast<int>(p.node_types.size()); ++l) {
    const RelationTypeId rel = p.relations[l - 2];
    const RelationSpec& spec = g.relation(rel);
    ViewLevel level;
    level.relation = rel;
    level.level_type = p.node_types[l - 1];
    level.src_level_type = p.node_types[l - 2];
    level.gather = g.adjacency(spec.inverse_of);
    level.norms = g.in_degree_norms(rel);
    plan.levels.push_back(std::move(level));
  }
  return plan;
}

enum class EgoSemantics { Relaxed, Strict };

// Per-node ego graph in explicit per-level form; the brute-force companion
// of ViewPlan propagation. Levels are indexed 0..K-1 (level l-1 in math
// notation); edges at level l connect a level-l node to its level-(l-1)
// sources.
struct EgoGraph {
  int target = -1;
  std::vector<std::vector<int>> level_nodes;                    // sorted per level
  std::vector<std::vector<std::pair<int, int>>> level_edges;    // (node at l, node at l-1), l>=1
};

inline EgoGraph extract_ego_oracle(const HeteroGraph& g, const Metapath& p, int v,
                                   EgoSemantics semantics = EgoSemantics::Relaxed) {
  const int K = static_cast<int>(p.node_types.size());
  if (v < 0 || v >= g.type(p.target_type()).count)
    throw Error(ErrorKind::TypeMismatch,
                "target " + std::to_string(v) + " out of range for type " +
                    g.type(p.target_type()).name);
  EgoGraph ego;
  ego.target = v;
  ego.level_nodes.assign(K, {});
  ego.level_edges.assign(K, {});
  ego.level_nodes[K - 1] = {v};
  // backward expansion: the full level-wise neighborhood
  for (int l = K - 1; l >= 1; --l) {
    const RelationSpec& rel = g.relation(p.relations[l - 1]);
    const Csr& gather = g.adjacency(rel.inverse_of);
    std::set<int> below;
    for (int node : ego.level_nodes[l]) {
      for (int src : gather.row(node)) {
        below.insert(src);
        ego.level_edges[l].emplace_back(node, src);
      }
    }
    ego.level_nodes[l - 1].assign(below.begin(), below.end());
  }
  if (semantics == EgoSemantics::Strict) {
    // keep only nodes lying on complete instances: every kept node above
    // level 0 must reach level 0 through kept nodes
    std::vector<std::set<int>> kept(K);
    kept[0].insert(ego.level_nodes[0].begin(), ego.level_nodes[0].end());
    for (int l = 1; l < K; ++l) {
      for (const auto& [node, src] : ego.level_edges[l])
        if (kept[l - 1].count(src)) kept[l].insert(node);
    }
    kept[K - 1].insert(v);  // the ego itself always remains
    for (int l = 1; l < K; ++l) {
      auto& edges = ego.level_edges[l];
      edges.erase(std::remove_if(edges.begin(), edges.end(),
                                 [&](const std::pair<int, int>& e) {
                                   return !kept[l].count(e.first) || !kept[l - 1].count(e.second);
                                 }),
                  edges.end());
      ego.level_nodes[l].assign(kept[l].begin(), kept[l].end());
    }
    ego.level_nodes[0].assign(kept[0].begin(), kept[0].end());
  }
  for (auto& e : ego.level_edges) std::sort(e.begin(), e.end());
  return ego;
}

}  // namespace mvhet
