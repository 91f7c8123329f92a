#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/mat.hpp"

namespace mvhet {

using NodeTypeId = int;
using RelationTypeId = int;

enum class Direction { Forward, Inverse };

struct NodeType {
  NodeTypeId id = -1;
  std::string name;
  int count = 0;
  int feat_dim = 0;
};

// Relations come in inverse pairs: the forward member lives in R+ and the
// inverse in R-. inverse_of is an involution that swaps src/dst types.
struct RelationSpec {
  RelationTypeId id = -1;
  std::string name;
  NodeTypeId src_type = -1;
  NodeTypeId dst_type = -1;
  Direction direction = Direction::Forward;
  RelationTypeId inverse_of = -1;
};

// Immutable typed graph: per-type dense features and optional labels,
// per-relation CSR adjacency. Built via GraphBuilder.
class HeteroGraph {
 public:
  int num_node_types() const { return static_cast<int>(types_.size()); }
  int num_relations() const { return static_cast<int>(relations_.size()); }
  const NodeType& type(NodeTypeId t) const { return types_.at(t); }
  const RelationSpec& relation(RelationTypeId r) const { return relations_.at(r); }
  const std::vector<NodeType>& types() const { return types_; }
  const std::vector<RelationSpec>& relations() const { return relations_; }

  NodeTypeId type_id(const std::string& name) const {
    auto it = type_index_.find(name);
    if (it == type_index_.end()) throw Error(ErrorKind::UnknownType, name);
    return it->second;
  }
  RelationTypeId relation_id(const std::string& name) const {
    auto it = relation_index_.find(name);
    if (it == relation_index_.end()) throw Error(ErrorKind::UnknownRelation, name);
    return it->second;
  }
  bool has_type(const std::string& name) const { return type_index_.count(name) > 0; }
  bool has_relation(const std::string& name) const { return relation_index_.count(name) > 0; }

  const Mat& features(NodeTypeId t) const { return features_.at(t); }
  const std::optional<std::vector<int>>& labels(NodeTypeId t) const { return labels_.at(t); }
  const Csr& adjacency(RelationTypeId r) const { return adjacency_.at(r); }

  std::vector<int> neighbors(RelationTypeId r, int node) const {
    const Csr& a = adjacency(r);
    if (node < 0 || node >= a.rows())
      throw Error(ErrorKind::EndpointOutOfRange,
                  "node " + std::to_string(node) + " under relation " + relation(r).name);
    return a.row(node);
  }

  // In-degree counts per destination node of r; the C_i mean normalizer.
  std::vector<double> in_degree_norms(RelationTypeId r) const {
    const Csr& inv = adjacency(relation(r).inverse_of);
    std::vector<double> out(inv.rows());
    for (int i = 0; i < inv.rows(); ++i) out[i] = static_cast<double>(inv.row_size(i));
    return out;
  }

 private:
  friend class GraphBuilder;
  std::vector<NodeType> types_;
  std::vector<RelationSpec> relations_;
  std::unordered_map<std::string, NodeTypeId> type_index_;
  std::unordered_map<std::string, RelationTypeId> relation_index_;
  std::vector<Mat> features_;
  std::vector<std::optional<std::vector<int>>> labels_;
  std::vector<Csr> adjacency_;
};

class GraphBuilder {
 public:
  explicit GraphBuilder(bool auto_inverse = true) : auto_inverse_(auto_inverse) {}

  NodeTypeId add_node_type(const std::string& name, int count, int feat_dim) {
    if (g_.type_index_.count(name))
      throw Error(ErrorKind::ConfigInvalid, "duplicate node type " + name);
    NodeTypeId id = static_cast<int>(g_.types_.size());
    g_.types_.push_back(NodeType{id, name, count, feat_dim});
    g_.type_index_.emplace(name, id);
    g_.features_.emplace_back(count, feat_dim);
    g_.labels_.emplace_back(std::nullopt);
    return id;
  }

  // Declares a forward/inverse pair; returns (forward id, inverse id).
  std::pair<RelationTypeId, RelationTypeId> add_relation(const std::string& name, NodeTypeId src,
                                                         NodeTypeId dst,
                                                         const std::string& inverse_name) {
    check_type(src);
    check_type(dst);
    if (g_.relation_index_.count(name) || g_.relation_index_.count(inverse_name) ||
        name == inverse_name)
      throw Error(ErrorKind::ConfigInvalid, "duplicate relation name " + name);
    RelationTypeId fwd = static_cast<int>(g_.relations_.size());
    RelationTypeId inv = fwd + 1;
    g_.relations_.push_back(RelationSpec{fwd, name, src, dst, Direction::Forward, inv});
    g_.relations_.push_back(RelationSpec{inv, inverse_name, dst, src, Direction::Inverse, fwd});
    g_.relation_index_.emplace(name, fwd);
    g_.relation_index_.emplace(inverse_name, inv);
    edges_.resize(g_.relations_.size());
    return {fwd, inv};
  }

  void add_edges(RelationTypeId r, const std::vector<std::pair<int, int>>& pairs) {
    check_relation(r);
    auto& bucket = edges_[r];
    bucket.insert(bucket.end(), pairs.begin(), pairs.end());
  }

  void set_features(NodeTypeId t, Mat features) {
    check_type(t);
    const NodeType& nt = g_.types_[t];
    if (features.rows() != nt.count || features.cols() != nt.feat_dim)
      throw Error(ErrorKind::FeatureShapeMismatch,
                  nt.name + ": expected " + std::to_string(nt.count) + "x" +
                      std::to_string(nt.feat_dim) + ", got " + std::to_string(features.rows()) +
                      "x" + std::to_string(features.cols()));
    g_.features_[t] = std::move(features);
  }

  // Class index per node; -1 marks an unlabeled node within a labeled type.
  void set_labels(NodeTypeId t, std::vector<int> labels) {
    check_type(t);
    if (static_cast<int>(labels.size()) != g_.types_[t].count)
      throw Error(ErrorKind::FeatureShapeMismatch, "label vector length != node count");
    g_.labels_[t] = std::move(labels);
  }

  HeteroGraph build() {
    g_.adjacency_.clear();
    g_.adjacency_.reserve(g_.relations_.size());
    for (const RelationSpec& r : g_.relations_) {
      std::vector<std::pair<int, int>> pairs = edges_[r.id];
      if (auto_inverse_) {
        for (const auto& [u, v] : edges_[r.inverse_of]) pairs.emplace_back(v, u);
      }
      const int nr = g_.types_[r.src_type].count;
      const int nc = g_.types_[r.dst_type].count;
      for (const auto& [u, v] : pairs) {
        if (u < 0 || u >= nr || v < 0 || v >= nc)
          throw Error(ErrorKind::EndpointOutOfRange,
                      r.name + ": edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
      }
      g_.adjacency_.emplace_back(nr, nc, std::move(pairs));
    }
    if (!auto_inverse_) {
      for (const RelationSpec& r : g_.relations_) {
        if (!(g_.adjacency_[r.inverse_of] == g_.adjacency_[r.id].transposed()))
          throw Error(ErrorKind::MissingInversePair,
                      r.name + " and " + g_.relations_[r.inverse_of].name +
                          " are not transposes of each other");
      }
    }
    return std::move(g_);
  }

 private:
  void check_type(NodeTypeId t) const {
    if (t < 0 || t >= static_cast<int>(g_.types_.size()))
      throw Error(ErrorKind::UnknownType, "type id " + std::to_string(t));
  }
  void check_relation(RelationTypeId r) const {
    if (r < 0 || r >= static_cast<int>(g_.relations_.size()))
      throw Error(ErrorKind::UnknownRelation, "relation id " + std::to_string(r));
  }

  bool auto_inverse_;
  HeteroGraph g_;
  std::vector<std::vector<std::pair<int, int>>> edges_;
};

}  // namespace mvhet
