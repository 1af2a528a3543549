// Per-snapshot relational adjacency and the message-mean aggregations built on it.
//
// A fact (s, r, o) is an edge carrying a message from (r, o) into s. |N_s| is
// the number of edges whose subject is s; an entity with no edges has
// |N_s| = 0 and its aggregated row is zero.
//
// The aggregation ops keep a reference to the adjacency for backward(), so it
// must outlive the tape they were recorded on.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mtdm/tape.hpp"

namespace mtdm {

struct Edge {
  std::int64_t subject = 0;
  std::int64_t relation = 0;
  std::int64_t object = 0;

  auto operator<=>(const Edge&) const = default;
};

class SparseAdjacency {
 public:
  SparseAdjacency() = default;
  /// Throws std::out_of_range if an edge references an id outside the bounds.
  SparseAdjacency(std::size_t num_entities, std::size_t num_relations, std::vector<Edge> edges);

  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }

  /// All edges, grouped by relation (ascending) then subject.
  std::span<const Edge> edges() const { return edges_; }
  /// Edges of one relation.
  std::span<const Edge> relation_edges(std::size_t r) const;
  /// |N_s|.
  std::size_t degree(std::size_t s) const { return degree_.at(s); }
  std::span<const std::uint32_t> degrees() const { return degree_; }

 private:
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> relation_offset_;  // size num_relations + 1
  std::vector<std::uint32_t> degree_;
};

/// Row s = (1/|N_s|) * sum of node_feats[o] over edges (s, r, o).
Var neighbor_mean(Var node_feats, const SparseAdjacency& adj);

/// Row s = (1/|N_s|) * sum of rel_feats[r] over edges (s, r, o).
Var relation_mean(Var rel_feats, const SparseAdjacency& adj);

/// Residual message of one Res-GCN hop:
///   row s = (1/|N_s|) * sum over edges (s, r, o) of (e_o·W_e + r·W_r).
Var sparse_relational_aggregate(Var node_feats, Var rel_feats, const SparseAdjacency& adj, Var w_entity,
                                Var w_relation);

/// RGCN message with one d x d matrix per relation:
///   row s = (1/|N_s|) * sum over edges (s, r, o) of e_o·W_r
/// `rel_weights` is [num_relations, d*d], each row a row-major d x d matrix.
Var relational_aggregate(Var node_feats, Var rel_weights, const SparseAdjacency& adj);

}  // namespace mtdm
