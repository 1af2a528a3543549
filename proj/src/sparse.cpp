#include "mtdm/sparse.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

#include "mtdm/ops.hpp"

namespace mtdm {
namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapMat = Eigen::Map<const RowMat>;
using MapMat = Eigen::Map<RowMat>;

void require_rows(Var v, std::size_t rows, const char* op, const char* what) {
  if (v.shape().size() != 2 || v.shape()[0] != rows) {
    throw ShapeError(std::string(op) + ": " + what + " " + shape_str(v.shape()) + " needs " +
                     std::to_string(rows) + " rows");
  }
}

// Scatter-mean of rows of `feats` selected by `pick(edge)` into edge subjects.
template <typename Pick>
Var subject_mean(Var feats, const SparseAdjacency& adj, const char* op, Pick pick) {
  const Tensor& f = feats.value();
  const std::size_t d = f.cols();
  Tensor out({adj.num_entities(), d});
  for (const Edge& e : adj.edges()) {
    const Real inv = Real(1) / Real(adj.degree(std::size_t(e.subject)));
    auto src = f.row(std::size_t(pick(e)));
    auto dst = out.row(std::size_t(e.subject));
    for (std::size_t j = 0; j < d; ++j) dst[j] += inv * src[j];
  }
  return feats.tape->record(op, std::move(out), {feats}, [feats, &adj, pick, d](Tape& tape, const Tensor& g) {
    Tensor* gf = tape.grad_sink(feats);
    if (!gf) return;
    for (const Edge& e : adj.edges()) {
      const Real inv = Real(1) / Real(adj.degree(std::size_t(e.subject)));
      auto src = g.row(std::size_t(e.subject));
      auto dst = gf->row(std::size_t(pick(e)));
      for (std::size_t j = 0; j < d; ++j) dst[j] += inv * src[j];
    }
  });
}

}  // namespace

SparseAdjacency::SparseAdjacency(std::size_t num_entities, std::size_t num_relations, std::vector<Edge> edges)
    : num_entities_(num_entities), num_relations_(num_relations), edges_(std::move(edges)) {
  for (const Edge& e : edges_) {
    if (e.subject < 0 || std::size_t(e.subject) >= num_entities_ || e.object < 0 ||
        std::size_t(e.object) >= num_entities_) {
      throw std::out_of_range("adjacency edge (" + std::to_string(e.subject) + ", " + std::to_string(e.relation) +
                              ", " + std::to_string(e.object) + ") references an entity outside [0, " +
                              std::to_string(num_entities_) + ")");
    }
    if (e.relation < 0 || std::size_t(e.relation) >= num_relations_) {
      throw std::out_of_range("adjacency edge relation " + std::to_string(e.relation) + " outside [0, " +
                              std::to_string(num_relations_) + ")");
    }
  }
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.relation, a.subject, a.object) < std::tie(b.relation, b.subject, b.object);
  });
  relation_offset_.assign(num_relations_ + 1, 0);
  degree_.assign(num_entities_, 0);
  for (const Edge& e : edges_) {
    ++relation_offset_[std::size_t(e.relation) + 1];
    ++degree_[std::size_t(e.subject)];
  }
  for (std::size_t r = 0; r < num_relations_; ++r) relation_offset_[r + 1] += relation_offset_[r];
}

std::span<const Edge> SparseAdjacency::relation_edges(std::size_t r) const {
  if (r >= num_relations_) throw std::out_of_range("relation " + std::to_string(r) + " out of range");
  return std::span<const Edge>(edges_).subspan(relation_offset_[r], relation_offset_[r + 1] - relation_offset_[r]);
}

Var neighbor_mean(Var node_feats, const SparseAdjacency& adj) {
  require_rows(node_feats, adj.num_entities(), "neighbor_mean", "node features");
  return subject_mean(node_feats, adj, "neighbor_mean", [](const Edge& e) { return e.object; });
}

Var relation_mean(Var rel_feats, const SparseAdjacency& adj) {
  require_rows(rel_feats, adj.num_relations(), "relation_mean", "relation features");
  return subject_mean(rel_feats, adj, "relation_mean", [](const Edge& e) { return e.relation; });
}

Var sparse_relational_aggregate(Var node_feats, Var rel_feats, const SparseAdjacency& adj, Var w_entity,
                                Var w_relation) {
  return add(matmul(neighbor_mean(node_feats, adj), w_entity), matmul(relation_mean(rel_feats, adj), w_relation));
}

Var relational_aggregate(Var node_feats, Var rel_weights, const SparseAdjacency& adj) {
  require_rows(node_feats, adj.num_entities(), "relational_aggregate", "node features");
  require_rows(rel_weights, adj.num_relations(), "relational_aggregate", "relation weights");
  const std::size_t d = node_feats.value().cols();
  if (rel_weights.value().cols() != d * d) {
    throw ShapeError("relational_aggregate: relation weights " + shape_str(rel_weights.shape()) +
                     " are not d*d for d=" + std::to_string(d));
  }
  const Tensor& h = node_feats.value();
  const Tensor& w = rel_weights.value();
  Tensor out({adj.num_entities(), d});
  RowMat x, y;
  for (std::size_t r = 0; r < adj.num_relations(); ++r) {
    const auto edges = adj.relation_edges(r);
    if (edges.empty()) continue;
    x.resize(Eigen::Index(edges.size()), Eigen::Index(d));
    for (std::size_t i = 0; i < edges.size(); ++i) {
      x.row(Eigen::Index(i)) = CMapMat(h.row(std::size_t(edges[i].object)).data(), 1, Eigen::Index(d));
    }
    y.noalias() = x * CMapMat(w.row(r).data(), Eigen::Index(d), Eigen::Index(d));
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::size_t s = std::size_t(edges[i].subject);
      MapMat(out.row(s).data(), 1, Eigen::Index(d)) += y.row(Eigen::Index(i)) / Real(adj.degree(s));
    }
  }
  return node_feats.tape->record(
      "relational_aggregate", std::move(out), {node_feats, rel_weights},
      [node_feats, rel_weights, &adj, d](Tape& tape, const Tensor& g) {
        Tensor* gh = tape.grad_sink(node_feats);
        Tensor* gw = tape.grad_sink(rel_weights);
        const Tensor& h = node_feats.value();
        const Tensor& w = rel_weights.value();
        RowMat x, gy, gx;
        for (std::size_t r = 0; r < adj.num_relations(); ++r) {
          const auto edges = adj.relation_edges(r);
          if (edges.empty()) continue;
          const Eigen::Index m = Eigen::Index(edges.size());
          gy.resize(m, Eigen::Index(d));
          for (std::size_t i = 0; i < edges.size(); ++i) {
            const std::size_t s = std::size_t(edges[i].subject);
            gy.row(Eigen::Index(i)) = CMapMat(g.row(s).data(), 1, Eigen::Index(d)) / Real(adj.degree(s));
          }
          if (gw) {
            x.resize(m, Eigen::Index(d));
            for (std::size_t i = 0; i < edges.size(); ++i) {
              x.row(Eigen::Index(i)) = CMapMat(h.row(std::size_t(edges[i].object)).data(), 1, Eigen::Index(d));
            }
            MapMat(gw->row(r).data(), Eigen::Index(d), Eigen::Index(d)).noalias() += x.transpose() * gy;
          }
          if (gh) {
            gx.noalias() = gy * CMapMat(w.row(r).data(), Eigen::Index(d), Eigen::Index(d)).transpose();
            for (std::size_t i = 0; i < edges.size(); ++i) {
              MapMat(gh->row(std::size_t(edges[i].object)).data(), 1, Eigen::Index(d)) += gx.row(Eigen::Index(i));
            }
          }
        }
      });
}

}  // namespace mtdm
