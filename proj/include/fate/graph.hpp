#pragma once

#include <memory>
#include <ostream>
#include <vector>

#include "fate/autodiff.hpp"
#include "fate/common.hpp"
#include "fate/encode.hpp"

namespace fate {

// Sparse instance x feature incidence as a bipartite graph. Immutable after
// construction; drop_edge and slicing return new graphs.
struct BipartiteGraph {
  size_t n_instances = 0;
  size_t n_features = 0;
  std::vector<std::vector<size_t>> row_adj;  // instance -> sorted feature ids
  std::vector<std::vector<size_t>> col_adj;  // feature -> sorted instance ids

  size_t d_in(size_t i) const { return row_adj[i].size(); }
  size_t d_out(size_t j) const { return col_adj[j].size(); }

  size_t edge_count() const {
    size_t n = 0;
    for (const auto& r : row_adj) n += r.size();
    return n;
  }
};

inline BipartiteGraph from_matrix(const EncodedMatrix& x, size_t n_features = 0) {
  BipartiteGraph g;
  g.n_instances = x.rows();
  g.n_features = std::max(n_features, x.cols);
  g.row_adj = x.row_indices;
  g.col_adj.resize(g.n_features);
  for (size_t i = 0; i < g.n_instances; ++i)
    for (size_t j : g.row_adj[i]) g.col_adj[j].push_back(i);
  return g;
}

// Keep each edge independently iff a fresh uniform draw from (0,1) exceeds
// rho; degrees are those of the kept set. One draw per edge per call, in row
// order, so a fixed seed gives a fixed graph.
inline BipartiteGraph drop_edge(const BipartiteGraph& g, double rho, Rng& rng) {
  if (rho < 0.0 || rho > 1.0) throw ConfigError("drop_edge: rho outside [0,1]");
  BipartiteGraph out;
  out.n_instances = g.n_instances;
  out.n_features = g.n_features;
  out.row_adj.resize(g.n_instances);
  out.col_adj.resize(g.n_features);
  for (size_t i = 0; i < g.n_instances; ++i) {
    for (size_t j : g.row_adj[i]) {
      if (rng.uniform_open() > rho) {
        out.row_adj[i].push_back(j);
        out.col_adj[j].push_back(i);
      }
    }
  }
  return out;
}

// Columns reindexed densely in subset order; rows keep their order and may
// lose nonzeros.
inline EncodedMatrix column_submatrix(const EncodedMatrix& x,
                                      const std::vector<size_t>& subset) {
  std::vector<long> new_id(x.cols, -1);
  for (size_t k = 0; k < subset.size(); ++k) {
    if (subset[k] >= x.cols) throw DataError("column_submatrix: index out of range");
    new_id[subset[k]] = static_cast<long>(k);
  }
  EncodedMatrix out;
  out.cols = subset.size();
  out.row_indices.resize(x.rows());
  out.labels = x.labels;
  for (size_t i = 0; i < x.rows(); ++i) {
    for (size_t j : x.row_indices[i])
      if (new_id[j] >= 0) out.row_indices[i].push_back(static_cast<size_t>(new_id[j]));
    std::sort(out.row_indices[i].begin(), out.row_indices[i].end());
  }
  return out;
}

// Restrict rows to a column mask without reindexing (columns keep their ids).
inline EncodedMatrix column_filter(const EncodedMatrix& x,
                                   const std::vector<uint8_t>& keep) {
  EncodedMatrix out;
  out.cols = x.cols;
  out.labels = x.labels;
  out.row_indices.resize(x.rows());
  for (size_t i = 0; i < x.rows(); ++i)
    for (size_t j : x.row_indices[i])
      if (j < keep.size() && keep[j]) out.row_indices[i].push_back(j);
  return out;
}

inline EncodedMatrix row_slice(const EncodedMatrix& x, const std::vector<size_t>& rows) {
  EncodedMatrix out;
  out.cols = x.cols;
  for (size_t r : rows) {
    out.row_indices.push_back(x.row_indices[r]);
    out.labels.push_back(x.labels[r]);
  }
  return out;
}

// ---- sparse operators over a graph ----

// Unit-weight incidence (N x D): the embedding layer's batch lookup+sum.
inline SparsePtr incidence(const EncodedMatrix& x, size_t n_features = 0) {
  auto s = std::make_shared<SparseMat>();
  s->rows = x.rows();
  s->cols = std::max(n_features, x.cols);
  s->row_ptr.push_back(0);
  for (const auto& r : x.row_indices) {
    for (size_t j : r) {
      s->col.push_back(j);
      s->val.push_back(1.0);
    }
    s->row_ptr.push_back(s->col.size());
  }
  return s;
}

// D_in^{-1} X (N x D): instance-side mean aggregation. Empty neighborhoods
// produce zero rows.
inline SparsePtr instance_mean_adj(const BipartiteGraph& g) {
  auto s = std::make_shared<SparseMat>();
  s->rows = g.n_instances;
  s->cols = g.n_features;
  s->row_ptr.push_back(0);
  for (size_t i = 0; i < g.n_instances; ++i) {
    const double w = g.d_in(i) > 0 ? 1.0 / static_cast<double>(g.d_in(i)) : 0.0;
    for (size_t j : g.row_adj[i]) {
      s->col.push_back(j);
      s->val.push_back(w);
    }
    s->row_ptr.push_back(s->col.size());
  }
  return s;
}

// D_out^{-1} X^T (D x N): feature-side mean aggregation.
inline SparsePtr feature_mean_adj(const BipartiteGraph& g) {
  auto s = std::make_shared<SparseMat>();
  s->rows = g.n_features;
  s->cols = g.n_instances;
  s->row_ptr.push_back(0);
  for (size_t j = 0; j < g.n_features; ++j) {
    const double w = g.d_out(j) > 0 ? 1.0 / static_cast<double>(g.d_out(j)) : 0.0;
    for (size_t i : g.col_adj[j]) {
      s->col.push_back(i);
      s->val.push_back(w);
    }
    s->row_ptr.push_back(s->col.size());
  }
  return s;
}

// Symmetric self-loop normalization for the gcn flavor: edge (i, j) carries
// 1/sqrt((d_in_i + 1)(d_out_j + 1)) and each node's self term 1/(deg + 1).
inline SparsePtr gcn_instance_adj(const BipartiteGraph& g) {
  auto s = std::make_shared<SparseMat>();
  s->rows = g.n_instances;
  s->cols = g.n_features;
  s->row_ptr.push_back(0);
  for (size_t i = 0; i < g.n_instances; ++i) {
    const double di = static_cast<double>(g.d_in(i)) + 1.0;
    for (size_t j : g.row_adj[i]) {
      const double dj = static_cast<double>(g.d_out(j)) + 1.0;
      s->col.push_back(j);
      s->val.push_back(1.0 / std::sqrt(di * dj));
    }
    s->row_ptr.push_back(s->col.size());
  }
  return s;
}

inline SparsePtr gcn_feature_adj(const BipartiteGraph& g) {
  auto s = std::make_shared<SparseMat>();
  s->rows = g.n_features;
  s->cols = g.n_instances;
  s->row_ptr.push_back(0);
  for (size_t j = 0; j < g.n_features; ++j) {
    const double dj = static_cast<double>(g.d_out(j)) + 1.0;
    for (size_t i : g.col_adj[j]) {
      const double di = static_cast<double>(g.d_in(i)) + 1.0;
      s->col.push_back(i);
      s->val.push_back(1.0 / std::sqrt(di * dj));
    }
    s->row_ptr.push_back(s->col.size());
  }
  return s;
}

inline std::vector<double> gcn_instance_self(const BipartiteGraph& g) {
  std::vector<double> v(g.n_instances);
  for (size_t i = 0; i < g.n_instances; ++i)
    v[i] = 1.0 / (static_cast<double>(g.d_in(i)) + 1.0);
  return v;
}

inline std::vector<double> gcn_feature_self(const BipartiteGraph& g) {
  std::vector<double> v(g.n_features);
  for (size_t j = 0; j < g.n_features; ++j)
    v[j] = 1.0 / (static_cast<double>(g.d_out(j)) + 1.0);
  return v;
}

// Debug dump: `instance<TAB>feature` per edge.
inline void dump_edges(const BipartiteGraph& g, std::ostream& out) {
  for (size_t i = 0; i < g.n_instances; ++i)
    for (size_t j : g.row_adj[i]) out << i << "\t" << j << "\n";
}

}  // namespace fate
