#pragma once

#include <algorithm>
#include <vector>

#include "fate/common.hpp"
#include "fate/graph.hpp"
#include "fate/tensor.hpp"

namespace fate {

enum class BaselineKind { base, oracle, inl, average, pooling, knn };

inline const char* baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::base: return "base";
    case BaselineKind::oracle: return "oracle";
    case BaselineKind::inl: return "inl";
    case BaselineKind::average: return "average";
    case BaselineKind::pooling: return "pooling";
    case BaselineKind::knn: return "knn";
  }
  return "?";
}

// Every new feature takes the mean of all observed rows.
inline Tensor average_extrapolate(const Tensor& w_obs, size_t new_count) {
  if (w_obs.rows() == 0) throw DataError("average_extrapolate: empty observed set");
  Tensor mean(1, w_obs.cols());
  for (size_t i = 0; i < w_obs.rows(); ++i)
    for (size_t j = 0; j < w_obs.cols(); ++j) mean(0, j) += w_obs(i, j);
  for (size_t j = 0; j < w_obs.cols(); ++j)
    mean(0, j) /= static_cast<double>(w_obs.rows());
  Tensor out(new_count, w_obs.cols());
  for (size_t i = 0; i < new_count; ++i)
    for (size_t j = 0; j < w_obs.cols(); ++j) out(i, j) = mean(0, j);
  return out;
}

// Non-parametric two-hop mean over the (test-time) bipartite graph: an
// instance state is the mean of its observed features' embeddings, a target
// feature's embedding the mean of its instances' states. Empty neighborhoods
// give zero.
inline Tensor pooling_extrapolate(const Tensor& w, const BipartiteGraph& g,
                                  const std::vector<uint8_t>& observed,
                                  const std::vector<size_t>& targets) {
  const size_t h = w.cols();
  Tensor inst(g.n_instances, h);
  for (size_t i = 0; i < g.n_instances; ++i) {
    size_t n_obs = 0;
    for (size_t j : g.row_adj[i]) {
      if (j < observed.size() && observed[j]) {
        ++n_obs;
        for (size_t c = 0; c < h; ++c) inst(i, c) += w(j, c);
      }
    }
    if (n_obs > 0)
      for (size_t c = 0; c < h; ++c) inst(i, c) /= static_cast<double>(n_obs);
  }
  Tensor out(targets.size(), h);
  for (size_t t = 0; t < targets.size(); ++t) {
    const auto& nbrs = g.col_adj[targets[t]];
    if (nbrs.empty()) continue;
    for (size_t i : nbrs)
      for (size_t c = 0; c < h; ++c) out(t, c) += inst(i, c);
    for (size_t c = 0; c < h; ++c) out(t, c) /= static_cast<double>(nbrs.size());
  }
  return out;
}

// |A intersect B| / |A union B| over sorted instance lists; two empty sets
// score 0.
inline double jaccard(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) { ++inter; ++i; ++j; }
    else if (a[i] < b[j]) ++i;
    else ++j;
  }
  const size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// For each target feature: rank observed features by Jaccard similarity of
// test-column instance sets (ties broken by lower feature index) and average
// the embeddings of the top ceil(top_fraction * |observed|).
inline Tensor knn_extrapolate(const BipartiteGraph& g, const Tensor& w,
                              const std::vector<uint8_t>& observed,
                              const std::vector<size_t>& targets,
                              double top_fraction = 0.2) {
  if (top_fraction <= 0.0 || top_fraction > 1.0)
    throw ConfigError("knn_extrapolate: top_fraction must be in (0,1]");
  std::vector<size_t> obs_ids;
  for (size_t j = 0; j < observed.size(); ++j)
    if (observed[j]) obs_ids.push_back(j);
  if (obs_ids.empty()) throw DataError("knn_extrapolate: empty observed set");
  const size_t top = std::min(
      obs_ids.size(),
      std::max<size_t>(1, static_cast<size_t>(std::ceil(
                              top_fraction * static_cast<double>(obs_ids.size())))));
  const size_t h = w.cols();
  Tensor out(targets.size(), h);
  std::vector<std::pair<double, size_t>> ranked(obs_ids.size());
  for (size_t t = 0; t < targets.size(); ++t) {
    const auto& tcol = g.col_adj[targets[t]];
    for (size_t o = 0; o < obs_ids.size(); ++o)
      ranked[o] = {jaccard(tcol, g.col_adj[obs_ids[o]]), obs_ids[o]};
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (size_t r = 0; r < top; ++r)
      for (size_t c = 0; c < h; ++c) out(t, c) += w(ranked[r].second, c);
    for (size_t c = 0; c < h; ++c) out(t, c) /= static_cast<double>(top);
  }
  return out;
}

}  // namespace fate
