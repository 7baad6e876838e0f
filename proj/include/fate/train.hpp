#pragma once

#include <chrono>
#include <utility>
#include <vector>

#include "fate/common.hpp"
#include "fate/evalsplit.hpp"
#include "fate/graph.hpp"
#include "fate/model.hpp"

namespace fate {

enum class Regime { self_supervised, inductive };
enum class MaskStrategy { nfold, leave_one_out, random_mask };

struct TrainConfig {
  Regime regime = Regime::self_supervised;
  MaskStrategy strategy = MaskStrategy::nfold;
  size_t n = 5;           // backbone steps per iteration (folds / samples)
  size_t k = 0;           // raw features per inductive sample; 0 = all
  size_t batch = 0;       // instances per mini-batch; 0 = auto via edge budget
  double rho = 0.5;       // DropEdge threshold
  double lr_backbone = 0.01;
  double lr_gnn = 0.001;
  size_t epochs = 200;
  uint64_t seed = 0;
  size_t edge_budget = 5'000'000;
  bool async_updates = true;  // false: joint update of theta and omega each step
  SelectPolicy select = SelectPolicy::min_logloss;
  size_t val_every_iters = 0;        // 0: validate once per epoch
  double leave_out_fraction = 0.2;   // leave_one_out strategy
  double random_mask_observed = 0.8; // random_mask: fraction kept per step

  void validate() const {
    if (n < 1) throw ConfigError("train: n must be >= 1");
    if (rho < 0.0 || rho > 1.0) throw ConfigError("train: rho outside [0,1]");
    if (lr_backbone < 0.0 || lr_gnn < 0.0)
      throw ConfigError("train: learning rates must be nonnegative");
  }
};

// Fresh shuffle, then deal into n disjoint subsets whose sizes differ by at
// most one and whose union is the input set.
inline std::vector<std::vector<size_t>> nfold_split(std::vector<size_t> features,
                                                    size_t n, Rng& rng) {
  if (n < 1 || n > features.size())
    throw ConfigError("nfold_split: need 1 <= n <= |features|");
  rng.shuffle(features);
  std::vector<std::vector<size_t>> folds(n);
  const size_t base = features.size() / n;
  const size_t extra = features.size() % n;
  size_t pos = 0;
  for (size_t f = 0; f < n; ++f) {
    size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(features.begin() + static_cast<long>(pos),
                    features.begin() + static_cast<long>(pos + len));
    pos += len;
  }
  return folds;
}

struct KshotSample {
  std::vector<size_t> raw_ids;      // sampled raw features
  std::vector<size_t> feature_ids;  // induced 0-1 feature set, sorted
};

// k distinct raw features uniform without replacement; the induced feature set
// is the union of their one-hot blocks.
inline KshotSample kshot_sample(const std::vector<std::pair<size_t, size_t>>& blocks,
                                size_t k, Rng& rng) {
  if (k > blocks.size()) throw ConfigError("kshot_sample: k > d");
  KshotSample s;
  s.raw_ids = rng.sample_without_replacement(blocks.size(), k);
  for (size_t m : s.raw_ids)
    for (size_t j = 0; j < blocks[m].second; ++j)
      s.feature_ids.push_back(blocks[m].first + j);
  std::sort(s.feature_ids.begin(), s.feature_ids.end());
  return s;
}

// Shuffled rows dealt into ceil(N/B) batches, all of size B except possibly
// the last.
inline std::vector<std::vector<size_t>> minibatch_partition(size_t n_rows, size_t batch,
                                                            Rng& rng) {
  if (batch < 1) throw ConfigError("minibatch_partition: B must be >= 1");
  std::vector<size_t> rows(n_rows);
  for (size_t i = 0; i < n_rows; ++i) rows[i] = i;
  rng.shuffle(rows);
  std::vector<std::vector<size_t>> batches;
  for (size_t begin = 0; begin < n_rows; begin += batch) {
    size_t end = std::min(n_rows, begin + batch);
    batches.emplace_back(rows.begin() + static_cast<long>(begin),
                         rows.begin() + static_cast<long>(end));
  }
  return batches;
}

// What fit() needs to know about the data beyond the matrices: which features
// are trainable/maskable and how raw-feature blocks tile the index space.
struct TrainTask {
  const EncodedMatrix* x_train = nullptr;  // column-filtered to the feature set
  const EncodedMatrix* x_val = nullptr;
  std::vector<size_t> feature_set;                    // original feature ids
  std::vector<std::pair<size_t, size_t>> raw_blocks;  // (offset, size) per raw feature
  size_t n_features = 0;                              // graph width D
};

namespace detail {

inline std::vector<uint8_t> mask_flags(const std::vector<size_t>& ids, size_t d) {
  std::vector<uint8_t> m(d, 0);
  for (size_t j : ids) m[j] = 1;
  return m;
}

// Per-iteration mask sets for the self-supervised regime.
inline std::vector<std::vector<size_t>> make_mask_sets(const TrainTask& task,
                                                       const TrainConfig& cfg,
                                                       const std::vector<size_t>& fixed_leave_out,
                                                       Rng& rng) {
  std::vector<std::vector<size_t>> sets;
  if (task.feature_set.empty()) {
    // plain backbone training: n unmasked steps per iteration
    sets.assign(cfg.n, {});
    return sets;
  }
  switch (cfg.strategy) {
    case MaskStrategy::nfold:
      sets = nfold_split(task.feature_set, std::min(cfg.n, task.feature_set.size()), rng);
      break;
    case MaskStrategy::leave_one_out:
      sets.assign(cfg.n, fixed_leave_out);
      break;
    case MaskStrategy::random_mask: {
      const size_t keep = static_cast<size_t>(
          cfg.random_mask_observed * static_cast<double>(task.feature_set.size()));
      for (size_t s = 0; s < cfg.n; ++s) {
        auto pick = rng.sample_without_replacement(task.feature_set.size(),
                                                   task.feature_set.size() - keep);
        std::vector<size_t> ids;
        ids.reserve(pick.size());
        for (size_t p : pick) ids.push_back(task.feature_set[p]);
        std::sort(ids.begin(), ids.end());
        sets.push_back(std::move(ids));
      }
      break;
    }
  }
  return sets;
}

inline void step_params(std::vector<Param*> ps, double lr) {
  for (Param* p : ps) sgd_step(*p, lr);
}

inline void zero_grads(std::vector<Param*> ps) {
  for (Param* p : ps) p->zero_grad();
}

}  // namespace detail

// One self-supervised iteration on a batch: n masked backbone updates with
// immediate theta steps, omega gradients accumulated across the folds and
// applied once (Alg. 1's asynchronous rule). Joint mode updates both per step.
inline std::vector<double> self_supervised_iteration(
    const EncodedMatrix& batch, ModelState& state, const TrainTask& task,
    const TrainConfig& cfg, const std::vector<std::vector<size_t>>& mask_sets,
    Rng& rng) {
  std::vector<double> losses;
  BipartiteGraph g = from_matrix(batch, task.n_features);
  detail::zero_grads(state.omega());
  for (const auto& fold : mask_sets) {
    BipartiteGraph gd;
    const BipartiteGraph* gp = &g;
    if (cfg.rho > 0.0) {
      gd = drop_edge(g, cfg.rho, rng);
      gp = &gd;
    }
    auto mask = detail::mask_flags(fold, task.n_features);
    detail::zero_grads(state.theta());
    Tape tape;
    ForwardPlan plan;
    plan.rows = &batch;
    plan.graph = gp;
    plan.mode = ForwardMode::masked_set;
    plan.masked = &mask;
    plan.train = true;
    ForwardResult fwd = fate_forward(tape, plan, state, rng);
    NodeId loss = fate_loss(tape, fwd, batch.labels, state.backbone);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value))
      throw NumericError("self_supervised_iteration: non-finite loss");
    losses.push_back(loss_value);
    tape.backward(loss);
    detail::step_params(state.theta(), cfg.lr_backbone);
    if (!cfg.async_updates) {
      detail::step_params(state.omega(), cfg.lr_gnn);
      detail::zero_grads(state.omega());
    }
  }
  if (cfg.async_updates) {
    detail::step_params(state.omega(), cfg.lr_gnn);
    detail::zero_grads(state.omega());
  }
  return losses;
}

// One inductive iteration: n k-shot proxy updates. The proxy sub-matrix is
// column-reindexed; GNN initial states are the current W rows of the sampled
// feature set and every feature adopts the propagated embedding.
inline std::vector<double> inductive_iteration(const EncodedMatrix& batch,
                                               ModelState& state, const TrainTask& task,
                                               const TrainConfig& cfg, Rng& rng) {
  std::vector<double> losses;
  const size_t d = task.raw_blocks.size();
  const size_t k = cfg.k == 0 ? d : cfg.k;
  detail::zero_grads(state.omega());
  for (size_t s = 0; s < cfg.n; ++s) {
    KshotSample sample = kshot_sample(task.raw_blocks, k, rng);
    EncodedMatrix proxy = column_submatrix(batch, sample.feature_ids);
    BipartiteGraph g = from_matrix(proxy, sample.feature_ids.size());
    BipartiteGraph gd;
    const BipartiteGraph* gp = &g;
    if (cfg.rho > 0.0) {
      gd = drop_edge(g, cfg.rho, rng);
      gp = &gd;
    }
    detail::zero_grads(state.theta());
    Tape tape;
    ForwardPlan plan;
    plan.rows = &proxy;
    plan.graph = gp;
    plan.mode = ForwardMode::all_updated;
    plan.proxy_feature_ids = sample.feature_ids;
    plan.train = true;
    ForwardResult fwd = fate_forward(tape, plan, state, rng);
    NodeId loss = fate_loss(tape, fwd, proxy.labels, state.backbone);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value))
      throw NumericError("inductive_iteration: non-finite loss");
    losses.push_back(loss_value);
    tape.backward(loss);
    detail::step_params(state.theta(), cfg.lr_backbone);
    if (!cfg.async_updates) {
      detail::step_params(state.omega(), cfg.lr_gnn);
      detail::zero_grads(state.omega());
    }
  }
  if (cfg.async_updates) {
    detail::step_params(state.omega(), cfg.lr_gnn);
    detail::zero_grads(state.omega());
  }
  return losses;
}

struct EpochRecord {
  size_t epoch = 0;
  std::vector<double> fold_losses;
  double val_metric = 0.0;
  double wall_ms = 0.0;
};

struct FitResult {
  ModelState state;      // checkpoint at the best validation epoch
  size_t best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochRecord> log;
};

namespace detail {

// Maps graph feature id -> W row, with -1 for expansion features past the
// trained vocabulary. Empty when the spaces already coincide.
inline std::vector<long> expansion_map(size_t graph_features, size_t trained) {
  if (graph_features == trained) return {};
  std::vector<long> map(graph_features, -1);
  for (size_t j = 0; j < std::min(graph_features, trained); ++j)
    map[j] = static_cast<long>(j);
  return map;
}

// Validation under the self-supervised regime: metric averaged over the
// epoch's mask sets, each masked in turn (no DropEdge at evaluation).
inline double validate_masked(const EncodedMatrix& x_val, ModelState& state,
                              const TrainTask& task, const TrainConfig& cfg,
                              const std::vector<std::vector<size_t>>& mask_sets) {
  const size_t d_val = std::max(task.n_features, x_val.cols);
  BipartiteGraph g = from_matrix(x_val, d_val);
  const auto map = expansion_map(d_val, state.W.value.rows());
  Rng norng(0);
  double total = 0.0;
  for (const auto& fold : mask_sets) {
    auto mask = mask_flags(fold, d_val);
    for (size_t j = state.W.value.rows(); j < d_val; ++j) mask[j] = 1;
    Tape tape;
    ForwardPlan plan;
    plan.rows = &x_val;
    plan.graph = &g;
    plan.mode = ForwardMode::masked_set;
    plan.masked = &mask;
    plan.w_row_of_feature = map;
    plan.train = false;
    ForwardResult fwd = fate_forward(tape, plan, state, norng);
    const Tensor& probs = tape.value(fwd.probabilities);
    if (cfg.select == SelectPolicy::min_logloss) {
      total += logloss(probs, x_val.labels);
    } else {
      std::vector<double> scores(probs.rows());
      for (size_t i = 0; i < probs.rows(); ++i)
        scores[i] = probs.cols() == 1 ? probs(i, 0) : probs(i, 1);
      total += roc_auc(scores, x_val.labels);
    }
  }
  return total / static_cast<double>(mask_sets.size());
}

// Validation under the inductive regime: all features updated, full set.
inline double validate_all_updated(const EncodedMatrix& x_val, ModelState& state,
                                   const TrainTask& task, const TrainConfig& cfg) {
  const size_t d_val = std::max(task.n_features, x_val.cols);
  BipartiteGraph g = from_matrix(x_val, d_val);
  Rng norng(0);
  Tape tape;
  ForwardPlan plan;
  plan.rows = &x_val;
  plan.graph = &g;
  plan.mode = ForwardMode::all_updated;
  plan.w_row_of_feature = expansion_map(d_val, state.W.value.rows());
  plan.train = false;
  ForwardResult fwd = fate_forward(tape, plan, state, norng);
  const Tensor& probs = tape.value(fwd.probabilities);
  if (cfg.select == SelectPolicy::min_logloss) return logloss(probs, x_val.labels);
  std::vector<double> scores(probs.rows());
  for (size_t i = 0; i < probs.rows(); ++i)
    scores[i] = probs.cols() == 1 ? probs(i, 0) : probs(i, 1);
  return roc_auc(scores, x_val.labels);
}

inline bool metric_improves(double candidate, double best, SelectPolicy policy) {
  return policy == SelectPolicy::min_logloss ? candidate < best : candidate > best;
}

}  // namespace detail

// Alg.-1 outer loop: epochs over mini-batches of the selected regime, with
// per-epoch validation and best-checkpoint retention (earliest optimum wins).
inline FitResult fit(const TrainTask& task, ModelState state, const TrainConfig& cfg) {
  cfg.validate();
  const EncodedMatrix& x_train = *task.x_train;
  Rng rng(mix_seed(cfg.seed, 0xf17ull));

  size_t batch_size = cfg.batch;
  if (batch_size == 0) {
    const size_t nnz = x_train.nnz();
    if (nnz > cfg.edge_budget && x_train.rows() > 0) {
      const size_t per_row = std::max<size_t>(1, nnz / x_train.rows());
      batch_size = std::max<size_t>(1, cfg.edge_budget / per_row);
    } else {
      batch_size = x_train.rows();
    }
  }

  std::vector<size_t> fixed_leave_out;
  if (cfg.strategy == MaskStrategy::leave_one_out) {
    const size_t m = std::max<size_t>(
        1, static_cast<size_t>(cfg.leave_out_fraction *
                               static_cast<double>(task.feature_set.size())));
    auto pick = rng.sample_without_replacement(task.feature_set.size(), m);
    for (size_t p : pick) fixed_leave_out.push_back(task.feature_set[p]);
    std::sort(fixed_leave_out.begin(), fixed_leave_out.end());
  }

  FitResult result;
  result.state = state;
  result.best_metric =
      cfg.select == SelectPolicy::min_logloss ? 1e300 : -1e300;

  size_t iters = 0;
  bool validated_this_epoch = false;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto batches = minibatch_partition(x_train.rows(), batch_size, rng);
    std::vector<double> loss_acc;
    std::vector<std::vector<size_t>> mask_sets;
    double val_metric = 0.0;
    validated_this_epoch = false;

    auto run_validation = [&]() {
      if (cfg.regime == Regime::self_supervised)
        val_metric = detail::validate_masked(*task.x_val, state, task, cfg, mask_sets);
      else
        val_metric = detail::validate_all_updated(*task.x_val, state, task, cfg);
      validated_this_epoch = true;
      if (detail::metric_improves(val_metric, result.best_metric, cfg.select)) {
        result.best_metric = val_metric;
        result.best_epoch = epoch;
        result.state = state;
      }
    };

    for (const auto& batch_rows : batches) {
      EncodedMatrix batch = row_slice(x_train, batch_rows);
      std::vector<double> losses;
      if (cfg.regime == Regime::self_supervised) {
        mask_sets = detail::make_mask_sets(task, cfg, fixed_leave_out, rng);
        losses = self_supervised_iteration(batch, state, task, cfg, mask_sets, rng);
      } else {
        losses = inductive_iteration(batch, state, task, cfg, rng);
      }
      if (loss_acc.empty()) loss_acc.assign(losses.size(), 0.0);
      for (size_t s = 0; s < losses.size(); ++s) loss_acc[s] += losses[s];
      ++iters;
      if (cfg.val_every_iters > 0 && iters % cfg.val_every_iters == 0) run_validation();
    }
    for (double& l : loss_acc) l /= static_cast<double>(batches.size());
    if (cfg.regime == Regime::inductive && mask_sets.empty()) mask_sets = {{}};
    if (cfg.val_every_iters == 0 || !validated_this_epoch) run_validation();

    const auto t1 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.fold_losses = std::move(loss_acc);
    rec.val_metric = val_metric;
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.log.push_back(std::move(rec));
  }
  if (cfg.epochs == 0) result.state = state;
  return result;
}

}  // namespace fate
