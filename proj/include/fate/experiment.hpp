#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "fate/baselines.hpp"
#include "fate/checkpoint.hpp"
#include "fate/common.hpp"
#include "fate/encode.hpp"
#include "fate/evalsplit.hpp"
#include "fate/graph.hpp"
#include "fate/model.hpp"
#include "fate/synth.hpp"
#include "fate/train.hpp"

namespace fate {

using Json = nlohmann::json;

enum class Method { fate, base, oracle, inl, average, pooling, knn };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::fate: return "fate";
    case Method::base: return "base";
    case Method::oracle: return "oracle";
    case Method::inl: return "inl";
    case Method::average: return "average";
    case Method::pooling: return "pooling";
    case Method::knn: return "knn";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  for (Method m : {Method::fate, Method::base, Method::oracle, Method::inl,
                   Method::average, Method::pooling, Method::knn})
    if (s == method_name(m)) return m;
  throw ConfigError("unknown method: " + s);
}

// One line of the append-only results file (JSON per line; wall_ms is the one
// volatile field and always comes last in comparisons).
struct ResultsRecord {
  std::string dataset;
  std::string method;
  std::string split_id;  // "r0.50" for ratio cells, "T3" for chronological folds
  uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  double wall_ms = 0.0;
  std::string error;

  Json to_json() const {
    Json j{{"dataset", dataset}, {"method", method}, {"split", split_id},
           {"seed", seed},       {"metric", metric}, {"value", value},
           {"wall_ms", wall_ms}};
    if (!error.empty()) j["error"] = error;
    return j;
  }

  static ResultsRecord from_json(const Json& j) {
    ResultsRecord r;
    r.dataset = j.at("dataset");
    r.method = j.at("method");
    r.split_id = j.at("split");
    r.seed = j.at("seed");
    r.metric = j.at("metric");
    r.value = j.at("value");
    r.wall_ms = j.value("wall_ms", 0.0);
    r.error = j.value("error", "");
    return r;
  }

  std::string key() const {
    return dataset + "|" + method + "|" + split_id + "|" + std::to_string(seed) +
           "|" + metric;
  }
};

inline void append_records(const std::string& path,
                           const std::vector<ResultsRecord>& recs) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append results: " + path);
  for (const auto& r : recs) out << r.to_json().dump() << "\n";
}

inline std::vector<ResultsRecord> load_records(const std::string& path) {
  std::vector<ResultsRecord> recs;
  std::ifstream in(path);
  if (!in) return recs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    recs.push_back(ResultsRecord::from_json(Json::parse(line)));
  }
  return recs;
}

// ---------------------------------------------------------------------------
// Random-split (UCI-style) protocol
// ---------------------------------------------------------------------------

// Everything one (observed ratio, seed) cell needs: train-rows vocabulary,
// row splits, observed-feature partition, derived matrices. Matrices keep the
// original column ids; "obs" restricts to observed columns, "vocab" to the
// trained vocabulary, "full" includes test-time expansion features.
struct UciCell {
  FeatureVocabulary vocab;
  size_t d_train = 0;
  size_t d_eff = 0;
  std::vector<uint8_t> observed;  // size d_eff; expansion features unobserved
  std::vector<size_t> observed_ids;
  std::vector<std::pair<size_t, size_t>> raw_blocks;
  size_t n_classes = 0;

  EncodedMatrix train_obs, train_vocab;
  EncodedMatrix val_obs, val_vocab;
  EncodedMatrix test_obs, test_vocab, test_full;
};

inline UciCell build_uci_cell(const RawTable& table, const RawSchema& schema,
                              double observed_ratio, uint64_t seed) {
  if (observed_ratio <= 0.0 || observed_ratio > 1.0)
    throw ConfigError("observed_ratio must be in (0,1]");

  Rng row_rng(mix_seed(seed, 0x2015ull));
  const size_t n = table.rows.size();
  std::vector<size_t> rows(n);
  for (size_t i = 0; i < n; ++i) rows[i] = i;
  row_rng.shuffle(rows);
  const size_t n_train = static_cast<size_t>(0.6 * static_cast<double>(n));
  const size_t n_val = static_cast<size_t>(0.2 * static_cast<double>(n));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw DataError("build_uci_cell: degenerate split sizes");
  std::vector<size_t> train_rows(rows.begin(), rows.begin() + static_cast<long>(n_train));
  std::vector<size_t> val_rows(rows.begin() + static_cast<long>(n_train),
                               rows.begin() + static_cast<long>(n_train + n_val));
  std::vector<size_t> test_rows(rows.begin() + static_cast<long>(n_train + n_val),
                                rows.end());

  UciCell cell;
  cell.vocab = FeatureVocabulary::build(table, schema, train_rows);
  cell.d_train = cell.vocab.total();
  cell.n_classes = cell.vocab.n_classes();
  for (const auto& b : cell.vocab.blocks())
    cell.raw_blocks.emplace_back(b.offset, b.size);

  EncodedMatrix train_full = encode_rows(table, schema, cell.vocab, train_rows, false);
  EncodedMatrix val_full = encode_rows(table, schema, cell.vocab, val_rows, true);
  EncodedMatrix test_full = encode_rows(table, schema, cell.vocab, test_rows, true);
  cell.d_eff = std::max({cell.d_train, val_full.cols, test_full.cols});
  train_full.cols = val_full.cols = test_full.cols = cell.d_eff;

  Rng feat_rng(mix_seed(seed, 0xfea7ull));
  std::vector<size_t> feats(cell.d_train);
  for (size_t j = 0; j < cell.d_train; ++j) feats[j] = j;
  feat_rng.shuffle(feats);
  const size_t n_obs =
      static_cast<size_t>(observed_ratio * static_cast<double>(cell.d_train));
  cell.observed.assign(cell.d_eff, 0);
  for (size_t kk = 0; kk < n_obs; ++kk) cell.observed[feats[kk]] = 1;
  for (size_t j = 0; j < cell.d_eff; ++j)
    if (cell.observed[j]) cell.observed_ids.push_back(j);

  std::vector<uint8_t> vocab_cols(cell.d_eff, 0);
  for (size_t j = 0; j < cell.d_train; ++j) vocab_cols[j] = 1;

  cell.train_obs = column_filter(train_full, cell.observed);
  cell.train_vocab = std::move(train_full);
  cell.val_obs = column_filter(val_full, cell.observed);
  cell.val_vocab = column_filter(val_full, vocab_cols);
  cell.test_obs = column_filter(test_full, cell.observed);
  cell.test_vocab = column_filter(test_full, vocab_cols);
  cell.test_full = std::move(test_full);
  return cell;
}

struct UciRunConfig {
  BackboneConfig backbone;  // n_classes is filled per cell
  GnnConfig gnn;
  TrainConfig train;
  double knn_top_fraction = 0.2;
  std::string metric = "accuracy";  // or "auc"
};

inline UciRunConfig uci_defaults() {
  UciRunConfig cfg;
  cfg.backbone.embed_dim = 8;
  cfg.backbone.classifier_hidden = {8, 8};
  cfg.gnn.layers = 4;
  cfg.gnn.flavor = GnnFlavor::gcn;
  cfg.gnn.width = 8;
  cfg.train.regime = Regime::self_supervised;
  cfg.train.n = 5;
  cfg.train.rho = 0.5;
  cfg.train.lr_backbone = 0.01;
  cfg.train.lr_gnn = 0.001;
  cfg.train.epochs = 200;
  cfg.train.select = SelectPolicy::min_logloss;
  return cfg;
}

namespace expdetail {

inline double score_metric(const Tensor& probs, const std::vector<int>& labels,
                           const std::string& metric) {
  if (metric == "accuracy") return accuracy(probs, labels);
  if (metric == "auc") {
    std::vector<double> scores(probs.rows());
    for (size_t i = 0; i < probs.rows(); ++i)
      scores[i] = probs.cols() == 1 ? probs(i, 0) : probs(i, 1);
    return roc_auc(scores, labels);
  }
  if (metric == "logloss") return logloss(probs, labels);
  throw ConfigError("unknown metric: " + metric);
}

inline BackboneConfig cell_backbone(const UciRunConfig& cfg, size_t n_classes) {
  BackboneConfig b = cfg.backbone;
  if (b.head == Head::softmax) b.n_classes = n_classes;
  return b;
}

inline std::vector<long> expansion_ids(size_t d_eff, size_t d_train) {
  if (d_eff == d_train) return {};
  std::vector<long> map(d_eff, -1);
  for (size_t j = 0; j < d_train; ++j) map[j] = static_cast<long>(j);
  return map;
}

// Pad a D x H table to d_eff rows (zeros past D).
inline Tensor pad_rows(const Tensor& w, size_t rows) {
  if (w.rows() >= rows) return w;
  Tensor out(rows, w.cols());
  for (size_t i = 0; i < w.rows(); ++i)
    for (size_t j = 0; j < w.cols(); ++j) out(i, j) = w(i, j);
  return out;
}

}  // namespace expdetail

// Plain supervised backbone training (no GNN, no masking): the shared
// machinery with an empty maskable set and a 0-layer GNN.
inline FitResult fit_plain_backbone(const EncodedMatrix& x_train,
                                    const EncodedMatrix& x_val, size_t d,
                                    const BackboneConfig& bcfg,
                                    const TrainConfig& proto, uint64_t seed,
                                    const ModelState* warm_start = nullptr) {
  GnnConfig g0;
  g0.layers = 0;
  g0.width = bcfg.embed_dim;
  ModelState state;
  if (warm_start != nullptr) {
    state = *warm_start;
  } else {
    Rng init_rng(mix_seed(seed, 0x141full));
    state = ModelState::init(d, bcfg, g0, init_rng);
  }
  TrainConfig cfg = proto;
  cfg.regime = Regime::self_supervised;
  cfg.strategy = MaskStrategy::nfold;
  cfg.n = 1;
  cfg.rho = 0.0;
  cfg.seed = seed;
  TrainTask task;
  task.x_train = &x_train;
  task.x_val = &x_val;
  task.n_features = std::max(d, std::max(x_train.cols, x_val.cols));
  return fit(task, std::move(state), cfg);
}

// FATE training on a prepared cell.
inline FitResult fit_fate_uci(const UciCell& cell, const UciRunConfig& cfg,
                              uint64_t seed) {
  BackboneConfig bcfg = expdetail::cell_backbone(cfg, cell.n_classes);
  Rng init_rng(mix_seed(seed, 0x141full));
  ModelState state = ModelState::init(cell.d_train, bcfg, cfg.gnn, init_rng);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;
  TrainTask task;
  task.x_train = &cell.train_obs;
  task.x_val = &cell.val_obs;
  task.feature_set = cell.observed_ids;
  task.raw_blocks = cell.raw_blocks;
  task.n_features = cell.d_train;
  return fit(task, std::move(state), tcfg);
}

// FATE inference on a test matrix: new/unobserved features extrapolated per
// the regime's protocol over the test graph.
inline Tensor fate_predict(const EncodedMatrix& x_test, size_t d_eff,
                           const std::vector<uint8_t>& observed, ModelState& state,
                           Regime regime) {
  BipartiteGraph g = from_matrix(x_test, d_eff);
  Rng norng(0);
  Tape tape;
  ForwardPlan plan;
  plan.rows = &x_test;
  plan.graph = &g;
  plan.w_row_of_feature = expdetail::expansion_ids(d_eff, state.W.value.rows());
  std::vector<uint8_t> mask;
  if (regime == Regime::self_supervised) {
    plan.mode = ForwardMode::masked_set;
    mask.assign(d_eff, 1);
    for (size_t j = 0; j < std::min(observed.size(), static_cast<size_t>(d_eff)); ++j)
      if (observed[j]) mask[j] = 0;
    plan.masked = &mask;
  } else {
    plan.mode = ForwardMode::all_updated;
  }
  ForwardResult fwd = fate_forward(tape, plan, state, norng);
  return tape.value(fwd.probabilities);
}

// Extrapolation-baseline prediction: observed embeddings kept, target rows
// filled by the rule, then the plain backbone on the full test matrix.
inline Tensor extrapolate_predict(Method method, const UciCell& cell,
                                  ModelState& base_state, double knn_top_fraction) {
  const size_t h = base_state.backbone.embed_dim;
  Tensor w_ext = expdetail::pad_rows(base_state.W.value, cell.d_eff);
  std::vector<size_t> targets;
  for (size_t j = 0; j < cell.d_eff; ++j)
    if (!cell.observed[j]) targets.push_back(j);
  Tensor filled;
  if (method == Method::average) {
    Tensor w_obs(cell.observed_ids.size(), h);
    for (size_t r = 0; r < cell.observed_ids.size(); ++r)
      for (size_t c = 0; c < h; ++c) w_obs(r, c) = base_state.W.value(cell.observed_ids[r], c);
    filled = average_extrapolate(w_obs, targets.size());
  } else {
    BipartiteGraph g = from_matrix(cell.test_full, cell.d_eff);
    if (method == Method::pooling)
      filled = pooling_extrapolate(w_ext, g, cell.observed, targets);
    else
      filled = knn_extrapolate(g, w_ext, cell.observed, targets, knn_top_fraction);
  }
  for (size_t t = 0; t < targets.size(); ++t)
    for (size_t c = 0; c < h; ++c) w_ext(targets[t], c) = filled(t, c);
  return backbone_predict(cell.test_full, w_ext, base_state);
}

// Runs the requested methods on one (ratio, seed) cell, sharing the Base
// training across base/average/pooling/knn. Returns test metrics by method.
inline std::map<Method, double> run_uci_cell(const UciCell& cell,
                                             const UciRunConfig& cfg, uint64_t seed,
                                             const std::vector<Method>& methods,
                                             std::map<Method, FitResult>* fits = nullptr) {
  std::map<Method, double> out;
  BackboneConfig bcfg = expdetail::cell_backbone(cfg, cell.n_classes);

  auto need = [&](std::initializer_list<Method> ms) {
    for (Method m : ms)
      for (Method q : methods)
        if (m == q) return true;
    return false;
  };

  std::unique_ptr<FitResult> base_fit;
  if (need({Method::base, Method::average, Method::pooling, Method::knn, Method::inl})) {
    base_fit = std::make_unique<FitResult>(
        fit_plain_backbone(cell.train_obs, cell.val_obs, cell.d_train, bcfg,
                           cfg.train, seed));
  }

  for (Method m : methods) {
    switch (m) {
      case Method::fate: {
        FitResult r = fit_fate_uci(cell, cfg, seed);
        Tensor probs = fate_predict(cell.test_full, cell.d_eff, cell.observed,
                                    r.state, cfg.train.regime);
        out[m] = expdetail::score_metric(probs, cell.test_full.labels, cfg.metric);
        if (fits != nullptr) (*fits)[m] = std::move(r);
        break;
      }
      case Method::base: {
        Tensor probs = backbone_predict(cell.test_obs, base_fit->state.W.value,
                                        base_fit->state);
        out[m] = expdetail::score_metric(probs, cell.test_obs.labels, cfg.metric);
        break;
      }
      case Method::oracle: {
        FitResult r = fit_plain_backbone(cell.train_vocab, cell.val_vocab,
                                         cell.d_train, bcfg, cfg.train, seed);
        Tensor probs = backbone_predict(cell.test_vocab, r.state.W.value, r.state);
        out[m] = expdetail::score_metric(probs, cell.test_vocab.labels, cfg.metric);
        if (fits != nullptr) (*fits)[m] = std::move(r);
        break;
      }
      case Method::inl: {
        // stage 2: continue from the stage-1 selection on the unobserved
        // columns, selecting by validation over the full vocabulary
        std::vector<uint8_t> unobserved(cell.d_eff, 0);
        for (size_t j = 0; j < cell.d_train; ++j)
          unobserved[j] = cell.observed[j] ? 0 : 1;
        EncodedMatrix train_unobs = column_filter(cell.train_vocab, unobserved);
        FitResult r2 = fit_plain_backbone(train_unobs, cell.val_vocab, cell.d_train,
                                          bcfg, cfg.train, seed, &base_fit->state);
        Tensor probs = backbone_predict(cell.test_vocab, r2.state.W.value, r2.state);
        out[m] = expdetail::score_metric(probs, cell.test_vocab.labels, cfg.metric);
        if (fits != nullptr) (*fits)[m] = std::move(r2);
        break;
      }
      case Method::average:
      case Method::pooling:
      case Method::knn: {
        Tensor probs = extrapolate_predict(m, cell, base_fit->state,
                                           cfg.knn_top_fraction);
        out[m] = expdetail::score_metric(probs, cell.test_full.labels, cfg.metric);
        break;
      }
    }
  }
  if (fits != nullptr && base_fit != nullptr)
    (*fits)[Method::base] = std::move(*base_fit);
  return out;
}

// ---------------------------------------------------------------------------
// Sweep driver: (method x ratio x seed) cells, parallel across cells,
// append-only results with resume.
// ---------------------------------------------------------------------------

struct SweepPlan {
  std::string dataset_name;
  const RawTable* table = nullptr;
  const RawSchema* schema = nullptr;
  UciRunConfig cfg;
  std::vector<double> ratios;
  std::vector<uint64_t> seeds;
  std::vector<Method> methods;
  std::string results_path;
  size_t threads = 0;  // 0 = hardware count
};

inline std::string ratio_split_id(double r) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "r%.2f", r);
  return buf;
}

// Cells already present in the results file are not recomputed; failed cells
// are recorded with an error tag and the sweep continues.
inline std::vector<ResultsRecord> run_sweep(const SweepPlan& plan) {
  std::set<std::string> done;
  for (const auto& r : load_records(plan.results_path)) done.insert(r.key());

  struct CellJob {
    double ratio;
    uint64_t seed;
    std::vector<Method> methods;
  };
  std::vector<CellJob> jobs;
  for (double ratio : plan.ratios) {
    for (uint64_t seed : plan.seeds) {
      CellJob job;
      job.ratio = ratio;
      job.seed = seed;
      for (Method m : plan.methods) {
        ResultsRecord probe;
        probe.dataset = plan.dataset_name;
        probe.method = method_name(m);
        probe.split_id = ratio_split_id(ratio);
        probe.seed = seed;
        probe.metric = plan.cfg.metric;
        if (!done.count(probe.key())) job.methods.push_back(m);
      }
      if (!job.methods.empty()) jobs.push_back(std::move(job));
    }
  }

  std::vector<std::vector<ResultsRecord>> slots(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const CellJob& job = jobs[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        UciCell cell = build_uci_cell(*plan.table, *plan.schema, job.ratio, job.seed);
        auto metrics = run_uci_cell(cell, plan.cfg, job.seed, job.methods);
        const auto t1 = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                          static_cast<double>(job.methods.size());
        for (Method m : job.methods) {
          ResultsRecord rec;
          rec.dataset = plan.dataset_name;
          rec.method = method_name(m);
          rec.split_id = ratio_split_id(job.ratio);
          rec.seed = job.seed;
          rec.metric = plan.cfg.metric;
          rec.value = metrics.at(m);
          rec.wall_ms = ms;
          slots[i].push_back(std::move(rec));
        }
      } catch (const std::exception& e) {
        for (Method m : job.methods) {
          ResultsRecord rec;
          rec.dataset = plan.dataset_name;
          rec.method = method_name(m);
          rec.split_id = ratio_split_id(job.ratio);
          rec.seed = job.seed;
          rec.metric = plan.cfg.metric;
          rec.error = e.what();
          slots[i].push_back(std::move(rec));
        }
      }
    }
  };
  size_t n_threads = plan.threads != 0 ? plan.threads
                                       : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, jobs.size() == 0 ? size_t{1} : jobs.size());
  std::vector<std::thread> pool;
  for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<ResultsRecord> fresh;
  for (auto& s : slots)
    for (auto& r : s) fresh.push_back(std::move(r));
  if (!plan.results_path.empty()) append_records(plan.results_path, fresh);
  return fresh;
}

struct SweepSummary {
  // (method, split_id) -> mean, count, stddev
  struct Stat {
    double mean = 0.0, stddev = 0.0;
    size_t count = 0;
  };
  std::map<std::string, Stat> by_cell;  // key "method|split"

  static SweepSummary from(const std::vector<ResultsRecord>& recs) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : recs)
      if (r.error.empty()) values[r.method + "|" + r.split_id].push_back(r.value);
    SweepSummary s;
    for (auto& [k, vs] : values) {
      Stat st;
      st.count = vs.size();
      for (double v : vs) st.mean += v;
      st.mean /= static_cast<double>(vs.size());
      for (double v : vs) st.stddev += (v - st.mean) * (v - st.mean);
      st.stddev = vs.size() > 1 ? std::sqrt(st.stddev / static_cast<double>(vs.size() - 1)) : 0.0;
      s.by_cell[k] = st;
    }
    return s;
  }

  double mean_of(const std::string& method, const std::string& split) const {
    auto it = by_cell.find(method + "|" + split);
    if (it == by_cell.end()) throw DataError("summary: missing cell " + method + "|" + split);
    return it->second.mean;
  }
};

// ---------------------------------------------------------------------------
// Chronological protocol (stream / CTR shape)
// ---------------------------------------------------------------------------

struct ChronoCell {
  FeatureVocabulary vocab;
  size_t d_train = 0;
  size_t d_eff = 0;
  std::vector<std::pair<size_t, size_t>> raw_blocks;
  size_t n_classes = 0;
  EncodedMatrix train_vocab;                 // fold 1, vocabulary columns
  EncodedMatrix val_full;                    // fold 2, expansion allowed
  std::vector<EncodedMatrix> test_full;      // folds 3..k
  std::vector<EncodedMatrix> test_vocab;     // same rows, vocabulary columns only
};

inline ChronoCell build_chrono_cell(const RawTable& table, const RawSchema& schema,
                                    size_t fold_count = 10) {
  ChronologicalSplit split = split_chronological(table.rows.size(), fold_count);
  auto fold_rows = [&](size_t f) {
    std::vector<size_t> rs;
    for (size_t r = split.folds[f].first; r < split.folds[f].second; ++r) rs.push_back(r);
    return rs;
  };

  ChronoCell cell;
  auto train_rows = fold_rows(0);
  cell.vocab = FeatureVocabulary::build(table, schema, train_rows);
  cell.d_train = cell.vocab.total();
  cell.n_classes = cell.vocab.n_classes();
  for (const auto& b : cell.vocab.blocks())
    cell.raw_blocks.emplace_back(b.offset, b.size);

  cell.train_vocab = encode_rows(table, schema, cell.vocab, train_rows, false);
  cell.val_full = encode_rows(table, schema, cell.vocab, fold_rows(1), true);
  for (size_t f = 2; f < fold_count; ++f)
    cell.test_full.push_back(encode_rows(table, schema, cell.vocab, fold_rows(f), true));
  cell.d_eff = std::max(cell.d_train, cell.val_full.cols);
  for (const auto& m : cell.test_full) cell.d_eff = std::max(cell.d_eff, m.cols);

  std::vector<uint8_t> vocab_cols(cell.d_eff, 0);
  for (size_t j = 0; j < cell.d_train; ++j) vocab_cols[j] = 1;
  for (auto& m : cell.test_full) {
    m.cols = cell.d_eff;
    cell.test_vocab.push_back(column_filter(m, vocab_cols));
  }
  cell.val_full.cols = cell.d_eff;
  cell.train_vocab.cols = cell.d_train;
  return cell;
}

// Distinct features appearing in a fold's rows, split into seen/new.
inline std::pair<size_t, size_t> fold_feature_counts(const EncodedMatrix& fold,
                                                     size_t d_train) {
  std::set<size_t> distinct;
  for (const auto& r : fold.row_indices) distinct.insert(r.begin(), r.end());
  size_t seen = 0, fresh = 0;
  for (size_t j : distinct) (j < d_train ? seen : fresh)++;
  return {seen, fresh};
}

}  // namespace fate
