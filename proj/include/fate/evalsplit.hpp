#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fate/common.hpp"
#include "fate/tensor.hpp"

namespace fate {

// Fraction of rows whose argmax matches the label; argmax ties break toward
// the lowest class index. A single-column input is read as P(class 1).
inline double accuracy(const Tensor& predictions, const std::vector<int>& labels) {
  if (predictions.rows() != labels.size() || labels.empty())
    throw DataError("accuracy: length mismatch");
  size_t correct = 0;
  for (size_t i = 0; i < predictions.rows(); ++i) {
    size_t arg = 0;
    if (predictions.cols() == 1) {
      arg = predictions(i, 0) > 0.5 ? 1 : 0;
    } else {
      for (size_t j = 1; j < predictions.cols(); ++j)
        if (predictions(i, j) > predictions(i, arg)) arg = j;
    }
    if (static_cast<int>(arg) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Probability that a random positive outranks a random negative, ties counted
// one half. Midrank formulation; exactly equals the pairwise count.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw DataError("roc_auc: length mismatch");
  size_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: single-class input");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based midrank
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += midrank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

// Mean negative log-probability of the true class, probabilities clipped at
// 1e-12. Single-column predictions are treated as binary P(class 1).
inline double logloss(const Tensor& predictions, const std::vector<int>& labels) {
  if (predictions.rows() != labels.size() || labels.empty())
    throw DataError("logloss: length mismatch");
  double total = 0.0;
  for (size_t i = 0; i < predictions.rows(); ++i) {
    double p;
    if (predictions.cols() == 1) {
      p = labels[i] ? predictions(i, 0) : 1.0 - predictions(i, 0);
    } else {
      p = predictions(i, static_cast<size_t>(labels[i]));
    }
    total += -std::log(std::max(p, 1e-12));
  }
  return total / static_cast<double>(labels.size());
}

enum class SplitProtocol { random, chronological };

struct SplitSpec {
  SplitProtocol protocol = SplitProtocol::random;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double observed_ratio = 0.5;
  size_t fold_count = 10;
  uint64_t seed = 0;

  void validate() const {
    if (train_fraction <= 0 || val_fraction <= 0 ||
        train_fraction + val_fraction >= 1.0)
      throw ConfigError("split: fractions must be positive and sum below 1");
    if (observed_ratio <= 0.0 || observed_ratio > 1.0)
      throw ConfigError("split: observed_ratio must be in (0,1]");
    if (fold_count < 2) throw ConfigError("split: fold_count must be >= 2");
  }
};

struct RandomSplit {
  std::vector<size_t> train_rows, val_rows, test_rows;
  std::vector<uint8_t> observed;  // size D
  size_t observed_count = 0;
};

// Shuffle rows and cut 6:2:2 (train gets floor(0.6 N), val floor(0.2 N), test
// the remainder); mark floor(r * D) shuffled features observed.
inline RandomSplit split_random(size_t n_rows, size_t n_features, const SplitSpec& spec) {
  spec.validate();
  RandomSplit s;
  Rng rng(mix_seed(spec.seed, 0x5117ull));
  std::vector<size_t> rows(n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  rng.shuffle(rows);
  const size_t n_train = static_cast<size_t>(spec.train_fraction * static_cast<double>(n_rows));
  const size_t n_val = static_cast<size_t>(spec.val_fraction * static_cast<double>(n_rows));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n_rows)
    throw DataError("split_random: degenerate split sizes");
  s.train_rows.assign(rows.begin(), rows.begin() + static_cast<long>(n_train));
  s.val_rows.assign(rows.begin() + static_cast<long>(n_train),
                    rows.begin() + static_cast<long>(n_train + n_val));
  s.test_rows.assign(rows.begin() + static_cast<long>(n_train + n_val), rows.end());

  std::vector<size_t> feats(n_features);
  std::iota(feats.begin(), feats.end(), 0);
  rng.shuffle(feats);
  s.observed_count = static_cast<size_t>(spec.observed_ratio * static_cast<double>(n_features));
  s.observed.assign(n_features, 0);
  for (size_t k = 0; k < s.observed_count; ++k) s.observed[feats[k]] = 1;
  return s;
}

struct ChronologicalSplit {
  std::vector<std::pair<size_t, size_t>> folds;  // [begin, end) row ranges
  size_t train_fold = 0;
  size_t val_fold = 1;
};

// Ten (by default) equal contiguous folds in file order; the last fold absorbs
// the remainder. Fold 1 trains, fold 2 validates, the rest test.
inline ChronologicalSplit split_chronological(size_t n_rows, size_t fold_count = 10) {
  if (fold_count < 3) throw ConfigError("split_chronological: need >= 3 folds");
  if (n_rows < fold_count) throw DataError("split_chronological: fewer rows than folds");
  ChronologicalSplit s;
  const size_t base = n_rows / fold_count;
  size_t begin = 0;
  for (size_t f = 0; f < fold_count; ++f) {
    size_t end = (f + 1 == fold_count) ? n_rows : begin + base;
    s.folds.emplace_back(begin, end);
    begin = end;
  }
  return s;
}

enum class SelectPolicy { min_logloss, max_auc };

// Earliest epoch achieving the optimum of the validation series.
inline size_t select_model(const std::vector<double>& epoch_metric, SelectPolicy policy) {
  if (epoch_metric.empty()) throw DataError("select_model: empty log");
  size_t best = 0;
  for (size_t e = 1; e < epoch_metric.size(); ++e) {
    const bool better = policy == SelectPolicy::min_logloss
                            ? epoch_metric[e] < epoch_metric[best]
                            : epoch_metric[e] > epoch_metric[best];
    if (better) best = e;
  }
  return best;
}

}  // namespace fate
