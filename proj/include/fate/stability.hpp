#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <vector>

#include "fate/common.hpp"
#include "fate/tensor.hpp"

namespace fate {

using BigInt = boost::multiprecision::cpp_int;

// Influence weights of the collapsed L-layer mean-pooling model:
// C_L = (X D_out^{-1} X^T D_in^{-1})^{floor(L/2)}, an N x N nonnegative
// matrix with C_0 = I. Zero-degree rows/columns contribute zero.
inline Tensor coefficients(const Tensor& x, size_t layers) {
  const size_t n = x.rows(), d = x.cols();
  std::vector<double> inv_din(n, 0.0), inv_dout(d, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (size_t j = 0; j < d; ++j) deg += x(i, j);
    if (deg > 0.0) inv_din[i] = 1.0 / deg;
  }
  for (size_t j = 0; j < d; ++j) {
    double deg = 0.0;
    for (size_t i = 0; i < n; ++i) deg += x(i, j);
    if (deg > 0.0) inv_dout[j] = 1.0 / deg;
  }
  // one hop pair: M = X D_out^{-1} X^T D_in^{-1}
  Tensor m(n, n);
  for (size_t i = 0; i < n; ++i)
    for (size_t i2 = 0; i2 < n; ++i2) {
      double acc = 0.0;
      for (size_t j = 0; j < d; ++j) acc += x(i, j) * inv_dout[j] * x(i2, j);
      m(i, i2) = acc * inv_din[i2];
    }
  Tensor c(n, n);
  for (size_t i = 0; i < n; ++i) c(i, i) = 1.0;
  for (size_t p = 0; p < layers / 2; ++p) c = matmul(c, m);
  return c;
}

// yhat = sigma(C_L X Psi), elementwise.
inline Tensor simplified_forward(const Tensor& x, const Tensor& psi, size_t layers) {
  if (psi.rows() != x.cols() || psi.cols() != 1)
    throw NumericError("simplified_forward: shape mismatch");
  Tensor u = matmul(matmul(coefficients(x, layers), x), psi);
  Tensor out(u.rows(), 1);
  for (size_t i = 0; i < u.rows(); ++i)
    out(i, 0) = 1.0 / (1.0 + std::exp(-u(i, 0)));
  return out;
}

inline BigInt binomial(size_t n, size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  BigInt num = 1;
  for (size_t i = 1; i <= k; ++i) {
    num *= static_cast<unsigned long>(n - k + i);
    num /= static_cast<unsigned long>(i);
  }
  return num;
}

// |S|: C(d,k) proxy feature subsets, times C(N,B) instance subsets when
// mini-batching is on. Exact arbitrary-precision count.
inline BigInt proxy_space_size(size_t d, size_t k, size_t n, size_t b,
                               bool with_batching) {
  if (k > d) throw ConfigError("proxy_space_size: k > d");
  if (with_batching && b > n) throw ConfigError("proxy_space_size: B > N");
  BigInt m = binomial(d, k);
  if (with_batching) m *= binomial(n, b);
  return m;
}

// Synthetic task for the gap probe: raw features i.i.d. uniform categorical,
// binary label from a fixed random linear rule on the one-hot vector,
// thresholded stochastically.
struct GapGenerator {
  size_t d = 12;
  size_t cardinality = 4;
  double rule_scale = 2.0;
  uint64_t rule_seed = 7;

  size_t total_features() const { return d * cardinality; }

  std::vector<double> rule() const {
    Rng rng(mix_seed(rule_seed, 0x9a9ull));
    std::vector<double> theta(total_features());
    for (auto& t : theta) t = rng.uniform_in(-rule_scale, rule_scale);
    return theta;
  }

  // Returns a dense 0-1 matrix and labels.
  std::pair<Tensor, std::vector<double>> sample(size_t n_rows, uint64_t seed) const {
    Rng rng(mix_seed(seed, 0xda7aull));
    const auto theta = rule();
    Tensor x(n_rows, total_features());
    std::vector<double> y(n_rows);
    for (size_t i = 0; i < n_rows; ++i) {
      double u = 0.0;
      for (size_t m = 0; m < d; ++m) {
        size_t v = rng.index(cardinality);
        x(i, m * cardinality + v) = 1.0;
        u += theta[m * cardinality + v];
      }
      double p = 1.0 / (1.0 + std::exp(-u / std::sqrt(static_cast<double>(d))));
      y[i] = rng.uniform() < p ? 1.0 : 0.0;
    }
    return {x, y};
  }
};

struct GapConfig {
  size_t d = 12;
  size_t batch = 32;
  size_t steps = 300;          // T
  size_t layers = 2;           // L of the simplified model
  size_t train_rows = 256;
  size_t heldout_rows = 256;
  size_t eval_draws = 200;     // Monte-Carlo sample of proxy sub-matrices
  double lr = 0.5;
  double loss_cap = 4.0;       // lambda of the bounded loss
  GapGenerator gen;
};

struct GapEstimate {
  size_t k = 0;
  uint64_t seed = 0;
  double empirical_risk = 0.0;
  double heldout_risk = 0.0;
  double gap = 0.0;
};

namespace detail {

// Dense column-subset view helpers for the probe.
inline Tensor take_rows_cols(const Tensor& x, const std::vector<size_t>& rows,
                             const std::vector<size_t>& cols) {
  Tensor out(rows.size(), cols.size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) out(i, j) = x(rows[i], cols[j]);
  return out;
}

inline double clipped_bce(double p, double y, double cap) {
  double l = -(y * std::log(std::max(p, 1e-300)) +
               (1.0 - y) * std::log(std::max(1.0 - p, 1e-300)));
  return std::min(l, cap);
}

}  // namespace detail

// Monte-Carlo probe of the expected generalization gap for a given k: train
// the collapsed model with T SGD steps on uniformly sampled proxy
// sub-matrices, then compare the clipped risk on fresh proxy draws from the
// training rows against the same estimator on held-out rows.
inline GapEstimate estimate_gap(const GapConfig& cfg, size_t k, uint64_t seed) {
  if (k < 1 || k > cfg.d) throw ConfigError("estimate_gap: k outside [1, d]");
  GapGenerator gen = cfg.gen;
  gen.d = cfg.d;
  auto [x_train, y_train] = gen.sample(cfg.train_rows, mix_seed(seed, 0x7e57ull));
  auto [x_held, y_held] = gen.sample(cfg.heldout_rows, mix_seed(seed, 0x8e1dull));

  const size_t dtot = gen.total_features();
  Tensor psi(dtot, 1, 0.0);
  Rng rng(mix_seed(seed, 0x90bull));

  auto feature_subset = [&](Rng& r) {
    auto raws = r.sample_without_replacement(cfg.d, k);
    std::sort(raws.begin(), raws.end());
    std::vector<size_t> cols;
    for (size_t m : raws)
      for (size_t v = 0; v < gen.cardinality; ++v) cols.push_back(m * gen.cardinality + v);
    return cols;
  };

  // T SGD updates, one uniformly sampled proxy sub-matrix each.
  for (size_t t = 0; t < cfg.steps; ++t) {
    auto rows = rng.sample_without_replacement(cfg.train_rows, cfg.batch);
    auto cols = feature_subset(rng);
    Tensor xs = detail::take_rows_cols(x_train, rows, cols);
    Tensor psis(cols.size(), 1);
    for (size_t j = 0; j < cols.size(); ++j) psis(j, 0) = psi(cols[j], 0);
    Tensor c = coefficients(xs, cfg.layers);
    Tensor cx = matmul(c, xs);
    Tensor u = matmul(cx, psis);
    // subgradient of the capped loss: zero where the cap binds
    Tensor g(u.rows(), 1);
    for (size_t i = 0; i < u.rows(); ++i) {
      double p = 1.0 / (1.0 + std::exp(-u(i, 0)));
      double y = y_train[rows[i]];
      double l = detail::clipped_bce(p, y, cfg.loss_cap);
      g(i, 0) = l < cfg.loss_cap ? (p - y) / static_cast<double>(u.rows()) : 0.0;
    }
    Tensor grad = matmul(transpose(cx), g);
    for (size_t j = 0; j < cols.size(); ++j)
      psi(cols[j], 0) -= cfg.lr * grad(j, 0);
  }

  auto risk = [&](const Tensor& x, const std::vector<double>& y, size_t n_rows,
                  Rng& r) {
    double total = 0.0;
    for (size_t e = 0; e < cfg.eval_draws; ++e) {
      auto rows = r.sample_without_replacement(n_rows, std::min(cfg.batch, n_rows));
      auto cols = feature_subset(r);
      Tensor xs = detail::take_rows_cols(x, rows, cols);
      Tensor psis(cols.size(), 1);
      for (size_t j = 0; j < cols.size(); ++j) psis(j, 0) = psi(cols[j], 0);
      Tensor p = simplified_forward(xs, psis, cfg.layers);
      double batch_loss = 0.0;
      for (size_t i = 0; i < p.rows(); ++i)
        batch_loss += detail::clipped_bce(p(i, 0), y[rows[i]], cfg.loss_cap);
      total += batch_loss / static_cast<double>(p.rows());
    }
    return total / static_cast<double>(cfg.eval_draws);
  };

  GapEstimate est;
  est.k = k;
  est.seed = seed;
  Rng emp_rng(mix_seed(seed, 0xe41ull));
  Rng held_rng(mix_seed(seed, 0x4e1dull));
  est.empirical_risk = risk(x_train, y_train, cfg.train_rows, emp_rng);
  est.heldout_risk = risk(x_held, y_held, cfg.heldout_rows, held_rng);
  est.gap = est.heldout_risk - est.empirical_risk;
  return est;
}

}  // namespace fate
