#include <cmath>

#include "doctest.h"
#include "fate/baselines.hpp"
#include "fate/model.hpp"

using namespace fate;

namespace {

Tensor random_tensor(size_t r, size_t c, Rng& rng) {
  Tensor t(r, c);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform_in(-1.0, 1.0);
  return t;
}

EncodedMatrix random_rows(size_t n, size_t d, double density, Rng& rng) {
  EncodedMatrix m;
  m.cols = d;
  for (size_t i = 0; i < n; ++i) {
    std::vector<size_t> row;
    for (size_t j = 0; j < d; ++j)
      if (rng.uniform() < density) row.push_back(j);
    m.push_row(std::move(row), 0);
  }
  m.cols = d;
  return m;
}

}  // namespace

TEST_CASE("average_extrapolate") {
  Rng rng(1);

  // single observed feature: copies
  Tensor w1 = random_tensor(1, 5, rng);
  Tensor out = average_extrapolate(w1, 3);
  for (size_t i = 0; i < 3; ++i)
    for (size_t c = 0; c < 5; ++c) CHECK(out(i, c) == w1(0, c));

  // u and -u cancel
  Tensor w2(2, 4);
  for (size_t c = 0; c < 4; ++c) {
    w2(0, c) = rng.uniform_in(-1, 1);
    w2(1, c) = -w2(0, c);
  }
  Tensor out2 = average_extrapolate(w2, 2);
  for (size_t i = 0; i < out2.size(); ++i) CHECK(std::fabs(out2.data()[i]) < 1e-15);

  // 7 random rows equal the explicit column mean
  Tensor w3 = random_tensor(7, 6, rng);
  Tensor out3 = average_extrapolate(w3, 1);
  for (size_t c = 0; c < 6; ++c) {
    double mean = 0.0;
    for (size_t r = 0; r < 7; ++r) mean += w3(r, c);
    mean /= 7.0;
    CHECK(std::fabs(out3(0, c) - mean) < 1e-12);
  }

  CHECK_THROWS_AS(average_extrapolate(Tensor(0, 4), 2), DataError);
}

TEST_CASE("pooling: new feature sharing all instances with one observed feature") {
  // feature 2 (new) co-occurs with observed feature 0 only, in every instance
  EncodedMatrix m;
  m.cols = 3;
  m.push_row({0, 2}, 0);
  m.push_row({0, 2}, 0);
  auto g = from_matrix(m, 3);
  Rng rng(2);
  Tensor w = random_tensor(3, 4, rng);
  std::vector<uint8_t> observed{1, 1, 0};
  Tensor out = pooling_extrapolate(w, g, observed, {2});
  for (size_t c = 0; c < 4; ++c) CHECK(out(0, c) == doctest::Approx(w(0, c)).epsilon(1e-14));
}

TEST_CASE("pooling: isolated new feature gets the zero vector") {
  EncodedMatrix m;
  m.cols = 3;
  m.push_row({0, 1}, 0);
  auto g = from_matrix(m, 3);
  Rng rng(3);
  Tensor w = random_tensor(3, 4, rng);
  Tensor out = pooling_extrapolate(w, g, {1, 1, 0}, {2});
  for (size_t c = 0; c < 4; ++c) CHECK(out(0, c) == 0.0);
}

TEST_CASE("pooling matches the dense asymmetric two-hop closed form") {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const size_t n = 6, d = 5;
    EncodedMatrix m = random_rows(n, d, 0.5, rng);
    auto g = from_matrix(m, d);
    Tensor w = random_tensor(d, 3, rng);
    std::vector<uint8_t> observed(d, 0);
    for (size_t j = 0; j < 3; ++j) observed[j] = 1;
    std::vector<size_t> targets{3, 4};
    Tensor got = pooling_extrapolate(w, g, observed, targets);

    // dense oracle: D_out^-1 X^T D_in_obs^-1 X_obs W on the target block
    Tensor x(n, d);
    for (size_t i = 0; i < n; ++i)
      for (size_t j : m.row_indices[i]) x(i, j) = 1.0;
    for (size_t t = 0; t < targets.size(); ++t) {
      const size_t j = targets[t];
      double dout = 0.0;
      Tensor acc(1, 3);
      for (size_t i = 0; i < n; ++i) {
        if (x(i, j) == 0.0) continue;
        dout += 1.0;
        double din_obs = 0.0;
        for (size_t j2 = 0; j2 < 3; ++j2) din_obs += x(i, j2);
        if (din_obs == 0.0) continue;
        for (size_t c = 0; c < 3; ++c) {
          double s = 0.0;
          for (size_t j2 = 0; j2 < 3; ++j2) s += x(i, j2) * w(j2, c);
          acc(0, c) += s / din_obs;
        }
      }
      for (size_t c = 0; c < 3; ++c) {
        double expect = dout > 0.0 ? acc(0, c) / dout : 0.0;
        CHECK(std::fabs(got(t, c) - expect) < 1e-10);
      }
    }
  }
}

TEST_CASE("pooling ties to the model family: equals identity-transform propagation") {
  // On a fully observed graph the pooling rule is the same two-hop operator as
  // the plain-mean propagation with identity transforms and zero instance init.
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = 7, d = 6;
    EncodedMatrix m = random_rows(n, d, 0.5, rng);
    auto g = from_matrix(m, d);
    Tensor w = random_tensor(d, 3, rng);
    std::vector<uint8_t> observed(d, 1);
    std::vector<size_t> all(d);
    for (size_t j = 0; j < d; ++j) all[j] = j;
    Tensor pooled = pooling_extrapolate(w, g, observed, all);

    BackboneConfig b;
    b.embed_dim = 3;
    b.classifier_hidden = {3};
    b.n_classes = 2;
    GnnConfig gc;
    gc.layers = 2;
    gc.flavor = GnnFlavor::gcn;
    gc.width = 3;
    gc.self_loops = false;
    Rng srng(trial + 10);
    ModelState s = ModelState::init(d, b, gc, srng);
    for (auto& p : s.gnn_p) {
      p.value.fill(0.0);
      for (size_t r = 0; r < 3; ++r) p.value(r, r) = 1.0;
    }
    Tensor prop = gnn_propagate(w, g, s);
    CHECK(max_abs_diff(pooled, prop) < 1e-10);
  }
}

TEST_CASE("jaccard symmetry, range, self-similarity") {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    std::vector<size_t> a, b;
    for (size_t i = 0; i < 12; ++i) {
      if (rng.uniform() < 0.4) a.push_back(i);
      if (rng.uniform() < 0.4) b.push_back(i);
    }
    double sab = jaccard(a, b);
    CHECK(sab == jaccard(b, a));
    CHECK(sab >= 0.0);
    CHECK(sab <= 1.0);
    if (!a.empty()) CHECK(jaccard(a, a) == 1.0);
  }
  CHECK(jaccard({1, 2}, {1, 2}) == 1.0);
  CHECK(jaccard({1, 2}, {3, 4}) == 0.0);
  CHECK(jaccard({}, {}) == 0.0);
}

TEST_CASE("knn_extrapolate matches the exhaustive oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 12, d = 10;
    EncodedMatrix m = random_rows(n, d, 0.4, rng);
    auto g = from_matrix(m, d);
    Tensor w = random_tensor(d, 3, rng);
    std::vector<uint8_t> observed(d, 0);
    for (size_t j = 0; j < 10; ++j) observed[j] = j < 8 ? 1 : 0;  // 8 observed
    std::vector<size_t> targets{8, 9};
    Tensor got = knn_extrapolate(g, w, observed, targets, 0.2);

    // oracle: all-pairs similarities, top ceil(0.2*8) = 2, ties by lower id
    for (size_t t = 0; t < targets.size(); ++t) {
      std::vector<std::pair<double, size_t>> sims;
      for (size_t o = 0; o < 8; ++o)
        sims.emplace_back(jaccard(g.col_adj[targets[t]], g.col_adj[o]), o);
      std::sort(sims.begin(), sims.end(), [](auto& x, auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
      });
      for (size_t c = 0; c < 3; ++c) {
        double expect = (w(sims[0].second, c) + w(sims[1].second, c)) / 2.0;
        CHECK(std::fabs(got(t, c) - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("knn top-set rounding keeps at least one neighbor") {
  EncodedMatrix m;
  m.cols = 3;
  m.push_row({0, 2}, 0);
  auto g = from_matrix(m, 3);
  Tensor w(3, 2);
  w(0, 0) = 5.0;
  std::vector<uint8_t> observed{1, 1, 0};
  Tensor out = knn_extrapolate(g, w, observed, {2}, 0.2);  // ceil(0.4) = 1
  CHECK(out(0, 0) == 5.0);  // feature 0 shares the instance, feature 1 does not
}

TEST_CASE("extrapolation rules are deterministic") {
  Rng rng(8);
  EncodedMatrix m = random_rows(10, 6, 0.5, rng);
  auto g = from_matrix(m, 6);
  Tensor w = random_tensor(6, 4, rng);
  std::vector<uint8_t> observed{1, 1, 1, 1, 0, 0};
  std::vector<size_t> targets{4, 5};
  CHECK(bitwise_equal(pooling_extrapolate(w, g, observed, targets),
                      pooling_extrapolate(w, g, observed, targets)));
  CHECK(bitwise_equal(knn_extrapolate(g, w, observed, targets),
                      knn_extrapolate(g, w, observed, targets)));
  CHECK(bitwise_equal(average_extrapolate(w, 2), average_extrapolate(w, 2)));
}
