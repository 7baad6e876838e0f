#include <cmath>
#include <set>

#include "doctest.h"
#include "fate/train.hpp"

using namespace fate;

namespace {

ModelState make_state(size_t d, size_t h, size_t layers, size_t n_classes,
                      uint64_t seed, GnnFlavor flavor = GnnFlavor::gcn) {
  BackboneConfig b;
  b.embed_dim = h;
  b.classifier_hidden = {h, h};
  b.n_classes = n_classes;
  GnnConfig g;
  g.layers = layers;
  g.flavor = flavor;
  g.width = h;
  Rng rng(seed);
  return ModelState::init(d, b, g, rng);
}

EncodedMatrix random_rows(size_t n, size_t d, double density, size_t n_classes,
                          Rng& rng) {
  EncodedMatrix m;
  m.cols = d;
  for (size_t i = 0; i < n; ++i) {
    std::vector<size_t> row;
    for (size_t j = 0; j < d; ++j)
      if (rng.uniform() < density) row.push_back(j);
    if (row.empty()) row.push_back(rng.index(d));
    m.push_row(std::move(row), static_cast<int>(rng.index(n_classes)));
  }
  m.cols = d;
  return m;
}

bool states_equal(const ModelState& a, const ModelState& b, double tol) {
  auto eq = [tol](const Tensor& x, const Tensor& y) {
    return x.same_shape(y) && max_abs_diff(x, y) <= tol;
  };
  if (!eq(a.W.value, b.W.value)) return false;
  for (size_t i = 0; i < a.layer_w.size(); ++i)
    if (!eq(a.layer_w[i].value, b.layer_w[i].value)) return false;
  for (size_t i = 0; i < a.layer_b.size(); ++i)
    if (!eq(a.layer_b[i].value, b.layer_b[i].value)) return false;
  for (size_t i = 0; i < a.gnn_p.size(); ++i)
    if (!eq(a.gnn_p[i].value, b.gnn_p[i].value)) return false;
  return true;
}

}  // namespace

TEST_CASE("nfold_split partition laws") {
  Rng rng(1);
  std::vector<size_t> all(287);
  for (size_t i = 0; i < 287; ++i) all[i] = i;

  auto one = nfold_split(all, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 287);

  auto folds = nfold_split(all, 5, rng);
  std::multiset<size_t> sizes;
  std::set<size_t> seen;
  for (const auto& f : folds) {
    sizes.insert(f.size());
    for (size_t j : f) CHECK(seen.insert(j).second);  // disjoint
  }
  CHECK(seen.size() == 287);
  CHECK(sizes == std::multiset<size_t>{57, 57, 57, 58, 58});

  CHECK_THROWS_AS(nfold_split(std::vector<size_t>{1, 2}, 3, rng), ConfigError);

  // fresh shuffle: different seeds give different splits
  size_t distinct = 0;
  auto ref = nfold_split(all, 5, rng);
  for (uint64_t s = 0; s < 10; ++s) {
    Rng r2(s + 100);
    if (nfold_split(all, 5, r2) != ref) ++distinct;
  }
  CHECK(distinct >= 9);
}

TEST_CASE("nfold partition law over 1000 random shapes") {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const size_t f = 1 + rng.index(300);
    const size_t n = 1 + rng.index(f);
    std::vector<size_t> feats(f);
    for (size_t i = 0; i < f; ++i) feats[i] = i * 2;  // arbitrary ids
    auto folds = nfold_split(feats, n, rng);
    REQUIRE(folds.size() == n);
    std::set<size_t> seen;
    size_t mn = f, mx = 0;
    for (const auto& fold : folds) {
      mn = std::min(mn, fold.size());
      mx = std::max(mx, fold.size());
      for (size_t j : fold) CHECK(seen.insert(j).second);
    }
    CHECK(seen.size() == f);
    CHECK(mx - mn <= 1);
  }
}

TEST_CASE("kshot_sample block unions and bounds") {
  Rng rng(3);
  std::vector<std::pair<size_t, size_t>> blocks{{0, 2}, {2, 3}, {5, 4}};

  // k = d covers everything
  auto all = kshot_sample(blocks, 3, rng);
  CHECK(all.feature_ids.size() == 9);

  CHECK_THROWS_AS(kshot_sample(blocks, 4, rng), ConfigError);

  // raw features {0, 2} induce 2 + 4 = 6 features
  for (int t = 0; t < 200; ++t) {
    auto s = kshot_sample(blocks, 2, rng);
    std::set<size_t> raws(s.raw_ids.begin(), s.raw_ids.end());
    if (raws == std::set<size_t>{0, 2}) {
      CHECK(s.feature_ids.size() == 6);
      CHECK(s.feature_ids == std::vector<size_t>{0, 1, 5, 6, 7, 8});
    }
  }
}

TEST_CASE("kshot_sample is uniform over raw features") {
  Rng rng(4);
  std::vector<std::pair<size_t, size_t>> blocks;
  for (size_t m = 0; m < 10; ++m) blocks.emplace_back(m, 1);
  std::vector<size_t> hits(10, 0);
  const int draws = 50000;
  for (int t = 0; t < draws; ++t) {
    auto s = kshot_sample(blocks, 3, rng);
    for (size_t m : s.raw_ids) hits[m]++;
  }
  for (size_t m = 0; m < 10; ++m) {
    double freq = static_cast<double>(hits[m]) / draws;
    CHECK(std::fabs(freq - 0.3) < 0.01);
  }
}

TEST_CASE("minibatch_partition shapes and determinism") {
  Rng a(5), b(5);
  auto one = minibatch_partition(7, 100, a);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 7);

  auto batches = minibatch_partition(10, 3, a);
  REQUIRE(batches.size() == 4);
  CHECK(batches[0].size() == 3);
  CHECK(batches[3].size() == 1);
  std::set<size_t> seen;
  for (const auto& bt : batches)
    for (size_t r : bt) CHECK(seen.insert(r).second);
  CHECK(seen.size() == 10);

  minibatch_partition(7, 100, b);
  auto batches_b = minibatch_partition(10, 3, b);
  CHECK(batches == batches_b);
}

TEST_CASE("zero learning rates leave the state unchanged, losses finite") {
  Rng data_rng(6);
  EncodedMatrix batch = random_rows(12, 8, 0.5, 3, data_rng);
  TrainTask task;
  task.x_train = &batch;
  task.n_features = 8;
  for (size_t j = 0; j < 8; ++j) task.feature_set.push_back(j);
  TrainConfig cfg;
  cfg.lr_backbone = 0.0;
  cfg.lr_gnn = 0.0;
  cfg.rho = 0.25;
  cfg.n = 4;

  auto state = make_state(8, 4, 2, 3, 7);
  auto before = state;
  Rng rng(9);
  auto masks = nfold_split(task.feature_set, 4, rng);
  auto losses = self_supervised_iteration(batch, state, task, cfg, masks, rng);
  REQUIRE(losses.size() == 4);
  for (double l : losses) CHECK(std::isfinite(l));
  CHECK(states_equal(state, before, 0.0));

  // inductive too
  task.raw_blocks = {{0, 2}, {2, 2}, {4, 2}, {6, 2}};
  cfg.k = 2;
  auto state2 = make_state(8, 4, 2, 3, 7);
  auto before2 = state2;
  Rng rng2(9);
  auto losses2 = inductive_iteration(batch, state2, task, cfg, rng2);
  for (double l : losses2) CHECK(std::isfinite(l));
  CHECK(states_equal(state2, before2, 0.0));
}

TEST_CASE("omega frozen at zero reduces to a backbone step on the masked model") {
  Rng data_rng(8);
  EncodedMatrix batch = random_rows(10, 6, 0.5, 2, data_rng);
  TrainTask task;
  task.x_train = &batch;
  task.n_features = 6;
  for (size_t j = 0; j < 6; ++j) task.feature_set.push_back(j);

  TrainConfig cfg;
  cfg.n = 1;
  cfg.rho = 0.0;           // keep the replay free of rng coupling
  cfg.lr_backbone = 0.05;
  cfg.lr_gnn = 0.0;        // omega frozen

  auto state = make_state(6, 4, 2, 2, 11);
  for (auto& p : state.gnn_p) p.value.fill(0.0);
  auto replay = state;

  std::vector<std::vector<size_t>> masks{{1, 4}};
  Rng rng(13);
  self_supervised_iteration(batch, state, task, cfg, masks, rng);

  // plain masked-embedding model: zero the masked rows structurally
  {
    for (auto* p : replay.theta()) p->zero_grad();
    Tape tape;
    Rng r0(0);
    auto wn = tape.param(replay.W);
    auto weff = tape.zero_rows(wn, {0, 1, 0, 0, 1, 0});
    auto x = incidence(batch, 6);
    auto z = tape.spmm(x, weff);
    auto logits = classifier_logits(tape, z, replay, true, r0);
    std::vector<size_t> labels(batch.labels.begin(), batch.labels.end());
    auto loss = tape.ce_with_logits(logits, labels);
    tape.backward(loss);
    for (auto* p : replay.theta()) sgd_step(*p, 0.05);
  }
  CHECK(states_equal(state, replay, 1e-12));
}

TEST_CASE("omega update equals one SGD step on the accumulated gradient") {
  Rng data_rng(10);
  EncodedMatrix batch = random_rows(14, 8, 0.5, 3, data_rng);
  TrainTask task;
  task.x_train = &batch;
  task.n_features = 8;
  for (size_t j = 0; j < 8; ++j) task.feature_set.push_back(j);

  TrainConfig cfg;
  cfg.n = 3;
  cfg.rho = 0.0;
  cfg.lr_backbone = 0.03;
  cfg.lr_gnn = 0.01;

  auto state = make_state(8, 4, 2, 3, 15);
  auto replay = state;

  Rng rng(17);
  auto masks = nfold_split(task.feature_set, 3, rng);
  Rng rng_run(19);
  self_supervised_iteration(batch, state, task, cfg, masks, rng_run);

  // replay: accumulate omega gradients along the realized theta trajectory,
  // then apply the single accumulated step by hand
  {
    BipartiteGraph g = from_matrix(batch, 8);
    std::vector<Tensor> omega_acc;
    for (auto& p : replay.gnn_p) omega_acc.emplace_back(p.value.rows(), p.value.cols());
    for (const auto& fold : masks) {
      std::vector<uint8_t> mask(8, 0);
      for (size_t j : fold) mask[j] = 1;
      for (auto* p : replay.all_params()) p->zero_grad();
      Tape tape;
      Rng r0(0);
      ForwardPlan plan;
      plan.rows = &batch;
      plan.graph = &g;
      plan.mode = ForwardMode::masked_set;
      plan.masked = &mask;
      plan.train = true;
      auto fwd = fate_forward(tape, plan, replay, r0);
      auto loss = fate_loss(tape, fwd, batch.labels, replay.backbone);
      tape.backward(loss);
      for (size_t i = 0; i < replay.gnn_p.size(); ++i)
        axpy(omega_acc[i], 1.0, replay.gnn_p[i].grad);
      for (auto* p : replay.theta()) sgd_step(*p, cfg.lr_backbone);
    }
    for (size_t i = 0; i < replay.gnn_p.size(); ++i)
      for (size_t j = 0; j < omega_acc[i].size(); ++j)
        replay.gnn_p[i].value.data()[j] -= cfg.lr_gnn * omega_acc[i].data()[j];
  }
  CHECK(states_equal(state, replay, 1e-12));
}

TEST_CASE("inductive degenerate case equals self-supervised with empty mask") {
  // k = d, rho = 0, n = 1, 0-layer GNN: the proxy is the whole batch and both
  // regimes reduce to the same plain backbone update
  Rng data_rng(12);
  EncodedMatrix batch = random_rows(9, 6, 0.6, 2, data_rng);
  TrainTask task;
  task.x_train = &batch;
  task.n_features = 6;
  for (size_t j = 0; j < 6; ++j) task.feature_set.push_back(j);
  task.raw_blocks = {{0, 3}, {3, 3}};

  TrainConfig cfg;
  cfg.n = 1;
  cfg.rho = 0.0;
  cfg.k = 2;  // = d
  cfg.lr_backbone = 0.05;
  cfg.lr_gnn = 0.02;

  auto a = make_state(6, 4, 0, 2, 21);
  auto b = a;
  Rng ra(23), rb(23);
  auto la = inductive_iteration(batch, a, task, cfg, ra);
  auto lb = self_supervised_iteration(batch, b, task, cfg, {{}}, rb);
  REQUIRE(la.size() == 1);
  REQUIRE(lb.size() == 1);
  CHECK(std::fabs(la[0] - lb[0]) < 1e-12);
  CHECK(states_equal(a, b, 1e-12));
}

TEST_CASE("proxy edge budget: at most B*k-blocks worth of nonzeros") {
  Rng data_rng(14);
  EncodedMatrix batch = random_rows(20, 12, 0.8, 2, data_rng);
  TrainTask task;
  task.raw_blocks = {{0, 3}, {3, 3}, {6, 3}, {9, 3}};
  Rng rng(25);
  auto s = kshot_sample(task.raw_blocks, 2, rng);
  auto proxy = column_submatrix(batch, s.feature_ids);
  CHECK(proxy.nnz() <= 20 * 2 * 3);
  for (const auto& row : proxy.row_indices) CHECK(row.size() <= 2 * 3);
}

TEST_CASE("fit: zero epochs returns the initialized state") {
  Rng data_rng(16);
  EncodedMatrix x = random_rows(10, 6, 0.5, 2, data_rng);
  EncodedMatrix v = random_rows(4, 6, 0.5, 2, data_rng);
  TrainTask task;
  task.x_train = &x;
  task.x_val = &v;
  task.n_features = 6;
  for (size_t j = 0; j < 6; ++j) task.feature_set.push_back(j);
  TrainConfig cfg;
  cfg.epochs = 0;
  auto state = make_state(6, 4, 2, 2, 31);
  auto before = state;
  auto result = fit(task, state, cfg);
  CHECK(result.log.empty());
  CHECK(states_equal(result.state, before, 0.0));
}

TEST_CASE("fit on a separable toy set drives the loss down") {
  // two classes keyed by disjoint features
  EncodedMatrix x;
  x.cols = 4;
  for (int r = 0; r < 4; ++r) {
    x.push_row({0, 1}, 0);
    x.push_row({2, 3}, 1);
  }
  EncodedMatrix v;
  v.cols = 4;
  v.push_row({0, 1}, 0);
  v.push_row({2, 3}, 1);

  TrainTask task;
  task.x_train = &x;
  task.x_val = &v;
  task.n_features = 4;
  task.feature_set = {0, 1, 2, 3};
  TrainConfig cfg;
  cfg.n = 2;
  cfg.rho = 0.2;
  cfg.epochs = 200;
  cfg.lr_backbone = 0.05;
  cfg.lr_gnn = 0.005;
  cfg.seed = 5;
  auto state = make_state(4, 4, 2, 2, 38);
  auto result = fit(task, state, cfg);
  REQUIRE(result.log.size() == 200);
  double first = 0.0, last = 0.0;
  for (double l : result.log.front().fold_losses) first += l;
  for (double l : result.log.back().fold_losses) last += l;
  CHECK(last < first);
  CHECK(result.best_metric < result.log.front().val_metric);
}

TEST_CASE("fit is deterministic: identical logs and parameters for one seed") {
  Rng data_rng(18);
  EncodedMatrix x = random_rows(20, 8, 0.5, 3, data_rng);
  EncodedMatrix v = random_rows(8, 8, 0.5, 3, data_rng);
  TrainTask task;
  task.x_train = &x;
  task.x_val = &v;
  task.n_features = 8;
  for (size_t j = 0; j < 8; ++j) task.feature_set.push_back(j);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.n = 3;
  cfg.seed = 77;

  auto r1 = fit(task, make_state(8, 4, 2, 3, 41), cfg);
  auto r2 = fit(task, make_state(8, 4, 2, 3, 41), cfg);
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t e = 0; e < r1.log.size(); ++e) {
    CHECK(r1.log[e].fold_losses == r2.log[e].fold_losses);
    CHECK(r1.log[e].val_metric == r2.log[e].val_metric);
  }
  CHECK(states_equal(r1.state, r2.state, 0.0));
  CHECK(bitwise_equal(r1.state.W.value, r2.state.W.value));
}

TEST_CASE("fold coverage: every feature masked exactly once per iteration") {
  Rng rng(20);
  std::vector<size_t> feats{3, 1, 4, 1 + 5, 9, 2, 6};
  auto folds = nfold_split(feats, 3, rng);
  std::multiset<size_t> masked;
  for (const auto& f : folds) masked.insert(f.begin(), f.end());
  CHECK(masked == std::multiset<size_t>(feats.begin(), feats.end()));
}
