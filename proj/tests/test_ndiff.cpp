#include <cmath>
#include <vector>

#include "doctest.h"
#include "fate/autodiff.hpp"

using namespace fate;

namespace {

Tensor random_tensor(size_t r, size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform_in(lo, hi);
  return t;
}

SparsePtr random_sparse(size_t r, size_t c, double density, Rng& rng,
                        bool unit_weights = false) {
  auto s = std::make_shared<SparseMat>();
  s->rows = r;
  s->cols = c;
  s->row_ptr.push_back(0);
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) {
      if (rng.uniform() < density) {
        s->col.push_back(j);
        s->val.push_back(unit_weights ? 1.0 : rng.uniform_in(-1.0, 1.0));
      }
    }
    s->row_ptr.push_back(s->col.size());
  }
  return s;
}

}  // namespace

TEST_CASE("identity matmul chain returns input") {
  Rng rng(7);
  Param x(random_tensor(3, 4, rng));
  Tensor eye(4, 4);
  for (size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  Tape tape;
  auto out = tape.matmul(tape.param(x), tape.input(eye));
  CHECK(max_abs_diff(tape.value(out), x.value) == 0.0);
}

TEST_CASE("sigmoid(0) = 0.5 and softmax of equal logits is uniform") {
  Tape tape;
  auto z = tape.input(Tensor(1, 1, 0.0));
  CHECK(tape.value(tape.sigmoid(z))(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  auto ones = tape.input(Tensor(1, 3, 1.0));
  auto sm = tape.softmax_rows(ones);
  for (size_t j = 0; j < 3; ++j)
    CHECK(tape.value(sm)(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  Rng rng(11);
  Tape tape;
  auto x = tape.input(random_tensor(20, 7, rng, -30.0, 30.0));
  auto sm = tape.softmax_rows(x);
  for (size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < 7; ++j) s += tape.value(sm)(i, j);
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("cross-entropy-with-logits equals -log softmax[target]") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor(6, 5, rng, -4.0, 4.0);
    std::vector<size_t> labels(6);
    for (auto& l : labels) l = rng.index(5);
    Tape tape;
    auto ln = tape.input(logits);
    auto loss = tape.ce_with_logits(ln, labels);
    auto sm = tape.softmax_rows(ln);
    double expect = 0.0;
    for (size_t i = 0; i < 6; ++i) expect += -std::log(tape.value(sm)(i, labels[i]));
    expect /= 6.0;
    CHECK(std::fabs(tape.value(loss)(0, 0) - expect) < 1e-12);
  }
}

TEST_CASE("sparse-dense matmul equals dense matmul with densified matrix") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    auto sp = random_sparse(5, 7, 0.4, rng);
    Tensor b = random_tensor(7, 3, rng);
    Tape tape;
    auto bn = tape.input(b);
    auto sparse_out = tape.spmm(sp, bn);
    auto dense_out = tape.matmul(tape.input(sp->to_dense()), bn);
    CHECK(max_abs_diff(tape.value(sparse_out), tape.value(dense_out)) == 0.0);
  }
}

TEST_CASE("loss = sum of entries gives all-ones gradient; half squared norm gives W") {
  Rng rng(19);
  Param w(random_tensor(3, 4, rng));
  {
    w.zero_grad();
    Tape tape;
    tape.backward(tape.sum_all(tape.param(w)));
    for (size_t i = 0; i < w.grad.size(); ++i) CHECK(w.grad.data()[i] == 1.0);
  }
  {
    w.zero_grad();
    Tape tape;
    auto wn = tape.param(w);
    tape.backward(tape.scale(tape.sum_all(tape.mul(wn, wn)), 0.5));
    CHECK(max_abs_diff(w.grad, w.value) < 1e-14);
  }
}

TEST_CASE("sgd_step arithmetic") {
  Param p(Tensor(1, 1, 1.0));
  p.grad(0, 0) = 2.0;
  sgd_step(p, 0.5);
  CHECK(p.value(0, 0) == 0.0);

  // alpha = 0 leaves parameters unchanged
  sgd_step(p, 0.0);
  CHECK(p.value(0, 0) == 0.0);

  // one step on the scalar quadratic (p-3)^2/2 from p=0 with alpha=0.1
  Param q(Tensor(1, 1, 0.0));
  q.grad(0, 0) = q.value(0, 0) - 3.0;
  sgd_step(q, 0.1);
  CHECK(q.value(0, 0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("gradient accumulation across backward passes sums") {
  Rng rng(23);
  Param w(random_tensor(4, 3, rng));
  Tensor a = random_tensor(4, 3, rng);
  Tensor b = random_tensor(4, 3, rng);

  w.zero_grad();
  {
    Tape tape;
    auto wn = tape.param(w);
    tape.backward(tape.sum_all(tape.mul(wn, tape.input(a))));
  }
  {
    Tape tape;
    auto wn = tape.param(w);
    tape.backward(tape.sum_all(tape.mul(wn, tape.input(b))));
  }
  Tensor two_pass = w.grad;

  w.zero_grad();
  {
    Tape tape;
    auto wn = tape.param(w);
    auto l = tape.add(tape.sum_all(tape.mul(wn, tape.input(a))),
                      tape.sum_all(tape.mul(wn, tape.input(b))));
    tape.backward(l);
  }
  CHECK(max_abs_diff(two_pass, w.grad) < 1e-12);
}

TEST_CASE("finite-difference check per primitive") {
  Rng rng(29);

  auto check = [&](const char* name, auto build, std::vector<Param*> params,
                   double tol = 1e-4) {
    auto rep = grad_check(build, params, 1e-5, tol);
    INFO(name << " max_rel_err=" << rep.max_rel_err);
    CHECK(rep.pass);
  };

  Param a(random_tensor(3, 4, rng));
  Param b(random_tensor(4, 5, rng));
  check("matmul", [&](Tape& t) { return t.sum_all(t.matmul(t.param(a), t.param(b))); },
        {&a, &b});

  Param c(random_tensor(3, 4, rng));
  check("mul+add+sub+scale", [&](Tape& t) {
    auto x = t.param(a);
    auto y = t.param(c);
    return t.sum_all(t.scale(t.add(t.mul(x, y), t.sub(x, y)), 0.7));
  }, {&a, &c});

  // relu checked away from the kink
  Param r(random_tensor(4, 4, rng));
  for (size_t i = 0; i < r.value.size(); ++i)
    if (std::fabs(r.value.data()[i]) < 1e-2)
      r.value.data()[i] = r.value.data()[i] < 0 ? -0.5 : 0.5;
  check("relu", [&](Tape& t) { return t.sum_all(t.relu(t.param(r))); }, {&r});

  check("sigmoid", [&](Tape& t) { return t.sum_all(t.sigmoid(t.param(a))); }, {&a});
  check("softmax", [&](Tape& t) {
    auto sm = t.softmax_rows(t.param(a));
    return t.sum_all(t.mul(sm, sm));
  }, {&a});

  Param logits(random_tensor(5, 5, rng, -2.0, 2.0));
  std::vector<size_t> labels{0, 2, 4, 1, 3};
  check("ce_with_logits", [&](Tape& t) {
    return t.ce_with_logits(t.param(logits), labels);
  }, {&logits});

  Param blogits(random_tensor(6, 1, rng, -2.0, 2.0));
  std::vector<double> targets{1, 0, 1, 1, 0, 0};
  check("bce_with_logits", [&](Tape& t) {
    return t.bce_with_logits(t.param(blogits), targets);
  }, {&blogits});

  check("mean_rows", [&](Tape& t) {
    auto m = t.mean_rows(t.param(a));
    return t.sum_all(t.mul(m, m));
  }, {&a});

  check("row_sums", [&](Tape& t) {
    auto m = t.row_sums(t.param(a));
    return t.sum_all(t.mul(m, m));
  }, {&a});

  auto sp = random_sparse(6, 3, 0.5, rng);
  check("spmm", [&](Tape& t) {
    auto out = t.spmm(sp, t.param(a));
    return t.sum_all(t.mul(out, out));
  }, {&a});

  check("gather_sum", [&](Tape& t) {
    auto z = t.gather_sum(t.param(a), {0, 2, 2});
    return t.sum_all(t.mul(z, z));
  }, {&a});

  std::vector<double> scales{0.5, -1.5, 2.0};
  check("row_scale", [&](Tape& t) {
    return t.sum_all(t.row_scale(t.param(a), scales));
  }, {&a});

  Param bias(random_tensor(1, 4, rng));
  check("add_bias", [&](Tape& t) {
    auto out = t.add_bias(t.param(a), t.param(bias));
    return t.sum_all(t.mul(out, out));
  }, {&a, &bias});

  check("dropout", [&](Tape& t) {
    Rng drop_rng(99);  // same mask every evaluation
    auto out = t.dropout(t.param(a), 0.4, drop_rng, true);
    return t.sum_all(t.mul(out, out));
  }, {&a});

  Param gamma(random_tensor(1, 4, rng, 0.5, 1.5));
  Param beta(random_tensor(1, 4, rng));
  check("batchnorm_train", [&](Tape& t) {
    BnStats stats(4);
    auto out = t.batchnorm(t.param(a), t.param(gamma), t.param(beta), stats, true);
    return t.sum_all(t.mul(out, out));
  }, {&a, &gamma, &beta}, 2e-4);

  BnStats fixed_stats(4);
  for (size_t j = 0; j < 4; ++j) {
    fixed_stats.running_mean(0, j) = 0.1 * static_cast<double>(j);
    fixed_stats.running_var(0, j) = 0.5 + 0.2 * static_cast<double>(j);
  }
  check("batchnorm_eval", [&](Tape& t) {
    BnStats stats = fixed_stats;
    auto out = t.batchnorm(t.param(a), t.param(gamma), t.param(beta), stats, false);
    return t.sum_all(t.mul(out, out));
  }, {&a, &gamma, &beta});

  std::vector<uint8_t> mask{1, 0, 1};
  check("zero_rows", [&](Tape& t) {
    auto out = t.zero_rows(t.param(a), mask);
    return t.sum_all(t.mul(out, out));
  }, {&a});

  check("merge_rows", [&](Tape& t) {
    auto out = t.merge_rows(t.param(a), t.param(c), mask);
    return t.sum_all(t.mul(out, out));
  }, {&a, &c});

  check("scatter_rows", [&](Tape& t) {
    auto out = t.scatter_rows(t.param(a), {2, -1, 0, 1, -1});
    return t.sum_all(t.mul(out, out));
  }, {&a});

  check("select_rows", [&](Tape& t) {
    auto out = t.select_rows(t.param(a), {1, 1, 2});
    return t.sum_all(t.mul(out, out));
  }, {&a});
}

TEST_CASE("grad_check reports near machine precision for linear maps") {
  Rng rng(31);
  Param a(random_tensor(3, 3, rng));
  auto rep = grad_check(
      [&](Tape& t) { return t.sum_all(t.scale(t.param(a), 2.0)); }, {&a}, 1e-5, 1e-9);
  CHECK(rep.pass);
}

TEST_CASE("grad_check sigmoid at random points below 1e-6") {
  Rng rng(37);
  Param a(random_tensor(4, 4, rng, -2.0, 2.0));
  auto rep = grad_check(
      [&](Tape& t) { return t.sum_all(t.sigmoid(t.param(a))); }, {&a}, 1e-5, 1e-6);
  CHECK(rep.pass);
}

TEST_CASE("grad_check cross-entropy 5 classes below 1e-5") {
  Rng rng(41);
  Param logits(random_tensor(4, 5, rng, -2.0, 2.0));
  std::vector<size_t> labels{3, 0, 1, 4};
  auto rep = grad_check(
      [&](Tape& t) { return t.ce_with_logits(t.param(logits), labels); },
      {&logits}, 1e-5, 1e-5);
  CHECK(rep.pass);
}

TEST_CASE("dropout eval mode is identity; train mode preserves expectation") {
  Rng rng(43);
  Tensor x = random_tensor(5, 5, rng, 0.5, 1.5);
  {
    Tape tape;
    Rng drng(1);
    auto out = tape.dropout(tape.input(x), 0.5, drng, false);
    CHECK(max_abs_diff(tape.value(out), x) == 0.0);
  }
  // mean over 10000 masks of a single unit entry: expectation 1, sigma of the
  // mean = 1/sqrt(10000) for p = 0.5 (mask value is Bernoulli * 2)
  Rng drng(5);
  double sum = 0.0;
  const int trials = 10000;
  Tensor one(1, 1, 1.0);
  for (int i = 0; i < trials; ++i) {
    Tape tape;
    sum += tape.value(tape.dropout(tape.input(one), 0.5, drng, true))(0, 0);
  }
  double mean = sum / trials;
  CHECK(std::fabs(mean - 1.0) < 3.0 / std::sqrt(static_cast<double>(trials)));
}

TEST_CASE("non-finite intermediate is surfaced immediately") {
  Tape tape;
  auto x = tape.input(Tensor(1, 1, 1e308));
  CHECK_THROWS_AS(tape.add(x, x), NumericError);
}

TEST_CASE("shape mismatch and backward-before-forward are errors") {
  Tape tape;
  auto a = tape.input(Tensor(2, 3, 1.0));
  auto b = tape.input(Tensor(2, 3, 1.0));
  CHECK_THROWS_AS(tape.matmul(a, b), NumericError);
  Tape empty;
  CHECK_THROWS_AS(empty.backward(0), NumericError);
}

TEST_CASE("batchnorm updates running statistics with momentum 0.1") {
  Tape tape;
  Tensor x(4, 1);
  x(0, 0) = 1.0; x(1, 0) = 2.0; x(2, 0) = 3.0; x(3, 0) = 4.0;
  Param gamma(Tensor(1, 1, 1.0)), beta(Tensor(1, 1, 0.0));
  BnStats stats(1);
  tape.batchnorm(tape.input(x), tape.param(gamma), tape.param(beta), stats, true);
  CHECK(stats.running_mean(0, 0) == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
  CHECK(stats.running_var(0, 0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.25));
}
