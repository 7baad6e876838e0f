#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fate/common.hpp"
#include "fate/tensor.hpp"

namespace fate {

// CSR sparse matrix with constant (non-trainable) weights. Backs both the
// multi-hot data matrix (unit weights) and the degree-normalized adjacency
// operators of the propagation layers.
struct SparseMat {
  size_t rows = 0, cols = 0;
  std::vector<size_t> row_ptr;  // rows + 1
  std::vector<size_t> col;
  std::vector<double> val;

  size_t nnz() const { return col.size(); }

  Tensor to_dense() const {
    Tensor d(rows, cols);
    for (size_t i = 0; i < rows; ++i)
      for (size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) d(i, col[e]) += val[e];
    return d;
  }
};

using SparsePtr = std::shared_ptr<const SparseMat>;

// Trainable tensor. Gradients accumulate here across backward passes until the
// owner clears them; the accumulated-loss update of the training loop relies
// on that.
struct Param {
  Tensor value;
  Tensor grad;

  Param() = default;
  explicit Param(Tensor v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

// Per-column batch-normalization running statistics (eval-mode inputs).
struct BnStats {
  Tensor running_mean;  // 1 x C
  Tensor running_var;   // 1 x C

  explicit BnStats(size_t c = 0)
      : running_mean(1, c, 0.0), running_var(1, c, 1.0) {}
};

using NodeId = size_t;

// Immediate-mode tape: every operation evaluates on recording (so recording
// order is a topological order) and stores what backward needs. backward()
// walks the nodes once in reverse and accumulates into Param::grad.
//
// Every primitive checks its output for non-finite values by folding a
// checksum into the writing loop and throws NumericError on the spot.
class Tape {
 public:
  static constexpr NodeId npos = static_cast<NodeId>(-1);

  NodeId input(Tensor v) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(v);
    return push(std::move(n), /*check=*/false);
  }

  NodeId param(Param& p) {
    Node n;
    n.op = Op::leaf;
    n.value = p.value;
    n.param = &p;
    return push(std::move(n), /*check=*/false);
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.rows()) throw NumericError("matmul: shape mismatch");
    Node n;
    n.op = Op::matmul;
    n.a = a;
    n.b = b;
    n.value = fate::matmul(A, B);
    return push(std::move(n));
  }

  NodeId spmm(SparsePtr s, NodeId b) {
    const Tensor& B = value(b);
    if (s->cols != B.rows()) throw NumericError("spmm: shape mismatch");
    Node n;
    n.op = Op::spmm;
    n.b = b;
    n.sparse = std::move(s);
    const SparseMat& S = *n.sparse;
    Tensor out(S.rows, B.cols());
    for (size_t i = 0; i < S.rows; ++i) {
      double* orow = out.row(i);
      for (size_t e = S.row_ptr[i]; e < S.row_ptr[i + 1]; ++e) {
        const double w = S.val[e];
        const double* brow = B.row(S.col[e]);
        for (size_t j = 0; j < B.cols(); ++j) orow[j] += w * brow[j];
      }
    }
    n.value = std::move(out);
    return push(std::move(n));
  }

  // Sum of the indexed rows of a (the embedding lookup + sum); 1 x cols.
  NodeId gather_sum(NodeId a, std::vector<size_t> rows) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::gather_sum;
    n.a = a;
    Tensor out(1, A.cols());
    for (size_t r : rows) {
      if (r >= A.rows()) throw NumericError("gather_sum: row index out of range");
      const double* ar = A.row(r);
      for (size_t j = 0; j < A.cols(); ++j) out(0, j) += ar[j];
    }
    n.idx = std::move(rows);
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId row_scale(NodeId a, std::vector<double> s) {
    const Tensor& A = value(a);
    if (s.size() != A.rows()) throw NumericError("row_scale: length mismatch");
    Node n;
    n.op = Op::row_scale;
    n.a = a;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.rows(); ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(i, j) = s[i] * A(i, j);
    n.vec = std::move(s);
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::mul, a, b); }

  NodeId scale(NodeId a, double c) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::scale;
    n.a = a;
    n.scalar = c;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.size(); ++i) out.data()[i] = c * A.data()[i];
    n.value = std::move(out);
    return push(std::move(n));
  }

  // a is N x C, bias is 1 x C, broadcast over rows.
  NodeId add_bias(NodeId a, NodeId bias) {
    const Tensor& A = value(a);
    const Tensor& B = value(bias);
    if (B.rows() != 1 || B.cols() != A.cols())
      throw NumericError("add_bias: bias shape mismatch");
    Node n;
    n.op = Op::add_bias;
    n.a = a;
    n.b = bias;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.rows(); ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(i, j) = A(i, j) + B(0, j);
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId relu(NodeId a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::relu;
    n.a = a;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.size(); ++i)
      out.data()[i] = A.data()[i] > 0.0 ? A.data()[i] : 0.0;
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId sigmoid(NodeId a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::sigmoid;
    n.a = a;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.size(); ++i) out.data()[i] = sigmoid_scalar(A.data()[i]);
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId softmax_rows(NodeId a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::softmax_rows;
    n.a = a;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.rows(); ++i) softmax_row(A.row(i), out.row(i), A.cols());
    n.value = std::move(out);
    return push(std::move(n));
  }

  // Mean over rows of (logsumexp(logits_i) - logits_i[label_i]); 1 x 1.
  NodeId ce_with_logits(NodeId logits, std::vector<size_t> labels) {
    const Tensor& A = value(logits);
    if (labels.size() != A.rows()) throw NumericError("ce_with_logits: label count");
    Node n;
    n.op = Op::ce_with_logits;
    n.a = logits;
    double total = 0.0;
    for (size_t i = 0; i < A.rows(); ++i) {
      if (labels[i] >= A.cols()) throw NumericError("ce_with_logits: label range");
      total += logsumexp_row(A.row(i), A.cols()) - A(i, labels[i]);
    }
    n.idx = std::move(labels);
    n.value = Tensor(1, 1, total / static_cast<double>(A.rows()));
    return push(std::move(n));
  }

  // Mean binary cross-entropy over an N x 1 logit column; targets in [0,1].
  NodeId bce_with_logits(NodeId logits, std::vector<double> targets) {
    const Tensor& A = value(logits);
    if (A.cols() != 1) throw NumericError("bce_with_logits: expects N x 1 logits");
    if (targets.size() != A.rows()) throw NumericError("bce_with_logits: target count");
    Node n;
    n.op = Op::bce_with_logits;
    n.a = logits;
    double total = 0.0;
    for (size_t i = 0; i < A.rows(); ++i) {
      double o = A(i, 0);
      total += std::max(o, 0.0) - o * targets[i] + std::log1p(std::exp(-std::fabs(o)));
    }
    n.vec = std::move(targets);
    n.value = Tensor(1, 1, total / static_cast<double>(A.rows()));
    return push(std::move(n));
  }

  NodeId mean_rows(NodeId a) {
    const Tensor& A = value(a);
    if (A.rows() == 0) throw NumericError("mean_rows: empty input");
    Node n;
    n.op = Op::mean_rows;
    n.a = a;
    Tensor out(1, A.cols());
    for (size_t i = 0; i < A.rows(); ++i)
      for (size_t j = 0; j < A.cols(); ++j) out(0, j) += A(i, j);
    for (size_t j = 0; j < A.cols(); ++j) out(0, j) /= static_cast<double>(A.rows());
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId row_sums(NodeId a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::row_sums;
    n.a = a;
    Tensor out(A.rows(), 1);
    for (size_t i = 0; i < A.rows(); ++i) {
      double s = 0.0;
      for (size_t j = 0; j < A.cols(); ++j) s += A(i, j);
      out(i, 0) = s;
    }
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId sum_all(NodeId a) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::sum_all;
    n.a = a;
    double s = 0.0;
    for (size_t i = 0; i < A.size(); ++i) s += A.data()[i];
    n.value = Tensor(1, 1, s);
    return push(std::move(n));
  }

  // Train mode: zero each entry with probability p and scale survivors by
  // 1/(1-p). Eval mode is the identity.
  NodeId dropout(NodeId a, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
    const Tensor& A = value(a);
    Node n;
    n.op = Op::dropout;
    n.a = a;
    Tensor out(A.rows(), A.cols());
    if (!train || p == 0.0) {
      out = A;
      n.vec.assign(A.size(), 1.0);
    } else {
      const double keep_scale = 1.0 / (1.0 - p);
      n.vec.resize(A.size());
      for (size_t i = 0; i < A.size(); ++i) {
        double m = rng.uniform() >= p ? keep_scale : 0.0;
        n.vec[i] = m;
        out.data()[i] = m * A.data()[i];
      }
    }
    n.value = std::move(out);
    return push(std::move(n));
  }

  // Per-column batch normalization. Train mode normalizes with batch
  // statistics (biased variance) and folds them into the running estimates;
  // eval mode normalizes with the running estimates.
  NodeId batchnorm(NodeId a, NodeId gamma, NodeId beta, BnStats& stats, bool train,
                   double eps = 1e-5, double momentum = 0.1) {
    const Tensor& A = value(a);
    const Tensor& G = value(gamma);
    const Tensor& B = value(beta);
    const size_t C = A.cols();
    if (G.rows() != 1 || G.cols() != C || B.rows() != 1 || B.cols() != C)
      throw NumericError("batchnorm: gamma/beta shape mismatch");
    if (stats.running_mean.cols() != C) throw NumericError("batchnorm: stats shape");
    Node n;
    n.op = Op::batchnorm;
    n.a = a;
    n.b = gamma;
    n.c = beta;
    n.train_mode = train;
    const size_t N = A.rows();
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    if (train) {
      if (N == 0) throw NumericError("batchnorm: empty batch in train mode");
      for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < C; ++j) mean[j] += A(i, j);
      for (size_t j = 0; j < C; ++j) mean[j] /= static_cast<double>(N);
      for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < C; ++j) {
          double d = A(i, j) - mean[j];
          var[j] += d * d;
        }
      for (size_t j = 0; j < C; ++j) var[j] /= static_cast<double>(N);
      for (size_t j = 0; j < C; ++j) {
        stats.running_mean(0, j) =
            (1.0 - momentum) * stats.running_mean(0, j) + momentum * mean[j];
        stats.running_var(0, j) =
            (1.0 - momentum) * stats.running_var(0, j) + momentum * var[j];
      }
    } else {
      for (size_t j = 0; j < C; ++j) {
        mean[j] = stats.running_mean(0, j);
        var[j] = stats.running_var(0, j);
      }
    }
    Tensor xhat(N, C);
    Tensor out(N, C);
    std::vector<double> inv_std(C);
    for (size_t j = 0; j < C; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    for (size_t i = 0; i < N; ++i)
      for (size_t j = 0; j < C; ++j) {
        xhat(i, j) = (A(i, j) - mean[j]) * inv_std[j];
        out(i, j) = G(0, j) * xhat(i, j) + B(0, j);
      }
    n.aux = std::move(xhat);
    n.vec = std::move(inv_std);
    n.value = std::move(out);
    return push(std::move(n));
  }

  // Copy with the flagged rows zeroed (functional fold mask).
  NodeId zero_rows(NodeId a, std::vector<uint8_t> mask) {
    const Tensor& A = value(a);
    if (mask.size() != A.rows()) throw NumericError("zero_rows: mask length");
    Node n;
    n.op = Op::zero_rows;
    n.a = a;
    Tensor out = A;
    for (size_t i = 0; i < A.rows(); ++i)
      if (mask[i])
        for (size_t j = 0; j < A.cols(); ++j) out(i, j) = 0.0;
    n.mask = std::move(mask);
    n.value = std::move(out);
    return push(std::move(n));
  }

  // Row i of the output comes from a where take_a[i], else from b.
  NodeId merge_rows(NodeId a, NodeId b, std::vector<uint8_t> take_a) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw NumericError("merge_rows: shape mismatch");
    if (take_a.size() != A.rows()) throw NumericError("merge_rows: mask length");
    Node n;
    n.op = Op::merge_rows;
    n.a = a;
    n.b = b;
    Tensor out(A.rows(), A.cols());
    for (size_t i = 0; i < A.rows(); ++i) {
      const double* src = take_a[i] ? A.row(i) : B.row(i);
      double* dst = out.row(i);
      for (size_t j = 0; j < A.cols(); ++j) dst[j] = src[j];
    }
    n.mask = std::move(take_a);
    n.value = std::move(out);
    return push(std::move(n));
  }

  // out has src_row.size() rows; row r copies src[src_row[r]] or is zero when
  // src_row[r] < 0. Builds the initial-state matrix over an expanded feature
  // space from the trained embedding table.
  NodeId scatter_rows(NodeId a, std::vector<long> src_row) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::scatter_rows;
    n.a = a;
    Tensor out(src_row.size(), A.cols());
    for (size_t r = 0; r < src_row.size(); ++r) {
      long s = src_row[r];
      if (s < 0) continue;
      if (static_cast<size_t>(s) >= A.rows())
        throw NumericError("scatter_rows: source row out of range");
      const double* ar = A.row(static_cast<size_t>(s));
      double* orow = out.row(r);
      for (size_t j = 0; j < A.cols(); ++j) orow[j] = ar[j];
    }
    n.idx_signed = std::move(src_row);
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId select_rows(NodeId a, std::vector<size_t> rows) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::select_rows;
    n.a = a;
    Tensor out(rows.size(), A.cols());
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= A.rows()) throw NumericError("select_rows: row out of range");
      const double* ar = A.row(rows[r]);
      double* orow = out.row(r);
      for (size_t j = 0; j < A.cols(); ++j) orow[j] = ar[j];
    }
    n.idx = std::move(rows);
    n.value = std::move(out);
    return push(std::move(n));
  }

  const Tensor& value(NodeId id) const {
    if (id >= nodes_.size()) throw NumericError("tape: bad node id");
    return nodes_[id].value;
  }

  size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar node; gradients accumulate into Param::grad of
  // every parameter leaf reachable from it.
  void backward(NodeId loss) {
    if (loss >= nodes_.size()) throw NumericError("backward: no such node (forward not run)");
    if (nodes_[loss].value.size() != 1) throw NumericError("backward: loss must be scalar");
    for (auto& n : nodes_) n.grad = Tensor();
    grad_of(loss) = Tensor(1, 1, 1.0);
    for (size_t id = loss + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      apply_backward(n);
      if (n.param != nullptr) axpy(n.param->grad, 1.0, n.grad);
    }
  }

 private:
  enum class Op {
    leaf, matmul, spmm, gather_sum, row_scale, add, sub, mul, scale, add_bias,
    relu, sigmoid, softmax_rows, ce_with_logits, bce_with_logits, mean_rows,
    row_sums, sum_all, dropout, batchnorm, zero_rows, merge_rows, scatter_rows,
    select_rows
  };

  struct Node {
    Tensor value;
    Tensor grad;
    Tensor aux;  // batchnorm xhat
    Op op = Op::leaf;
    NodeId a = npos, b = npos, c = npos;
    Param* param = nullptr;
    SparsePtr sparse;
    std::vector<double> vec;
    std::vector<size_t> idx;
    std::vector<long> idx_signed;
    std::vector<uint8_t> mask;
    double scalar = 0.0;
    bool train_mode = false;
  };

  static double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  }

  static void softmax_row(const double* in, double* out, size_t c) {
    double mx = in[0];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (size_t j = 0; j < c; ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (size_t j = 0; j < c; ++j) out[j] /= z;
  }

  static double logsumexp_row(const double* in, size_t c) {
    double mx = in[0];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (size_t j = 0; j < c; ++j) z += std::exp(in[j] - mx);
    return mx + std::log(z);
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw NumericError("elementwise op: shape mismatch");
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    Tensor out(A.rows(), A.cols());
    const double* ad = A.data();
    const double* bd = B.data();
    double* od = out.data();
    switch (op) {
      case Op::add: for (size_t i = 0; i < A.size(); ++i) od[i] = ad[i] + bd[i]; break;
      case Op::sub: for (size_t i = 0; i < A.size(); ++i) od[i] = ad[i] - bd[i]; break;
      case Op::mul: for (size_t i = 0; i < A.size(); ++i) od[i] = ad[i] * bd[i]; break;
      default: throw NumericError("binary: bad op");
    }
    n.value = std::move(out);
    return push(std::move(n));
  }

  NodeId push(Node&& n, bool check = true) {
    if (check && !n.value.all_finite())
      throw NumericError("non-finite value produced by primitive " +
                         std::to_string(static_cast<int>(n.op)));
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  Tensor& grad_of(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void apply_backward(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        axpy(grad_of(n.a), 1.0, fate::matmul(g, transpose(B)));
        axpy(grad_of(n.b), 1.0, fate::matmul(transpose(A), g));
        break;
      }
      case Op::spmm: {
        Tensor& gb = grad_of(n.b);
        const SparseMat& S = *n.sparse;
        for (size_t i = 0; i < S.rows; ++i) {
          const double* grow = g.row(i);
          for (size_t e = S.row_ptr[i]; e < S.row_ptr[i + 1]; ++e) {
            double* brow = gb.row(S.col[e]);
            const double w = S.val[e];
            for (size_t j = 0; j < g.cols(); ++j) brow[j] += w * grow[j];
          }
        }
        break;
      }
      case Op::gather_sum: {
        Tensor& ga = grad_of(n.a);
        for (size_t r : n.idx)
          for (size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(0, j);
        break;
      }
      case Op::row_scale: {
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < g.rows(); ++i)
          for (size_t j = 0; j < g.cols(); ++j) ga(i, j) += n.vec[i] * g(i, j);
        break;
      }
      case Op::add:
        axpy(grad_of(n.a), 1.0, g);
        axpy(grad_of(n.b), 1.0, g);
        break;
      case Op::sub:
        axpy(grad_of(n.a), 1.0, g);
        axpy(grad_of(n.b), -1.0, g);
        break;
      case Op::mul: {
        const Tensor& A = nodes_[n.a].value;
        const Tensor& B = nodes_[n.b].value;
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (size_t i = 0; i < g.size(); ++i) {
          ga.data()[i] += g.data()[i] * B.data()[i];
          gb.data()[i] += g.data()[i] * A.data()[i];
        }
        break;
      }
      case Op::scale:
        axpy(grad_of(n.a), n.scalar, g);
        break;
      case Op::add_bias: {
        axpy(grad_of(n.a), 1.0, g);
        Tensor& gb = grad_of(n.b);
        for (size_t i = 0; i < g.rows(); ++i)
          for (size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
        break;
      }
      case Op::relu: {
        const Tensor& A = nodes_[n.a].value;
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < g.size(); ++i)
          if (A.data()[i] > 0.0) ga.data()[i] += g.data()[i];
        break;
      }
      case Op::sigmoid: {
        const Tensor& Y = n.value;
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          double y = Y.data()[i];
          ga.data()[i] += g.data()[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::softmax_rows: {
        const Tensor& Y = n.value;
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < g.rows(); ++i) {
          double dot = 0.0;
          for (size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * Y(i, j);
          for (size_t j = 0; j < g.cols(); ++j)
            ga(i, j) += Y(i, j) * (g(i, j) - dot);
        }
        break;
      }
      case Op::ce_with_logits: {
        const Tensor& A = nodes_[n.a].value;
        Tensor& ga = grad_of(n.a);
        const double gs = g(0, 0) / static_cast<double>(A.rows());
        std::vector<double> sm(A.cols());
        for (size_t i = 0; i < A.rows(); ++i) {
          softmax_row(A.row(i), sm.data(), A.cols());
          for (size_t j = 0; j < A.cols(); ++j) ga(i, j) += gs * sm[j];
          ga(i, n.idx[i]) -= gs;
        }
        break;
      }
      case Op::bce_with_logits: {
        const Tensor& A = nodes_[n.a].value;
        Tensor& ga = grad_of(n.a);
        const double gs = g(0, 0) / static_cast<double>(A.rows());
        for (size_t i = 0; i < A.rows(); ++i)
          ga(i, 0) += gs * (sigmoid_scalar(A(i, 0)) - n.vec[i]);
        break;
      }
      case Op::mean_rows: {
        Tensor& ga = grad_of(n.a);
        const double inv = 1.0 / static_cast<double>(ga.rows());
        for (size_t i = 0; i < ga.rows(); ++i)
          for (size_t j = 0; j < ga.cols(); ++j) ga(i, j) += inv * g(0, j);
        break;
      }
      case Op::row_sums: {
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < ga.rows(); ++i)
          for (size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
        break;
      }
      case Op::sum_all: {
        Tensor& ga = grad_of(n.a);
        const double gs = g(0, 0);
        for (size_t i = 0; i < ga.size(); ++i) ga.data()[i] += gs;
        break;
      }
      case Op::dropout: {
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga.data()[i] += n.vec[i] * g.data()[i];
        break;
      }
      case Op::batchnorm: {
        const Tensor& G = nodes_[n.b].value;  // gamma
        Tensor& ga = grad_of(n.a);
        Tensor& ggamma = grad_of(n.b);
        Tensor& gbeta = grad_of(n.c);
        const Tensor& xhat = n.aux;
        const size_t N = g.rows(), C = g.cols();
        for (size_t j = 0; j < C; ++j) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (size_t i = 0; i < N; ++i) {
            sum_g += g(i, j);
            sum_gx += g(i, j) * xhat(i, j);
          }
          ggamma(0, j) += sum_gx;
          gbeta(0, j) += sum_g;
          const double gamma_inv_std = G(0, j) * n.vec[j];
          if (n.train_mode) {
            const double invN = 1.0 / static_cast<double>(N);
            for (size_t i = 0; i < N; ++i)
              ga(i, j) += gamma_inv_std *
                          (g(i, j) - invN * sum_g - invN * xhat(i, j) * sum_gx);
          } else {
            for (size_t i = 0; i < N; ++i) ga(i, j) += gamma_inv_std * g(i, j);
          }
        }
        break;
      }
      case Op::zero_rows: {
        Tensor& ga = grad_of(n.a);
        for (size_t i = 0; i < g.rows(); ++i)
          if (!n.mask[i])
            for (size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j);
        break;
      }
      case Op::merge_rows: {
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (size_t i = 0; i < g.rows(); ++i) {
          Tensor& dst = n.mask[i] ? ga : gb;
          for (size_t j = 0; j < g.cols(); ++j) dst(i, j) += g(i, j);
        }
        break;
      }
      case Op::scatter_rows: {
        Tensor& ga = grad_of(n.a);
        for (size_t r = 0; r < n.idx_signed.size(); ++r) {
          long s = n.idx_signed[r];
          if (s < 0) continue;
          for (size_t j = 0; j < g.cols(); ++j)
            ga(static_cast<size_t>(s), j) += g(r, j);
        }
        break;
      }
      case Op::select_rows: {
        Tensor& ga = grad_of(n.a);
        for (size_t r = 0; r < n.idx.size(); ++r)
          for (size_t j = 0; j < g.cols(); ++j) ga(n.idx[r], j) += g(r, j);
        break;
      }
      default:
        throw NumericError("backward: unhandled op");
    }
  }

  std::vector<Node> nodes_;
};

// p <- p - lr * g, elementwise.
inline void sgd_step(Tensor& p, const Tensor& g, double lr) {
  if (!p.same_shape(g)) throw NumericError("sgd_step: shape mismatch");
  for (size_t i = 0; i < p.size(); ++i) p.data()[i] -= lr * g.data()[i];
}

inline void sgd_step(Param& p, double lr) { sgd_step(p.value, p.grad, lr); }

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

// Compares the tape gradient of a scalar-valued build function against central
// finite differences over every entry of every listed parameter. The build
// function must be deterministic (re-seed any dropout RNG inside it).
template <class BuildFn>
GradCheckReport grad_check(BuildFn&& build, std::vector<Param*> params,
                           double step = 1e-5, double tol = 1e-4) {
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    NodeId loss = build(tape);
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape tape;
    NodeId loss = build(tape);
    return tape.value(loss)(0, 0);
  };

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& v = params[pi]->value;
    for (size_t i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + step;
      const double up = eval();
      v.data()[i] = orig - step;
      const double dn = eval();
      v.data()[i] = orig;
      const double fd = (up - dn) / (2.0 * step);
      const double an = analytic[pi].data()[i];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(an)});
      rep.max_rel_err = std::max(rep.max_rel_err, std::fabs(fd - an) / denom);
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace fate
