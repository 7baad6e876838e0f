#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fate/autodiff.hpp"
#include "fate/common.hpp"
#include "fate/graph.hpp"
#include "fate/tensor.hpp"

namespace fate {

enum class Head { softmax, sigmoid };
enum class BackboneVariant { plain, deepfm };

struct BackboneConfig {
  size_t embed_dim = 8;                       // H, also the first classifier width
  std::vector<size_t> classifier_hidden{8, 8};
  size_t n_classes = 2;
  Head head = Head::softmax;
  BackboneVariant variant = BackboneVariant::plain;
  bool batchnorm = false;
  double dropout_p = 0.0;

  size_t output_width() const { return head == Head::sigmoid ? 1 : n_classes; }

  void validate() const {
    if (embed_dim == 0) throw ConfigError("backbone: embed_dim must be positive");
    if (head == Head::softmax && n_classes < 2)
      throw ConfigError("backbone: softmax head needs >= 2 classes");
    if (variant == BackboneVariant::deepfm && head != Head::sigmoid)
      throw ConfigError("backbone: deepfm variant requires the sigmoid head");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw ConfigError("backbone: dropout_p must be in [0,1)");
  }
};

enum class GnnFlavor { gcn, sage };

struct GnnConfig {
  size_t layers = 4;
  GnnFlavor flavor = GnnFlavor::gcn;
  size_t width = 8;
  bool self_loops = true;  // gcn only; off gives the plain alternating mean

  void validate(const BackboneConfig& b) const {
    if (width != b.embed_dim) throw ConfigError("gnn: width must match embed_dim");
  }
};

inline Tensor uniform_init(size_t rows, size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform_in(-bound, bound);
  return t;
}

// Everything the checkpoint holds: embedding table W (D x H), classifier
// parameters phi (dense stack, optional DeepFM extras, batchnorm state), and
// GNN transforms omega = {P^(l)}.
struct ModelState {
  size_t n_features = 0;
  BackboneConfig backbone;
  GnnConfig gnn;

  Param W;                         // D x H feature embeddings
  std::vector<Param> layer_w;      // classifier weight stack
  std::vector<Param> layer_b;
  std::vector<Param> bn_gamma, bn_beta;
  std::vector<BnStats> bn_stats;
  Param first_order;               // D x 1, deepfm only
  std::vector<Param> gnn_p;        // P^(l): H x H (gcn), 2H x H (sage)

  static ModelState init(size_t n_features, const BackboneConfig& bcfg,
                         const GnnConfig& gcfg, Rng& rng) {
    bcfg.validate();
    gcfg.validate(bcfg);
    ModelState s;
    s.n_features = n_features;
    s.backbone = bcfg;
    s.gnn = gcfg;
    const size_t h = bcfg.embed_dim;
    const double hb = 1.0 / std::sqrt(static_cast<double>(h));
    s.W = Param(uniform_init(n_features, h, hb, rng));

    std::vector<size_t> widths;
    widths.push_back(h);
    for (size_t w : bcfg.classifier_hidden) widths.push_back(w);
    widths.push_back(bcfg.output_width());
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
      s.layer_w.emplace_back(uniform_init(widths[l], widths[l + 1], bound, rng));
      s.layer_b.emplace_back(Tensor(1, widths[l + 1], 0.0));
      if (bcfg.batchnorm && l + 2 < widths.size()) {
        s.bn_gamma.emplace_back(Tensor(1, widths[l + 1], 1.0));
        s.bn_beta.emplace_back(Tensor(1, widths[l + 1], 0.0));
        s.bn_stats.emplace_back(widths[l + 1]);
      }
    }
    if (bcfg.variant == BackboneVariant::deepfm)
      s.first_order = Param(Tensor(n_features, 1, 0.0));
    for (size_t l = 0; l < gcfg.layers; ++l) {
      const size_t rows = gcfg.flavor == GnnFlavor::sage ? 2 * h : h;
      s.gnn_p.emplace_back(uniform_init(rows, h, hb, rng));
    }
    return s;
  }

  // theta = [phi, W]: everything the fast timescale updates.
  std::vector<Param*> theta() {
    std::vector<Param*> ps{&W};
    for (auto& p : layer_w) ps.push_back(&p);
    for (auto& p : layer_b) ps.push_back(&p);
    for (auto& p : bn_gamma) ps.push_back(&p);
    for (auto& p : bn_beta) ps.push_back(&p);
    if (backbone.variant == BackboneVariant::deepfm) ps.push_back(&first_order);
    return ps;
  }

  std::vector<Param*> omega() {
    std::vector<Param*> ps;
    for (auto& p : gnn_p) ps.push_back(&p);
    return ps;
  }

  std::vector<Param*> all_params() {
    auto ps = theta();
    for (auto* p : omega()) ps.push_back(p);
    return ps;
  }
};

// z = sum of the indexed rows of W; empty index set gives the zero vector.
// Summation runs in sorted index order so any permutation of the same index
// set produces the identical bit pattern.
inline Tensor embed(const std::vector<size_t>& row, const Tensor& w) {
  std::vector<size_t> sorted = row;
  std::sort(sorted.begin(), sorted.end());
  Tensor z(1, w.cols());
  for (size_t j : sorted) {
    if (j >= w.rows()) throw NumericError("embed: index out of range");
    for (size_t c = 0; c < w.cols(); ++c) z(0, c) += w(j, c);
  }
  return z;
}

// Appendix-style collapse of a concat-layer weight: W'' = sum of the d
// H x H sub-blocks of W' (d*H x H).
inline Tensor concat_equivalence_witness(const Tensor& w_prime, size_t h) {
  if (h == 0 || w_prime.rows() % h != 0)
    throw ConfigError("concat_equivalence_witness: row count not divisible by H");
  Tensor w2(h, w_prime.cols());
  const size_t d = w_prime.rows() / h;
  for (size_t m = 0; m < d; ++m)
    for (size_t r = 0; r < h; ++r)
      for (size_t c = 0; c < w_prime.cols(); ++c) w2(r, c) += w_prime(m * h + r, c);
  return w2;
}

// Classifier stack on the hidden representation; returns the logit node
// (N x C for softmax heads, N x 1 for sigmoid heads).
inline NodeId classifier_logits(Tape& tape, NodeId z, ModelState& s, bool train,
                                Rng& dropout_rng) {
  const auto& cfg = s.backbone;
  NodeId h = z;
  const size_t n_layers = s.layer_w.size();
  for (size_t l = 0; l < n_layers; ++l) {
    h = tape.add_bias(tape.matmul(h, tape.param(s.layer_w[l])),
                      tape.param(s.layer_b[l]));
    if (l + 1 < n_layers) {
      if (cfg.batchnorm)
        h = tape.batchnorm(h, tape.param(s.bn_gamma[l]), tape.param(s.bn_beta[l]),
                           s.bn_stats[l], train);
      h = tape.relu(h);
      if (cfg.dropout_p > 0.0) h = tape.dropout(h, cfg.dropout_p, dropout_rng, train);
    }
  }
  return h;
}

// Probability head over logits.
inline NodeId predict_head(Tape& tape, NodeId logits, const BackboneConfig& cfg) {
  return cfg.head == Head::softmax ? tape.softmax_rows(logits) : tape.sigmoid(logits);
}

// classify: hidden vector(s) -> predicted distribution.
inline Tensor classify(const Tensor& z, ModelState& s) {
  Tape tape;
  Rng rng(0);
  NodeId logits = classifier_logits(tape, tape.input(z), s, /*train=*/false, rng);
  return tape.value(predict_head(tape, logits, s.backbone));
}

// DeepFM logit: first-order term + pairwise FM term + feedforward on the
// summed embedding. The FM term uses the half-square identity, which equals
// the explicit sum over raw-feature pairs because each instance holds one
// embedding per raw feature.
inline NodeId deepfm_logits(Tape& tape, const SparsePtr& x, NodeId w_eff, NodeId w1,
                            ModelState& s, bool train, Rng& dropout_rng) {
  NodeId z = tape.spmm(x, w_eff);
  NodeId fnn = classifier_logits(tape, z, s, train, dropout_rng);
  NodeId sum_sq = tape.row_sums(tape.mul(z, z));                   // |sum z|^2
  NodeId per_sq = tape.spmm(x, tape.row_sums(tape.mul(w_eff, w_eff)));  // sum |z_m|^2
  NodeId fm = tape.scale(tape.sub(sum_sq, per_sq), 0.5);
  NodeId first = tape.spmm(x, w1);
  return tape.add(tape.add(first, fm), fnn);
}

inline double deepfm_score(const std::vector<size_t>& row, ModelState& s) {
  Tape tape;
  Rng rng(0);
  EncodedMatrix m;
  m.cols = s.W.value.rows();
  m.push_row(std::vector<size_t>(row), 0);
  auto x = incidence(m, s.W.value.rows());
  NodeId logit = deepfm_logits(tape, x, tape.param(s.W), tape.param(s.first_order),
                               s, false, rng);
  return tape.value(logit)(0, 0);
}

// Eq.-style alternating propagation over the bipartite graph: instance states
// start at zero, features at feat_init; L layers of linear message passing
// (no nonlinearity); returns the feature states after layer L.
inline NodeId gnn_propagate_tape(Tape& tape, NodeId feat_init, const BipartiteGraph& g,
                                 ModelState& s) {
  const GnnConfig& cfg = s.gnn;
  const size_t h = cfg.width;
  NodeId w = feat_init;
  NodeId inst = tape.input(Tensor(g.n_instances, h, 0.0));
  if (cfg.layers == 0) return w;

  SparsePtr to_inst, to_feat;
  std::vector<double> self_inst, self_feat;
  if (cfg.flavor == GnnFlavor::gcn && cfg.self_loops) {
    to_inst = gcn_instance_adj(g);
    to_feat = gcn_feature_adj(g);
    self_inst = gcn_instance_self(g);
    self_feat = gcn_feature_self(g);
  } else {
    to_inst = instance_mean_adj(g);
    to_feat = feature_mean_adj(g);
  }

  for (size_t l = 0; l < cfg.layers; ++l) {
    NodeId inst_next, feat_next;
    if (cfg.flavor == GnnFlavor::sage) {
      // separate transforms for self state and mean neighbor state, summed
      NodeId p = tape.param(s.gnn_p[l]);
      std::vector<size_t> top(h), bottom(h);
      for (size_t r = 0; r < h; ++r) {
        top[r] = r;
        bottom[r] = h + r;
      }
      NodeId p_self = tape.select_rows(p, top);
      NodeId p_neigh = tape.select_rows(p, bottom);
      inst_next = tape.add(tape.matmul(inst, p_self),
                           tape.matmul(tape.spmm(to_inst, w), p_neigh));
      feat_next = tape.add(tape.matmul(w, p_self),
                           tape.matmul(tape.spmm(to_feat, inst), p_neigh));
    } else {
      NodeId p = tape.param(s.gnn_p[l]);
      NodeId agg_inst = tape.spmm(to_inst, w);
      NodeId agg_feat = tape.spmm(to_feat, inst);
      if (cfg.self_loops) {
        agg_inst = tape.add(agg_inst, tape.row_scale(inst, self_inst));
        agg_feat = tape.add(agg_feat, tape.row_scale(w, self_feat));
      }
      inst_next = tape.matmul(agg_inst, p);
      feat_next = tape.matmul(agg_feat, p);
    }
    inst = inst_next;
    w = feat_next;
  }
  return w;
}

// Value-level wrapper: propagate arbitrary initial feature states.
inline Tensor gnn_propagate(const Tensor& feat_init, const BipartiteGraph& g,
                            ModelState& s) {
  Tape tape;
  return tape.value(gnn_propagate_tape(tape, tape.input(feat_init), g, s));
}

enum class ForwardMode {
  masked_set,   // masked/new features take GNN outputs, the rest keep raw W
  all_updated,  // every feature takes the GNN output
};

struct ForwardPlan {
  const EncodedMatrix* rows = nullptr;     // rows to predict (indices in graph space)
  const BipartiteGraph* graph = nullptr;   // message-passing substrate
  ForwardMode mode = ForwardMode::masked_set;
  // masked_set: flags per graph feature; masked rows start from zero and adopt
  // GNN outputs. Sized graph->n_features.
  const std::vector<uint8_t>* masked = nullptr;
  // Maps graph feature id -> row of W, or -1 for features with no trained
  // embedding (expansion features). Empty means identity (graph space == W space).
  std::vector<long> w_row_of_feature;
  // all_updated with a column-reindexed proxy: graph feature k corresponds to
  // W row proxy_feature_ids[k]. Empty means identity.
  std::vector<size_t> proxy_feature_ids;
  bool train = false;
};

struct ForwardResult {
  NodeId logits = 0;
  NodeId probabilities = 0;
};

// The full model of Fig-3 shape: build effective feature embeddings via the
// GNN, merge per the mode, then embed + classify (or DeepFM-score).
inline ForwardResult fate_forward(Tape& tape, const ForwardPlan& plan, ModelState& s,
                                  Rng& dropout_rng) {
  const BipartiteGraph& g = *plan.graph;
  const size_t h = s.backbone.embed_dim;
  NodeId w_param = tape.param(s.W);

  NodeId w_base;  // graph-space matrix of raw/trained embeddings (zeros for new)
  if (plan.mode == ForwardMode::all_updated && !plan.proxy_feature_ids.empty()) {
    w_base = tape.select_rows(w_param, plan.proxy_feature_ids);
  } else if (!plan.w_row_of_feature.empty()) {
    w_base = tape.scatter_rows(w_param, plan.w_row_of_feature);
  } else if (g.n_features == s.W.value.rows()) {
    w_base = w_param;
  } else {
    throw NumericError("fate_forward: graph/state feature count mismatch");
  }
  if (tape.value(w_base).rows() != g.n_features || tape.value(w_base).cols() != h)
    throw NumericError("fate_forward: inconsistent dimensions");

  NodeId w_eff;
  if (plan.mode == ForwardMode::masked_set) {
    if (plan.masked == nullptr || plan.masked->size() != g.n_features)
      throw NumericError("fate_forward: masked flags missing");
    NodeId w_init = tape.zero_rows(w_base, *plan.masked);
    NodeId w_gnn = gnn_propagate_tape(tape, w_init, g, s);
    w_eff = tape.merge_rows(w_gnn, w_base, *plan.masked);
  } else {
    w_eff = gnn_propagate_tape(tape, w_base, g, s);
  }

  auto x = incidence(*plan.rows, g.n_features);
  ForwardResult out;
  if (s.backbone.variant == BackboneVariant::deepfm) {
    NodeId w1;
    if (plan.mode == ForwardMode::all_updated && !plan.proxy_feature_ids.empty()) {
      w1 = tape.select_rows(tape.param(s.first_order), plan.proxy_feature_ids);
    } else if (!plan.w_row_of_feature.empty()) {
      // first-order weights of new features stay zero; no propagation for them
      w1 = tape.scatter_rows(tape.param(s.first_order), plan.w_row_of_feature);
    } else {
      w1 = tape.param(s.first_order);
    }
    out.logits = deepfm_logits(tape, x, w_eff, w1, s, plan.train, dropout_rng);
  } else {
    NodeId z = tape.spmm(x, w_eff);
    out.logits = classifier_logits(tape, z, s, plan.train, dropout_rng);
  }
  out.probabilities = predict_head(tape, out.logits, s.backbone);
  return out;
}

// Loss on top of a forward pass; labels are class ids (sigmoid heads read
// them as 0/1 targets).
inline NodeId fate_loss(Tape& tape, const ForwardResult& fwd,
                        const std::vector<int>& labels, const BackboneConfig& cfg) {
  if (cfg.head == Head::softmax) {
    std::vector<size_t> ls(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) ls[i] = static_cast<size_t>(labels[i]);
    return tape.ce_with_logits(fwd.logits, ls);
  }
  std::vector<double> ts(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) ts[i] = static_cast<double>(labels[i]);
  return tape.bce_with_logits(fwd.logits, ts);
}

// Plain backbone prediction (no GNN): the Base/Oracle/INL path. The embedding
// table may be wider than W when extrapolated rows were appended; DeepFM
// variants then need a matching first-order column (zeros for new features).
inline Tensor backbone_predict(const EncodedMatrix& rows, const Tensor& w_eff,
                               ModelState& s, const Tensor* w1_eff = nullptr) {
  Tape tape;
  Rng rng(0);
  auto x = incidence(rows, w_eff.rows());
  NodeId logits;
  if (s.backbone.variant == BackboneVariant::deepfm) {
    Tensor w1 = w1_eff != nullptr ? *w1_eff : s.first_order.value;
    if (w1.rows() != w_eff.rows()) {
      Tensor padded(w_eff.rows(), 1, 0.0);
      for (size_t i = 0; i < std::min(w1.rows(), padded.rows()); ++i)
        padded(i, 0) = w1(i, 0);
      w1 = padded;
    }
    logits = deepfm_logits(tape, x, tape.input(w_eff), tape.input(w1), s, false, rng);
  } else {
    NodeId z = tape.spmm(x, tape.input(w_eff));
    logits = classifier_logits(tape, z, s, false, rng);
  }
  return tape.value(predict_head(tape, logits, s.backbone));
}

}  // namespace fate
