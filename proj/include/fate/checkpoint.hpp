#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fate/common.hpp"
#include "fate/model.hpp"

namespace fate {

// Binary checkpoint container, little-endian throughout:
//   magic "FATECKP1", u32 version,
//   u64 vocabulary content hash,
//   backbone config, gnn config, feature count,
//   tensors in declared order: W, layer weights, layer biases, batchnorm
//   gamma/beta/running stats, first-order weights (deepfm), GNN transforms.
// Each tensor is u64 rows, u64 cols, rows*cols f64 values.
namespace ckpt_detail {

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

inline void put_tensor(std::ofstream& out, const Tensor& t) {
  put<uint64_t>(out, t.rows());
  put<uint64_t>(out, t.cols());
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor get_tensor(std::ifstream& in) {
  auto rows = get<uint64_t>(in);
  auto cols = get<uint64_t>(in);
  Tensor t(rows, cols);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint: truncated tensor");
  return t;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const ModelState& s,
                            uint64_t vocab_hash) {
  using namespace ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write("FATECKP1", 8);
  put<uint32_t>(out, 1);
  put<uint64_t>(out, vocab_hash);
  put<uint64_t>(out, s.n_features);
  put<uint32_t>(out, static_cast<uint32_t>(s.backbone.embed_dim));
  put<uint32_t>(out, static_cast<uint32_t>(s.backbone.classifier_hidden.size()));
  for (size_t w : s.backbone.classifier_hidden) put<uint32_t>(out, static_cast<uint32_t>(w));
  put<uint32_t>(out, static_cast<uint32_t>(s.backbone.n_classes));
  put<uint8_t>(out, s.backbone.head == Head::softmax ? 0 : 1);
  put<uint8_t>(out, s.backbone.variant == BackboneVariant::plain ? 0 : 1);
  put<uint8_t>(out, s.backbone.batchnorm ? 1 : 0);
  put<double>(out, s.backbone.dropout_p);
  put<uint32_t>(out, static_cast<uint32_t>(s.gnn.layers));
  put<uint8_t>(out, s.gnn.flavor == GnnFlavor::gcn ? 0 : 1);
  put<uint32_t>(out, static_cast<uint32_t>(s.gnn.width));
  put<uint8_t>(out, s.gnn.self_loops ? 1 : 0);

  put_tensor(out, s.W.value);
  put<uint32_t>(out, static_cast<uint32_t>(s.layer_w.size()));
  for (const auto& p : s.layer_w) put_tensor(out, p.value);
  for (const auto& p : s.layer_b) put_tensor(out, p.value);
  put<uint32_t>(out, static_cast<uint32_t>(s.bn_gamma.size()));
  for (const auto& p : s.bn_gamma) put_tensor(out, p.value);
  for (const auto& p : s.bn_beta) put_tensor(out, p.value);
  for (const auto& st : s.bn_stats) {
    put_tensor(out, st.running_mean);
    put_tensor(out, st.running_var);
  }
  put<uint8_t>(out, s.backbone.variant == BackboneVariant::deepfm ? 1 : 0);
  if (s.backbone.variant == BackboneVariant::deepfm) put_tensor(out, s.first_order.value);
  put<uint32_t>(out, static_cast<uint32_t>(s.gnn_p.size()));
  for (const auto& p : s.gnn_p) put_tensor(out, p.value);
}

struct LoadedCheckpoint {
  ModelState state;
  uint64_t vocab_hash = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "FATECKP1", 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  if (get<uint32_t>(in) != 1) throw DataError("checkpoint: unsupported version");
  LoadedCheckpoint lc;
  lc.vocab_hash = get<uint64_t>(in);
  ModelState& s = lc.state;
  s.n_features = get<uint64_t>(in);
  s.backbone.embed_dim = get<uint32_t>(in);
  auto n_hidden = get<uint32_t>(in);
  s.backbone.classifier_hidden.clear();
  for (uint32_t i = 0; i < n_hidden; ++i)
    s.backbone.classifier_hidden.push_back(get<uint32_t>(in));
  s.backbone.n_classes = get<uint32_t>(in);
  s.backbone.head = get<uint8_t>(in) == 0 ? Head::softmax : Head::sigmoid;
  s.backbone.variant = get<uint8_t>(in) == 0 ? BackboneVariant::plain : BackboneVariant::deepfm;
  s.backbone.batchnorm = get<uint8_t>(in) != 0;
  s.backbone.dropout_p = get<double>(in);
  s.gnn.layers = get<uint32_t>(in);
  s.gnn.flavor = get<uint8_t>(in) == 0 ? GnnFlavor::gcn : GnnFlavor::sage;
  s.gnn.width = get<uint32_t>(in);
  s.gnn.self_loops = get<uint8_t>(in) != 0;

  s.W = Param(get_tensor(in));
  auto n_layers = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_layers; ++i) s.layer_w.emplace_back(get_tensor(in));
  for (uint32_t i = 0; i < n_layers; ++i) s.layer_b.emplace_back(get_tensor(in));
  auto n_bn = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_bn; ++i) s.bn_gamma.emplace_back(get_tensor(in));
  for (uint32_t i = 0; i < n_bn; ++i) s.bn_beta.emplace_back(get_tensor(in));
  for (uint32_t i = 0; i < n_bn; ++i) {
    BnStats st;
    st.running_mean = get_tensor(in);
    st.running_var = get_tensor(in);
    s.bn_stats.push_back(std::move(st));
  }
  if (get<uint8_t>(in) != 0) s.first_order = Param(get_tensor(in));
  auto n_gnn = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_gnn; ++i) s.gnn_p.emplace_back(get_tensor(in));
  return lc;
}

}  // namespace fate
