#pragma once
// Classifier heads over frozen query embeddings. Four modes:
//   linear    logits = head(z)
//   mlp       logits = head2(relu(head1(z)))
//   mean_knn  logits = head(mean_fusion(z, retrieved values))
//   mam       logits = head(memory_attention(z, retrieved keys, values))
// Retrieval modes require the caller to supply the retrieved neighbor
// matrices; embeddings themselves are never trained.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "racm/fusion.hpp"
#include "racm/nn/param.hpp"

namespace racm {

enum class HeadMode { linear, mlp, mean_knn, mam };

inline std::string to_string(HeadMode m) {
  switch (m) {
    case HeadMode::linear: return "linear";
    case HeadMode::mlp: return "mlp";
    case HeadMode::mean_knn: return "mean_knn";
    case HeadMode::mam: return "mam";
  }
  return "?";
}

inline HeadMode head_mode_from_string(const std::string& s) {
  if (s == "linear") return HeadMode::linear;
  if (s == "mlp") return HeadMode::mlp;
  if (s == "mean_knn") return HeadMode::mean_knn;
  if (s == "mam") return HeadMode::mam;
  throw std::invalid_argument("unknown head mode: " + s);
}

inline bool uses_retrieval(HeadMode m) {
  return m == HeadMode::mean_knn || m == HeadMode::mam;
}

struct ModelConfig {
  HeadMode mode = HeadMode::linear;
  std::uint32_t dim = 0;          // query embedding width
  std::uint32_t num_classes = 0;
  std::uint32_t value_dim = 0;    // retrieved value width (retrieval modes)
  std::uint32_t num_layers = 8;   // attention depth (mam)
};

template <typename T>
struct ModelCache {
  std::vector<T> z;
  std::vector<T> head_in;   // what the classifier saw
  std::vector<T> mlp_pre;   // pre-activation (mlp)
  MamCache<T> mam;
  MeanFusionCache<T> mean;
};

template <typename T>
struct Model {
  ModelConfig cfg;
  nn::ParamSet<T> params;
  MamLayout mam;
  MeanFusionLayout mean_fusion;
  std::size_t mlp_w = 0, mlp_b = 0;
  std::size_t head_w = 0, head_b = 0;

  template <typename U>
  Model<U> cast() const {
    Model<U> out;
    out.cfg = cfg;
    out.params = params.template cast<U>();
    out.mam = mam;
    out.mean_fusion = mean_fusion;
    out.mlp_w = mlp_w;
    out.mlp_b = mlp_b;
    out.head_w = head_w;
    out.head_b = head_b;
    return out;
  }
};

// Parameter registration order is fixed (fusion, mlp hidden, head); it
// determines init draws and checkpoint layout.
template <typename T>
inline Model<T> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.dim == 0 || cfg.num_classes == 0)
    throw std::invalid_argument("model dims must be >= 1");
  if (uses_retrieval(cfg.mode) && cfg.value_dim == 0)
    throw std::invalid_argument("retrieval modes need value_dim >= 1");
  Model<T> m;
  m.cfg = cfg;
  Rng rng(seed);
  if (cfg.mode == HeadMode::mam)
    m.mam = register_mam_params(m.params, cfg.dim, cfg.value_dim,
                                cfg.num_layers, rng);
  if (cfg.mode == HeadMode::mean_knn)
    m.mean_fusion =
        register_mean_fusion_params(m.params, cfg.dim, cfg.value_dim);
  if (cfg.mode == HeadMode::mlp) {
    m.mlp_w = m.params.add_uniform("mlp.hidden.w", {cfg.dim, cfg.dim},
                                   cfg.dim, rng);
    m.mlp_b = m.params.add("mlp.hidden.b", {cfg.dim});
  }
  m.head_w = m.params.add_uniform("head.w", {cfg.dim, cfg.num_classes},
                                  cfg.dim, rng);
  m.head_b = m.params.add("head.b", {cfg.num_classes});
  return m;
}

// keys/values: the k retrieved rows for this query (ignored by non-retrieval
// modes; required by retrieval modes).
template <typename T>
inline std::vector<T> model_forward(const Model<T>& m, std::span<const T> z,
                                    CMatRef<T> keys, CMatRef<T> values,
                                    ModelCache<T>* cache = nullptr) {
  const auto& cfg = m.cfg;
  if (z.size() != cfg.dim)
    throw std::invalid_argument("model_forward: bad query width");
  if (uses_retrieval(cfg.mode) && values.rows == 0)
    throw std::invalid_argument(
        "model_forward: retrieval mode called without retrieved neighbors");

  std::vector<T> head_in;
  std::vector<T> mlp_pre;
  if (cache) cache->z.assign(z.begin(), z.end());
  switch (cfg.mode) {
    case HeadMode::linear:
      head_in.assign(z.begin(), z.end());
      break;
    case HeadMode::mlp: {
      mlp_pre.resize(cfg.dim);
      affine_forward<T>(
          CMatRef<T>(m.params[m.mlp_w].value.data(), cfg.dim, cfg.dim),
          m.params[m.mlp_b].value.data(), CMatRef<T>(z.data(), 1, cfg.dim),
          MatRef<T>(mlp_pre.data(), 1, cfg.dim));
      head_in.resize(cfg.dim);
      for (std::size_t t = 0; t < cfg.dim; ++t)
        head_in[t] = std::max(T(0), mlp_pre[t]);
      break;
    }
    case HeadMode::mean_knn:
      head_in = mean_fusion_forward<T>(m.params, m.mean_fusion, z, values,
                                       cache ? &cache->mean : nullptr);
      break;
    case HeadMode::mam:
      head_in = mam_forward<T>(m.params, m.mam, z, keys, values,
                               cache ? &cache->mam : nullptr);
      break;
  }

  std::vector<T> logits(cfg.num_classes);
  affine_forward<T>(
      CMatRef<T>(m.params[m.head_w].value.data(), cfg.dim, cfg.num_classes),
      m.params[m.head_b].value.data(),
      CMatRef<T>(head_in.data(), 1, cfg.dim),
      MatRef<T>(logits.data(), 1, cfg.num_classes));
  if (cache) {
    cache->head_in = std::move(head_in);
    cache->mlp_pre = std::move(mlp_pre);
  }
  return logits;
}

// Accumulates parameter gradients; returns d(loss)/d(z) for diagnostics.
template <typename T>
inline std::vector<T> model_backward(Model<T>& m, const ModelCache<T>& cache,
                                     CMatRef<T> keys, CMatRef<T> values,
                                     std::span<const T> dlogits) {
  const auto& cfg = m.cfg;
  auto& hw = m.params[m.head_w];
  std::vector<T> d_head_in(cfg.dim);
  affine_backward<T>(
      CMatRef<T>(hw.value.data(), cfg.dim, cfg.num_classes),
      CMatRef<T>(cache.head_in.data(), 1, cfg.dim),
      CMatRef<T>(dlogits.data(), 1, cfg.num_classes),
      MatRef<T>(hw.grad.data(), cfg.dim, cfg.num_classes),
      m.params[m.head_b].grad.data(), MatRef<T>(d_head_in.data(), 1, cfg.dim));

  switch (cfg.mode) {
    case HeadMode::linear:
      return d_head_in;
    case HeadMode::mlp: {
      std::vector<T> d_pre(cfg.dim);
      for (std::size_t t = 0; t < cfg.dim; ++t)
        d_pre[t] = cache.mlp_pre[t] > T(0) ? d_head_in[t] : T(0);
      auto& w1 = m.params[m.mlp_w];
      std::vector<T> dz(cfg.dim);
      affine_backward<T>(CMatRef<T>(w1.value.data(), cfg.dim, cfg.dim),
                         CMatRef<T>(cache.z.data(), 1, cfg.dim),
                         CMatRef<T>(d_pre.data(), 1, cfg.dim),
                         MatRef<T>(w1.grad.data(), cfg.dim, cfg.dim),
                         m.params[m.mlp_b].grad.data(),
                         MatRef<T>(dz.data(), 1, cfg.dim));
      return dz;
    }
    case HeadMode::mean_knn:
      return mean_fusion_backward<T>(m.params, m.mean_fusion, cache.mean,
                                     d_head_in);
    case HeadMode::mam:
      return mam_backward<T>(m.params, m.mam, keys, values, cache.mam,
                             d_head_in);
  }
  throw std::logic_error("unreachable");
}

}  // namespace racm
