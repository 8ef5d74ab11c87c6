#pragma once
// Retrieval fusion: combines a query embedding with the values of its
// retrieved memory neighbors.
//
// Two variants:
//  - mean fusion: z + value_out(mean of retrieved values); unlearned
//    weighting, used as a baseline.
//  - memory attention: per layer, attention weights between a projected
//    query state and the projected retrieved keys select how much each
//    retrieved value contributes; the weighted value sum is mapped back to
//    the query space and added to the ORIGINAL query (the residual always
//    anchors on z, not on the previous layer's output). Stacked num_layers
//    deep; each layer owns its projections.
//
// value_out maps are zero-initialized, so at init both variants are exactly
// the identity on z. Backward passes are exact analytic gradients,
// accumulated into the owning ParamSet.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "racm/mat.hpp"
#include "racm/nn/param.hpp"
#include "racm/nn/softmax.hpp"
#include "racm/rng.hpp"

namespace racm {

struct MamLayout {
  struct Layer {
    std::size_t query_w, query_b;  // d x d, d
    std::size_t key_w, key_b;      // d x d, d
    std::size_t out_w, out_b;      // d' x d, d
  };
  std::vector<Layer> layers;
  std::size_t dim = 0;
  std::size_t value_dim = 0;
};

struct MeanFusionLayout {
  std::size_t out_w = 0, out_b = 0;  // d' x d, d
  std::size_t dim = 0;
  std::size_t value_dim = 0;
};

// Registers per-layer query/key projections (uniform init) and the
// zero-initialized value-output map.
template <typename T>
inline MamLayout register_mam_params(nn::ParamSet<T>& set, std::size_t dim,
                                     std::size_t value_dim,
                                     std::size_t num_layers, Rng& rng) {
  if (num_layers == 0) throw std::invalid_argument("num_layers must be >= 1");
  if (dim == 0 || value_dim == 0)
    throw std::invalid_argument("fusion dims must be >= 1");
  MamLayout layout;
  layout.dim = dim;
  layout.value_dim = value_dim;
  for (std::size_t l = 1; l <= num_layers; ++l) {
    const std::string p = "mam.l" + std::to_string(l) + ".";
    MamLayout::Layer ly;
    ly.query_w = set.add_uniform(p + "query.w", {dim, dim}, dim, rng);
    ly.query_b = set.add(p + "query.b", {dim});
    ly.key_w = set.add_uniform(p + "key.w", {dim, dim}, dim, rng);
    ly.key_b = set.add(p + "key.b", {dim});
    ly.out_w = set.add(p + "out.w", {value_dim, dim});  // zero init
    ly.out_b = set.add(p + "out.b", {dim});
    layout.layers.push_back(ly);
  }
  return layout;
}

template <typename T>
inline MeanFusionLayout register_mean_fusion_params(nn::ParamSet<T>& set,
                                                    std::size_t dim,
                                                    std::size_t value_dim) {
  MeanFusionLayout layout;
  layout.dim = dim;
  layout.value_dim = value_dim;
  layout.out_w = set.add("mean_fusion.out.w", {value_dim, dim});  // zero init
  layout.out_b = set.add("mean_fusion.out.b", {dim});
  return layout;
}

template <typename T>
struct MamCache {
  struct Layer {
    std::vector<T> f_in;  // query state entering the layer (d)
    std::vector<T> q;     // projected query (d)
    Mat<T> keys_proj;     // projected keys (k x d)
    std::vector<T> attn;  // attention weights (k)
    std::vector<T> u;     // attention-weighted value sum (d')
  };
  std::vector<Layer> layers;
};

namespace detail {

template <typename T>
inline void check_fusion_inputs(const MamLayout& layout, std::span<const T> z,
                                CMatRef<T> keys, CMatRef<T> values) {
  if (keys.rows == 0)
    throw std::invalid_argument("fusion requires at least one retrieved row");
  if (keys.rows != values.rows)
    throw std::invalid_argument("retrieved keys/values row counts differ");
  if (z.size() != layout.dim || keys.cols != layout.dim ||
      values.cols != layout.value_dim)
    throw std::invalid_argument("fusion input dims do not match layout");
}

}  // namespace detail

// Forward pass. `cache` (optional) retains what backward needs; `attn_out`
// (optional) receives each layer's attention weights.
template <typename T>
inline std::vector<T> mam_forward(const nn::ParamSet<T>& set,
                                  const MamLayout& layout, std::span<const T> z,
                                  CMatRef<T> keys, CMatRef<T> values,
                                  MamCache<T>* cache = nullptr,
                                  std::vector<std::vector<T>>* attn_out = nullptr) {
  detail::check_fusion_inputs(layout, z, keys, values);
  const std::size_t d = layout.dim, dp = layout.value_dim, k = keys.rows;
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  if (cache) {
    cache->layers.clear();
    cache->layers.resize(layout.layers.size());
  }
  if (attn_out) attn_out->clear();

  std::vector<T> f(z.begin(), z.end());
  std::vector<T> q(d), scores(k), u(dp), out(d);
  Mat<T> keys_proj(k, d);
  for (std::size_t li = 0; li < layout.layers.size(); ++li) {
    const auto& ly = layout.layers[li];
    const auto& qw = set[ly.query_w];
    const auto& kw = set[ly.key_w];
    const auto& ow = set[ly.out_w];

    affine_forward<T>(CMatRef<T>(qw.value.data(), d, d),
                      set[ly.query_b].value.data(),
                      CMatRef<T>(f.data(), 1, d), MatRef<T>(q.data(), 1, d));
    affine_forward<T>(CMatRef<T>(kw.value.data(), d, d),
                      set[ly.key_b].value.data(), keys, keys_proj);
    for (std::size_t j = 0; j < k; ++j)
      scores[j] = dot(q.data(), keys_proj.row(j), d) * inv_sqrt_d;
    const std::vector<T> attn = nn::softmax<T>(scores);

    std::fill(u.begin(), u.end(), T(0));
    for (std::size_t j = 0; j < k; ++j) {
      const T a = attn[j];
      const T* vj = values.row(j);
      for (std::size_t t = 0; t < dp; ++t) u[t] += a * vj[t];
    }
    affine_forward<T>(CMatRef<T>(ow.value.data(), dp, d),
                      set[ly.out_b].value.data(),
                      CMatRef<T>(u.data(), 1, dp), MatRef<T>(out.data(), 1, d));

    if (cache) {
      auto& cl = cache->layers[li];
      cl.f_in = f;
      cl.q = q;
      cl.keys_proj = keys_proj;
      cl.attn = attn;
      cl.u = u;
    }
    if (attn_out) attn_out->push_back(attn);

    for (std::size_t t = 0; t < d; ++t) f[t] = z[t] + out[t];
  }
  return f;
}

// Exact gradients of mam_forward. Accumulates parameter gradients into the
// set and returns d(loss)/d(z).
template <typename T>
inline std::vector<T> mam_backward(nn::ParamSet<T>& set, const MamLayout& layout,
                                   CMatRef<T> keys, CMatRef<T> values,
                                   const MamCache<T>& cache,
                                   std::span<const T> d_refined) {
  if (cache.layers.size() != layout.layers.size())
    throw std::invalid_argument("mam_backward: cache does not match layout");
  const std::size_t d = layout.dim, dp = layout.value_dim, k = keys.rows;
  if (d_refined.size() != d)
    throw std::invalid_argument("mam_backward: bad upstream gradient size");
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  std::vector<T> dz(d, T(0));
  std::vector<T> g(d_refined.begin(), d_refined.end());  // dL/df^l
  std::vector<T> du(dp), dattn(k), dq(d), f_next(d);
  Mat<T> dkeys_proj(k, d);

  for (std::size_t li = layout.layers.size(); li-- > 0;) {
    const auto& ly = layout.layers[li];
    const auto& cl = cache.layers[li];
    auto& qw = set[ly.query_w];
    auto& kw = set[ly.key_w];
    auto& ow = set[ly.out_w];

    // residual: f^l = z + out(u)
    for (std::size_t t = 0; t < d; ++t) dz[t] += g[t];

    // out map
    affine_backward<T>(CMatRef<T>(ow.value.data(), dp, d),
                       CMatRef<T>(cl.u.data(), 1, dp),
                       CMatRef<T>(g.data(), 1, d),
                       MatRef<T>(ow.grad.data(), dp, d),
                       set[ly.out_b].grad.data(),
                       MatRef<T>(du.data(), 1, dp));

    // u = sum_j attn_j * value_j
    for (std::size_t j = 0; j < k; ++j)
      dattn[j] = dot(du.data(), values.row(j), dp);

    // softmax and score scale
    const std::vector<T> dscores = nn::softmax_backward<T>(cl.attn, dattn);
    for (std::size_t t = 0; t < d; ++t) dq[t] = T(0);
    for (std::size_t j = 0; j < k; ++j) {
      const T ds = dscores[j] * inv_sqrt_d;
      const T* kj = cl.keys_proj.row(j);
      T* dkj = dkeys_proj.row(j);
      for (std::size_t t = 0; t < d; ++t) {
        dq[t] += ds * kj[t];
        dkj[t] = ds * cl.q[t];
      }
    }

    // key projection (input gradient not needed; keys are data)
    affine_backward<T>(CMatRef<T>(kw.value.data(), d, d), keys,
                       CMatRef<T>(dkeys_proj), MatRef<T>(kw.grad.data(), d, d),
                       set[ly.key_b].grad.data(), MatRef<T>());

    // query projection; its input gradient flows to the previous layer
    affine_backward<T>(CMatRef<T>(qw.value.data(), d, d),
                       CMatRef<T>(cl.f_in.data(), 1, d),
                       CMatRef<T>(dq.data(), 1, d),
                       MatRef<T>(qw.grad.data(), d, d),
                       set[ly.query_b].grad.data(),
                       MatRef<T>(f_next.data(), 1, d));
    if (li == 0) {
      for (std::size_t t = 0; t < d; ++t) dz[t] += f_next[t];
    } else {
      g = f_next;
    }
  }
  return dz;
}

template <typename T>
struct MeanFusionCache {
  std::vector<T> mean;  // d'
};

template <typename T>
inline std::vector<T> mean_fusion_forward(const nn::ParamSet<T>& set,
                                          const MeanFusionLayout& layout,
                                          std::span<const T> z,
                                          CMatRef<T> values,
                                          MeanFusionCache<T>* cache = nullptr) {
  if (values.rows == 0)
    throw std::invalid_argument("fusion requires at least one retrieved row");
  if (z.size() != layout.dim || values.cols != layout.value_dim)
    throw std::invalid_argument("fusion input dims do not match layout");
  const std::size_t d = layout.dim, dp = layout.value_dim, k = values.rows;
  std::vector<T> mean(dp, T(0));
  for (std::size_t j = 0; j < k; ++j) {
    const T* vj = values.row(j);
    for (std::size_t t = 0; t < dp; ++t) mean[t] += vj[t];
  }
  const T inv_k = T(1) / static_cast<T>(k);
  for (auto& v : mean) v *= inv_k;

  std::vector<T> out(d);
  affine_forward<T>(CMatRef<T>(set[layout.out_w].value.data(), dp, d),
                    set[layout.out_b].value.data(),
                    CMatRef<T>(mean.data(), 1, dp), MatRef<T>(out.data(), 1, d));
  for (std::size_t t = 0; t < d; ++t) out[t] += z[t];
  if (cache) cache->mean = std::move(mean);
  return out;
}

template <typename T>
inline std::vector<T> mean_fusion_backward(nn::ParamSet<T>& set,
                                           const MeanFusionLayout& layout,
                                           const MeanFusionCache<T>& cache,
                                           std::span<const T> d_out) {
  const std::size_t d = layout.dim, dp = layout.value_dim;
  if (d_out.size() != d)
    throw std::invalid_argument("mean_fusion_backward: bad gradient size");
  auto& ow = set[layout.out_w];
  std::vector<T> dmean(dp);
  affine_backward<T>(CMatRef<T>(ow.value.data(), dp, d),
                     CMatRef<T>(cache.mean.data(), 1, dp),
                     CMatRef<T>(d_out.data(), 1, d),
                     MatRef<T>(ow.grad.data(), dp, d),
                     set[layout.out_b].grad.data(),
                     MatRef<T>(dmean.data(), 1, dp));
  // residual
  return std::vector<T>(d_out.begin(), d_out.end());
}

// Per-layer attention weights for one query, for inspection and dumping.
struct FusionTrace {
  std::vector<std::uint64_t> ids;
  std::vector<std::vector<float>> layers;
  std::vector<float> refined;

  double refined_norm() const { return norm2<float>(refined.data(), refined.size()); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["ids"] = ids;
    j["layers"] = layers;
    j["refined_norm"] = refined_norm();
    return j;
  }
};

inline FusionTrace attention_trace(const nn::ParamSet<float>& set,
                                   const MamLayout& layout,
                                   std::span<const float> z, CMatRef<float> keys,
                                   CMatRef<float> values,
                                   std::span<const std::uint64_t> ids) {
  FusionTrace trace;
  trace.ids.assign(ids.begin(), ids.end());
  trace.refined =
      mam_forward<float>(set, layout, z, keys, values, nullptr, &trace.layers);
  return trace;
}

}  // namespace racm
