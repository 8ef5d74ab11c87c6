#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "racm/fusion.hpp"
#include "racm/nn/grad_check.hpp"
#include "racm/rng.hpp"

using namespace racm;
using racm::nn::ParamSet;

namespace {

template <typename T>
Mat<T> random_mat(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Mat<T> m(r, c);
  for (auto& v : m.data) v = static_cast<T>(scale * rng.normal());
  return m;
}

template <typename T>
std::vector<T> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return v;
}

// Shared fixture pieces for double-precision gradient checks: the query is
// registered as a param so its gradient is checked alongside the weights.
struct MamCase {
  ParamSet<double> set;
  MamLayout layout;
  std::size_t z_idx = 0;
  Mat<double> keys, values;
  std::vector<double> upstream;
};

MamCase make_mam_case(std::uint64_t seed, std::size_t layers, std::size_t d,
                      std::size_t dp, std::size_t k) {
  Rng rng(seed);
  MamCase c;
  c.z_idx = c.set.add("z", {d});
  c.layout = register_mam_params(c.set, d, dp, layers, rng);
  // Zero-initialized maps block gradient flow; randomize everything so the
  // check exercises every path.
  for (auto& p : c.set)
    for (auto& v : p.value) v += 0.3 * rng.normal();
  c.keys = random_mat<double>(rng, k, d);
  c.values = random_mat<double>(rng, k, dp);
  c.upstream = random_vec<double>(rng, d);
  return c;
}

nn::GradCheckReport run_mam_grad_check(MamCase& c, double fd_step = 1e-5) {
  c.set.zero_grads();
  MamCache<double> cache;
  const auto z = c.set[c.z_idx].value;
  mam_forward<double>(c.set, c.layout, z, c.keys, c.values, &cache);
  const auto dz =
      mam_backward<double>(c.set, c.layout, c.keys, c.values, cache, c.upstream);
  c.set[c.z_idx].grad = dz;

  auto loss = [&](const ParamSet<double>& ps) {
    const auto refined = mam_forward<double>(ps, c.layout, ps[c.z_idx].value,
                                             c.keys, c.values);
    double acc = 0.0;
    for (std::size_t t = 0; t < refined.size(); ++t)
      acc += refined[t] * c.upstream[t];
    return acc;
  };
  nn::GradCheckOptions opts;
  opts.fd_step = fd_step;
  return nn::grad_check(c.set, loss, opts);
}

}  // namespace

TEST(MeanFusion, ZeroInitIsIdentity) {
  ParamSet<float> set;
  const auto layout = register_mean_fusion_params(set, 8, 6);
  Rng rng(1);
  const auto z = random_vec<float>(rng, 8);
  const auto values = random_mat<float>(rng, 5, 6);
  const auto out = mean_fusion_forward<float>(set, layout, z, values);
  EXPECT_EQ(out, z);  // exact: zero map plus zero bias
}

TEST(MeanFusion, IdenticalRowsEqualSingleRow) {
  ParamSet<double> set;
  const auto layout = register_mean_fusion_params(set, 4, 3);
  Rng rng(2);
  for (auto& v : set[layout.out_w].value) v = rng.normal();
  for (auto& v : set[layout.out_b].value) v = rng.normal();
  const auto z = random_vec<double>(rng, 4);
  const auto v1 = random_vec<double>(rng, 3);
  Mat<double> one(1, 3), five(5, 3);
  for (int j = 0; j < 5; ++j)
    std::copy(v1.begin(), v1.end(), five.row(j));
  std::copy(v1.begin(), v1.end(), one.row(0));
  const auto a = mean_fusion_forward<double>(set, layout, z, one);
  const auto b = mean_fusion_forward<double>(set, layout, z, five);
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_NEAR(a[t], b[t], 1e-12);
}

TEST(MeanFusion, MatchesDirectArithmetic) {
  const std::size_t d = 8, dp = 6, k = 5;
  ParamSet<double> set;
  const auto layout = register_mean_fusion_params(set, d, dp);
  Rng rng(3);
  for (auto& v : set[layout.out_w].value) v = rng.normal();
  for (auto& v : set[layout.out_b].value) v = rng.normal();
  const auto z = random_vec<double>(rng, d);
  const auto values = random_mat<double>(rng, k, dp);

  // Direct arithmetic oracle: z + (mean(V) W + b), written out long-hand.
  std::vector<double> mean(dp, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t t = 0; t < dp; ++t) mean[t] += values.at(j, t);
  for (auto& v : mean) v /= static_cast<double>(k);
  std::vector<double> expect(d);
  for (std::size_t col = 0; col < d; ++col) {
    double acc = set[layout.out_b].value[col];
    for (std::size_t t = 0; t < dp; ++t)
      acc += mean[t] * set[layout.out_w].value[t * d + col];
    expect[col] = z[col] + acc;
  }

  const auto out = mean_fusion_forward<double>(set, layout, z, values);
  for (std::size_t t = 0; t < d; ++t) EXPECT_NEAR(out[t], expect[t], 1e-12);
}

TEST(MeanFusion, RejectsEmptyRetrievedSet) {
  ParamSet<float> set;
  const auto layout = register_mean_fusion_params(set, 4, 3);
  const std::vector<float> z(4, 1.0f);
  Mat<float> empty(0, 3);
  EXPECT_THROW(mean_fusion_forward<float>(set, layout, z, empty),
               std::invalid_argument);
}

TEST(MeanFusion, GradientsMatchFiniteDifferences) {
  const std::size_t d = 6, dp = 4, k = 3;
  ParamSet<double> set;
  Rng rng(4);
  const auto z_idx = set.add("z", {d});
  const auto layout = register_mean_fusion_params(set, d, dp);
  for (auto& p : set)
    for (auto& v : p.value) v = rng.normal();
  const auto values = random_mat<double>(rng, k, dp);
  const auto upstream = random_vec<double>(rng, d);

  set.zero_grads();
  MeanFusionCache<double> cache;
  mean_fusion_forward<double>(set, layout, set[z_idx].value, values, &cache);
  const auto dz = mean_fusion_backward<double>(set, layout, cache, upstream);
  set[z_idx].grad = dz;
  auto loss = [&](const ParamSet<double>& ps) {
    const auto out =
        mean_fusion_forward<double>(ps, layout, ps[z_idx].value, values);
    double acc = 0.0;
    for (std::size_t t = 0; t < d; ++t) acc += out[t] * upstream[t];
    return acc;
  };
  EXPECT_LT(nn::grad_check(set, loss).max_rel_err, 1e-8);
}

TEST(Mam, ZeroInitIsIdentityBitwise) {
  for (const std::size_t layers : {1u, 2u, 8u}) {
    ParamSet<float> set;
    Rng rng(5);
    const auto layout = register_mam_params(set, 8, 6, layers, rng);
    const auto z = random_vec<float>(rng, 8);
    const auto keys = random_mat<float>(rng, 5, 8);
    const auto values = random_mat<float>(rng, 5, 6);
    const auto refined = mam_forward<float>(set, layout, z, keys, values);
    EXPECT_EQ(refined, z);
  }
}

TEST(Mam, SingleNeighborGetsFullWeight) {
  ParamSet<float> set;
  Rng rng(6);
  const auto layout = register_mam_params(set, 8, 6, 3, rng);
  for (auto& p : set)
    for (auto& v : p.value) v += 0.2f * static_cast<float>(rng.normal());
  const auto z = random_vec<float>(rng, 8);
  const auto keys = random_mat<float>(rng, 1, 8);
  const auto values = random_mat<float>(rng, 1, 6);
  std::vector<std::vector<float>> attn;
  mam_forward<float>(set, layout, z, keys, values, nullptr, &attn);
  ASSERT_EQ(attn.size(), 3u);
  for (const auto& layer : attn) {
    ASSERT_EQ(layer.size(), 1u);
    EXPECT_EQ(layer[0], 1.0f);
  }
}

TEST(Mam, IdentityProjectionsHandComputedSoftmax) {
  // query.w = key.w = I, biases 0, d = 4: z = e0, keys rows e0, e1, e2.
  // scores = (0.5, 0, 0); weights = softmax of that, computed by hand here.
  const std::size_t d = 4, dp = 3, k = 3;
  ParamSet<double> set;
  Rng rng(7);
  const auto layout = register_mam_params(set, d, dp, 1, rng);
  auto& qw = set[layout.layers[0].query_w];
  auto& kw = set[layout.layers[0].key_w];
  std::fill(qw.value.begin(), qw.value.end(), 0.0);
  std::fill(kw.value.begin(), kw.value.end(), 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    qw.value[i * d + i] = 1.0;
    kw.value[i * d + i] = 1.0;
  }
  std::vector<double> z(d, 0.0);
  z[0] = 1.0;
  Mat<double> keys(k, d);
  keys.at(0, 0) = 1.0;
  keys.at(1, 1) = 1.0;
  keys.at(2, 2) = 1.0;
  const auto values = random_mat<double>(rng, k, dp);

  std::vector<std::vector<double>> attn;
  mam_forward<double>(set, layout, z, keys, values, nullptr, &attn);
  const double e = std::exp(0.5);
  const double denom = e + 2.0;
  ASSERT_EQ(attn[0].size(), k);
  EXPECT_NEAR(attn[0][0], e / denom, 1e-12);
  EXPECT_NEAR(attn[0][1], 1.0 / denom, 1e-12);
  EXPECT_NEAR(attn[0][2], 1.0 / denom, 1e-12);
  EXPECT_GT(attn[0][0], attn[0][1]);
}

TEST(Mam, ZeroUpstreamGivesZeroGrads) {
  auto c = make_mam_case(8, 2, 5, 4, 3);
  c.set.zero_grads();
  MamCache<double> cache;
  const auto z = c.set[c.z_idx].value;
  mam_forward<double>(c.set, c.layout, z, c.keys, c.values, &cache);
  const std::vector<double> zero(5, 0.0);
  const auto dz =
      mam_backward<double>(c.set, c.layout, c.keys, c.values, cache, zero);
  for (const auto v : dz) EXPECT_EQ(v, 0.0);
  for (const auto& p : c.set)
    for (const auto g : p.grad) EXPECT_EQ(g, 0.0);
}

TEST(Mam, GradCheckSingleLayer) {
  auto c = make_mam_case(9, 1, 4, 3, 3);
  const auto report = run_mam_grad_check(c);
  EXPECT_LT(report.max_rel_err, 1e-5) << "worst: " << report.worst_param;
}

TEST(Mam, GradCheckPaperDepth) {
  auto c = make_mam_case(10, 8, 8, 6, 5);
  const auto report = run_mam_grad_check(c);
  EXPECT_LT(report.max_rel_err, 1e-4) << "worst: " << report.worst_param;
}

TEST(Mam, GradCheckManySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = make_mam_case(100 + seed, 1 + seed % 3, 6, 4, 4);
    const auto report = run_mam_grad_check(c);
    EXPECT_LT(report.max_rel_err, 1e-4)
        << "seed " << seed << " worst " << report.worst_param;
  }
}

TEST(Mam, AttentionSimplexProperty) {
  Rng meta(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + meta.next_below(12);
    const std::size_t dp = 1 + meta.next_below(8);
    const std::size_t k = 1 + meta.next_below(12);
    const std::size_t layers = 1 + meta.next_below(4);
    ParamSet<float> set;
    Rng rng(1000 + trial);
    const auto layout = register_mam_params(set, d, dp, layers, rng);
    for (auto& p : set)
      for (auto& v : p.value) v += 0.5f * static_cast<float>(rng.normal());
    const auto z = random_vec<float>(rng, d);
    const auto keys = random_mat<float>(rng, k, d);
    const auto values = random_mat<float>(rng, k, dp);
    std::vector<std::vector<float>> attn;
    mam_forward<float>(set, layout, z, keys, values, nullptr, &attn);
    ASSERT_EQ(attn.size(), layers);
    for (const auto& layer : attn) {
      double sum = 0.0;
      for (const auto w : layer) {
        EXPECT_GT(w, 0.0f);
        sum += w;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Mam, JointPermutationInvariance) {
  Rng meta(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 4 + meta.next_below(8);
    const std::size_t dp = 2 + meta.next_below(6);
    const std::size_t k = 2 + meta.next_below(10);
    ParamSet<float> set;
    Rng rng(2000 + trial);
    const auto layout = register_mam_params(set, d, dp, 2, rng);
    for (auto& p : set)
      for (auto& v : p.value) v += 0.4f * static_cast<float>(rng.normal());
    const auto z = random_vec<float>(rng, d);
    const auto keys = random_mat<float>(rng, k, d);
    const auto values = random_mat<float>(rng, k, dp);

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = k; i > 1; --i)
      std::swap(perm[i - 1], perm[rng.next_below(i)]);
    Mat<float> pkeys(k, d), pvalues(k, dp);
    for (std::size_t j = 0; j < k; ++j) {
      std::copy_n(keys.row(perm[j]), d, pkeys.row(j));
      std::copy_n(values.row(perm[j]), dp, pvalues.row(j));
    }

    const auto a = mam_forward<float>(set, layout, z, keys, values);
    const auto b = mam_forward<float>(set, layout, z, pkeys, pvalues);
    for (std::size_t t = 0; t < d; ++t) EXPECT_NEAR(a[t], b[t], 1e-6);
  }
}

TEST(Mam, QueryScalingKeepsLayerOneArgmax) {
  // query.b is zero at registration, so layer-1 scores are linear in z and
  // positive scaling cannot move the argmax.
  Rng meta(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 4 + meta.next_below(8);
    const std::size_t k = 3 + meta.next_below(8);
    ParamSet<float> set;
    Rng rng(3000 + trial);
    const auto layout = register_mam_params(set, d, 3, 1, rng);
    // Randomize key bias and both weight matrices, keep query bias zero.
    for (auto& v : set[layout.layers[0].key_b].value)
      v = 0.3f * static_cast<float>(rng.normal());
    const auto z = random_vec<float>(rng, d);
    const auto keys = random_mat<float>(rng, k, d);
    const auto values = random_mat<float>(rng, k, 3);
    const float c = static_cast<float>(rng.uniform(0.1, 10.0));
    std::vector<float> scaled(z);
    for (auto& v : scaled) v *= c;

    std::vector<std::vector<float>> attn_a, attn_b;
    mam_forward<float>(set, layout, z, keys, values, nullptr, &attn_a);
    mam_forward<float>(set, layout, scaled, keys, values, nullptr, &attn_b);
    const auto argmax = [](const std::vector<float>& w) {
      return std::distance(w.begin(), std::max_element(w.begin(), w.end()));
    };
    EXPECT_EQ(argmax(attn_a[0]), argmax(attn_b[0]));
  }
}

TEST(Trace, MatchesForwardBitwise) {
  ParamSet<float> set;
  Rng rng(14);
  const auto layout = register_mam_params(set, 8, 4, 3, rng);
  for (auto& p : set)
    for (auto& v : p.value) v += 0.3f * static_cast<float>(rng.normal());
  const auto z = random_vec<float>(rng, 8);
  const auto keys = random_mat<float>(rng, 6, 8);
  const auto values = random_mat<float>(rng, 6, 4);
  const std::vector<std::uint64_t> ids{4, 8, 15, 16, 23, 42};

  std::vector<std::vector<float>> attn;
  const auto refined =
      mam_forward<float>(set, layout, z, keys, values, nullptr, &attn);
  const auto trace = attention_trace(set, layout, z, keys, values, ids);
  EXPECT_EQ(trace.ids, ids);
  ASSERT_EQ(trace.layers.size(), attn.size());
  for (std::size_t l = 0; l < attn.size(); ++l)
    EXPECT_EQ(trace.layers[l], attn[l]);
  EXPECT_EQ(trace.refined, refined);

  const auto j = trace.to_json();
  EXPECT_EQ(j["ids"].size(), 6u);
  EXPECT_EQ(j["layers"].size(), 3u);
  EXPECT_NEAR(j["refined_norm"].get<double>(),
              norm2<float>(refined.data(), refined.size()), 1e-12);
}

TEST(Trace, UniformRowsUniformWeights) {
  ParamSet<float> set;
  Rng rng(15);
  const auto layout = register_mam_params(set, 6, 3, 1, rng);
  const auto z = random_vec<float>(rng, 6);
  const auto row = random_vec<float>(rng, 6);
  Mat<float> keys(4, 6), values(4, 3);
  for (int j = 0; j < 4; ++j) std::copy(row.begin(), row.end(), keys.row(j));
  const std::vector<std::uint64_t> ids{0, 1, 2, 3};
  const auto trace = attention_trace(set, layout, z, keys, values, ids);
  for (const auto w : trace.layers[0]) EXPECT_NEAR(w, 0.25, 1e-7);
}
