#pragma once
// Synthetic benchmark generation. Classes are unit-sphere prototypes;
// examples are normalized Gaussian perturbations around them. Per-class
// training counts decay exponentially from head_count to tail_count, the
// eval split is balanced. Memory stores mix "relevant" rows (keys near the
// class prototypes, values carrying a class signal) with distractor rows
// (uniform keys, noise values); relevant rows carry class_hint metadata,
// distractors carry null. All generation is seed-deterministic through
// per-class derived streams.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "racm/dataset.hpp"
#include "racm/mat.hpp"
#include "racm/rng.hpp"
#include "racm/store.hpp"

namespace racm {

enum class ValueMode { echo_visual, text_proxy };

inline std::string to_string(ValueMode m) {
  return m == ValueMode::echo_visual ? "echo_visual" : "text_proxy";
}

inline ValueMode value_mode_from_string(const std::string& s) {
  if (s == "echo_visual") return ValueMode::echo_visual;
  if (s == "text_proxy") return ValueMode::text_proxy;
  throw std::invalid_argument("unknown value mode: " + s);
}

struct LongTailSpec {
  std::uint32_t classes = 20;
  std::uint32_t head_count = 100;  // train examples for class 0
  std::uint32_t tail_count = 5;    // train examples for the last class
  std::uint32_t dim = 64;
  double sigma = 0.3;  // cluster spread
  std::uint32_t eval_per_class = 50;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const {
    return {{"classes", classes},   {"head_count", head_count},
            {"tail_count", tail_count}, {"dim", dim},
            {"sigma", sigma},       {"eval_per_class", eval_per_class},
            {"seed", seed}};
  }
};

struct MemorySpec {
  std::uint64_t size = 50000;
  double relevant_fraction = 0.02;   // split evenly across classes
  double distractor_fraction = 0.0;  // remainder beyond relevant is always
                                     // distractor; kept for config echo
  ValueMode value_mode = ValueMode::text_proxy;
  std::uint32_t value_dim = 32;
  double key_noise = 0.1;    // spread of relevant keys around prototypes
  double value_noise = 0.1;  // spread of relevant values
  std::uint64_t seed = 7;

  nlohmann::json to_json() const {
    return {{"size", size},
            {"relevant_fraction", relevant_fraction},
            {"distractor_fraction", distractor_fraction},
            {"value_mode", to_string(value_mode)},
            {"value_dim", value_dim},
            {"key_noise", key_noise},
            {"value_noise", value_noise},
            {"seed", seed}};
  }
};

// count_c = round(head * (tail/head)^(c/(C-1))): non-increasing, exact at
// both endpoints.
inline std::vector<std::uint32_t> longtail_counts(const LongTailSpec& spec) {
  std::vector<std::uint32_t> counts(spec.classes);
  const double ratio = static_cast<double>(spec.tail_count) /
                       static_cast<double>(spec.head_count);
  for (std::uint32_t c = 0; c < spec.classes; ++c) {
    const double frac = static_cast<double>(c) /
                        static_cast<double>(spec.classes - 1);
    counts[c] = static_cast<std::uint32_t>(
        std::llround(spec.head_count * std::pow(ratio, frac)));
  }
  return counts;
}

namespace detail {

inline void fill_gaussian(Rng& rng, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(rng.normal());
}

inline void sample_on_sphere(Rng& rng, float* out, std::size_t n) {
  std::vector<float> g(n);
  fill_gaussian(rng, g.data(), n);
  normalize_into(g.data(), n, out);
}

// normalize(center + noise * g); copies the center exactly when noise == 0.
inline void sample_cluster_point(Rng& rng, const float* center, std::size_t n,
                                 double noise, float* out) {
  if (noise == 0.0) {
    std::copy_n(center, n, out);
    return;
  }
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = center[i] + static_cast<float>(noise * rng.normal());
  normalize_into(v.data(), n, out);
}

}  // namespace detail

struct LongTailData {
  DownstreamDataset train;
  DownstreamDataset eval;
  Mat<float> prototypes;  // classes x dim, unit rows
};

inline LongTailData gen_longtail(const LongTailSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (spec.dim < 2) throw std::invalid_argument("need dim >= 2");
  if (spec.tail_count < 1 || spec.head_count < spec.tail_count)
    throw std::invalid_argument("need head_count >= tail_count >= 1");
  if (spec.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (spec.eval_per_class < 1)
    throw std::invalid_argument("eval_per_class must be >= 1");

  const Rng base(spec.seed);
  LongTailData out;
  out.prototypes = Mat<float>(spec.classes, spec.dim);
  for (std::uint32_t c = 0; c < spec.classes; ++c) {
    Rng rng = base.derive(1000 + c);
    detail::sample_on_sphere(rng, out.prototypes.row(c), spec.dim);
  }

  const auto counts = longtail_counts(spec);
  auto make_split = [&](const std::vector<std::uint32_t>& per_class,
                        std::uint64_t tag, const std::string& name) {
    DownstreamDataset ds;
    ds.dim = spec.dim;
    ds.num_classes = spec.classes;
    ds.split = name;
    ds.class_counts = per_class;
    std::uint64_t total = 0;
    for (const auto n : per_class) total += n;
    ds.embeddings = Mat<float>(total, spec.dim);
    ds.labels.reserve(total);
    std::size_t row = 0;
    for (std::uint32_t c = 0; c < spec.classes; ++c) {
      Rng rng = base.derive(tag + c);
      for (std::uint32_t i = 0; i < per_class[c]; ++i, ++row) {
        detail::sample_cluster_point(rng, out.prototypes.row(c), spec.dim,
                                     spec.sigma, ds.embeddings.row(row));
        ds.labels.push_back(static_cast<std::int32_t>(c));
      }
    }
    ds.validate();
    return ds;
  };
  out.train = make_split(counts, 2000, "train");
  out.eval = make_split(
      std::vector<std::uint32_t>(spec.classes, spec.eval_per_class), 3000,
      "eval");
  return out;
}

inline MemoryStore gen_memory(const Mat<float>& prototypes,
                              const MemorySpec& spec,
                              const std::string& source_tag = "synthetic") {
  if (spec.size == 0) throw std::invalid_argument("memory size must be >= 1");
  if (spec.value_dim == 0)
    throw std::invalid_argument("value_dim must be >= 1");
  if (spec.relevant_fraction < 0.0 || spec.relevant_fraction > 1.0 ||
      spec.distractor_fraction < 0.0 ||
      spec.relevant_fraction + spec.distractor_fraction > 1.0 + 1e-12)
    throw std::invalid_argument("memory fractions must lie in [0,1] and sum <= 1");
  const std::uint32_t C = prototypes.rows;
  const std::uint32_t d = prototypes.cols;
  if (C == 0 || d == 0)
    throw std::invalid_argument("gen_memory needs class prototypes");

  const Rng base(spec.seed);
  MemoryStore store = MemoryStore::create(d, spec.value_dim);

  // Value-space class anchors (text_proxy) and key->value projection
  // (echo_visual with value_dim != dim).
  Mat<float> value_protos;
  if (spec.value_mode == ValueMode::text_proxy) {
    value_protos = Mat<float>(C, spec.value_dim);
    for (std::uint32_t c = 0; c < C; ++c) {
      Rng rng = base.derive(5000 + c);
      detail::sample_on_sphere(rng, value_protos.row(c), spec.value_dim);
    }
  }
  Mat<float> proj;
  const bool needs_proj =
      spec.value_mode == ValueMode::echo_visual && spec.value_dim != d;
  if (needs_proj) {
    proj = Mat<float>(d, spec.value_dim);
    Rng rng = base.derive(4000);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : proj.data)
      v = static_cast<float>(scale * rng.normal());
  }

  const std::uint64_t n_rel = static_cast<std::uint64_t>(
      std::llround(spec.relevant_fraction * static_cast<double>(spec.size)));
  std::vector<float> key(d), value(spec.value_dim), mapped(spec.value_dim);

  for (std::uint32_t c = 0; c < C; ++c) {
    const std::uint64_t n_c = n_rel / C + (c < n_rel % C ? 1 : 0);
    Rng rng = base.derive(6000 + c);
    for (std::uint64_t i = 0; i < n_c; ++i) {
      detail::sample_cluster_point(rng, prototypes.row(c), d, spec.key_noise,
                                   key.data());
      if (spec.value_mode == ValueMode::text_proxy) {
        detail::sample_cluster_point(rng, value_protos.row(c), spec.value_dim,
                                     spec.value_noise, value.data());
      } else {
        if (needs_proj) {
          for (std::uint32_t t = 0; t < spec.value_dim; ++t) {
            float acc = 0.0f;
            for (std::uint32_t s = 0; s < d; ++s)
              acc += key[s] * proj.at(s, t);
            mapped[t] = acc;
          }
          normalize_into(mapped.data(), spec.value_dim, mapped.data());
        } else {
          std::copy(key.begin(), key.end(), mapped.begin());
        }
        detail::sample_cluster_point(rng, mapped.data(), spec.value_dim,
                                     spec.value_noise, value.data());
      }
      store.append(key, value,
                   {source_tag, static_cast<std::int64_t>(c)});
    }
  }

  Rng rng = base.derive(7000);
  while (store.count() < spec.size) {
    detail::sample_on_sphere(rng, key.data(), d);
    detail::sample_on_sphere(rng, value.data(), spec.value_dim);
    store.append(key, value, {source_tag, std::nullopt});
  }
  return store;
}

enum class ShotCategory { many, mid, low };

struct ShotThresholds {
  std::uint32_t many_min = 100;  // count > many_min  -> many
  std::uint32_t low_max = 20;    // count < low_max   -> low
};

inline std::vector<ShotCategory> shot_categories(
    std::span<const std::uint32_t> class_counts, ShotThresholds t = {}) {
  if (t.low_max < 1 || t.many_min <= t.low_max)
    throw std::invalid_argument("shot thresholds need many_min > low_max >= 1");
  std::vector<ShotCategory> out(class_counts.size());
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] > t.many_min)
      out[c] = ShotCategory::many;
    else if (class_counts[c] < t.low_max)
      out[c] = ShotCategory::low;
    else
      out[c] = ShotCategory::mid;
  }
  return out;
}

}  // namespace racm
