#pragma once
// Training and evaluation harness. Default recipe: Adam (decoupled weight
// decay 0.2), lr 0.001 with one warmup epoch then cosine decay to zero,
// 10 epochs, label smoothing 0.1, logit adjustment for imbalanced counts,
// retrieval context served from a precomputed k-NN cache whose digest is
// checked against the actual (store, queries, k) triple.
//
// Determinism: model init, shuffling, fixed-size gradient chunks merged in
// chunk order, and serialized optimizer updates make the whole train loop
// bit-reproducible for a fixed seed, independent of the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "racm/dataset.hpp"
#include "racm/datagen.hpp"
#include "racm/exact_index.hpp"
#include "racm/knn_cache.hpp"
#include "racm/losses.hpp"
#include "racm/model.hpp"
#include "racm/nn/adam.hpp"
#include "racm/nn/schedule.hpp"
#include "racm/parallel.hpp"
#include "racm/store.hpp"

namespace racm {

struct Metrics {
  double overall = 0.0;
  double many = 0.0, mid = 0.0, low = 0.0;
  std::uint64_t many_n = 0, mid_n = 0, low_n = 0;
  std::vector<double> per_class;
  std::vector<std::uint64_t> per_class_n;
  std::uint64_t n = 0;

  bool operator==(const Metrics&) const = default;

  nlohmann::json to_json() const {
    return {{"overall", overall}, {"many", many},     {"mid", mid},
            {"low", low},         {"many_n", many_n}, {"mid_n", mid_n},
            {"low_n", low_n},     {"n", n},           {"per_class", per_class},
            {"per_class_n", per_class_n}};
  }
};

namespace detail {

// Copies the retrieved rows for one query out of the store.
inline void gather_neighbors(const MemoryStore& store,
                             std::span<const SearchHit> hits, Mat<float>& keys,
                             Mat<float>& values) {
  keys.rows = hits.size();
  keys.cols = store.key_dim;
  keys.data.resize(hits.size() * store.key_dim);
  values.rows = hits.size();
  values.cols = store.value_dim;
  values.data.resize(hits.size() * store.value_dim);
  for (std::size_t j = 0; j < hits.size(); ++j) {
    const auto id = hits[j].id;
    std::copy_n(store.keys.row(id), store.key_dim, keys.row(j));
    std::copy_n(store.values.row(id), store.value_dim, values.row(j));
  }
}

}  // namespace detail

// Predictions for every example given per-query neighbor lists (empty lists
// are only legal for non-retrieval modes). Argmax ties resolve to the
// smaller class id.
inline std::vector<std::int32_t> predict_with_hits(
    const Model<float>& model, const DownstreamDataset& ds,
    const MemoryStore* store,
    const std::vector<std::vector<SearchHit>>& hits) {
  const bool retrieval = uses_retrieval(model.cfg.mode);
  if (retrieval && hits.size() != ds.size())
    throw std::invalid_argument("predict: one neighbor list per example required");
  std::vector<std::int32_t> pred(ds.size(), 0);
  parallel_chunks(ds.size(), 64, [&](std::size_t, std::size_t beg, std::size_t end) {
    Mat<float> keys, values;
    for (std::size_t i = beg; i < end; ++i) {
      if (retrieval) detail::gather_neighbors(*store, hits[i], keys, values);
      const auto logits =
          model_forward<float>(model, ds.embeddings.row_span(i), keys, values);
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = c;
      pred[i] = static_cast<std::int32_t>(best);
    }
  });
  return pred;
}

// Accuracy breakdown. Shot categories are decided by the TRAINING class
// counts; the metrics are computed on this (usually balanced) split.
inline Metrics metrics_from_predictions(
    const DownstreamDataset& ds, std::span<const std::int32_t> pred,
    std::span<const std::uint32_t> train_class_counts, ShotThresholds thresholds) {
  if (ds.size() == 0) throw std::invalid_argument("empty evaluation set");
  const auto cats = shot_categories(train_class_counts, thresholds);
  Metrics m;
  m.per_class.assign(ds.num_classes, 0.0);
  m.per_class_n.assign(ds.num_classes, 0);
  std::vector<std::uint64_t> correct(ds.num_classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    m.per_class_n[c] += 1;
    if (pred[i] == ds.labels[i]) correct[c] += 1;
  }
  std::uint64_t total_correct = 0;
  std::uint64_t cat_n[3] = {0, 0, 0};
  std::uint64_t cat_correct[3] = {0, 0, 0};
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    total_correct += correct[c];
    m.per_class[c] = m.per_class_n[c] == 0
                         ? 0.0
                         : static_cast<double>(correct[c]) /
                               static_cast<double>(m.per_class_n[c]);
    const auto cat = static_cast<std::size_t>(cats[c]);
    cat_n[cat] += m.per_class_n[c];
    cat_correct[cat] += correct[c];
  }
  m.n = ds.size();
  m.overall = static_cast<double>(total_correct) / static_cast<double>(m.n);
  auto ratio = [](std::uint64_t a, std::uint64_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.many = ratio(cat_correct[0], cat_n[0]);
  m.mid = ratio(cat_correct[1], cat_n[1]);
  m.low = ratio(cat_correct[2], cat_n[2]);
  m.many_n = cat_n[0];
  m.mid_n = cat_n[1];
  m.low_n = cat_n[2];
  return m;
}

inline Metrics evaluate_with_hits(const Model<float>& model,
                                  const DownstreamDataset& ds,
                                  std::span<const std::uint32_t> train_counts,
                                  const MemoryStore* store,
                                  const std::vector<std::vector<SearchHit>>& hits,
                                  ShotThresholds thresholds = {}) {
  const auto pred = predict_with_hits(model, ds, store, hits);
  return metrics_from_predictions(ds, pred, train_counts, thresholds);
}

// Live-retrieval evaluation. Index is any type with the query interface
// (ExactIndex uses its batched path).
template <typename Index>
inline Metrics evaluate(const Model<float>& model, const DownstreamDataset& ds,
                        std::span<const std::uint32_t> train_counts,
                        const MemoryStore& store, const Index& index,
                        std::uint32_t k, ShotThresholds thresholds = {},
                        std::uint32_t n_probe = 0) {
  std::vector<std::vector<SearchHit>> hits;
  if (uses_retrieval(model.cfg.mode)) {
    if constexpr (std::is_same_v<Index, ExactIndex>) {
      (void)n_probe;
      hits = index.query_batch(ds.embeddings, k);
    } else {
      hits.resize(ds.size());
      parallel_chunks(ds.size(), 16, [&](std::size_t, std::size_t beg, std::size_t end) {
        QueryOptions opts;
        opts.n_probe = n_probe;
        for (std::size_t i = beg; i < end; ++i)
          hits[i] = index.query(ds.embeddings.row_span(i), k, opts);
      });
    }
  }
  return evaluate_with_hits(model, ds, train_counts, &store, hits, thresholds);
}

struct TrainHyper {
  std::uint32_t epochs = 10;
  std::uint32_t batch = 0;  // 0 -> min(512, max(1, N/10))
  double lr = 1e-3;
  double weight_decay = 0.2;
  double warmup_epochs = 1.0;
  std::uint32_t k = 100;
  double tau = 0.0;  // logit adjustment strength; 0 for balanced data
  double label_smoothing = 0.1;
  std::uint64_t seed = 1;
  ShotThresholds thresholds{};
  // How the k-NN cache was built; folded into the digest check.
  bool cache_excludes_self = false;
  std::string cache_index_desc = "exact";
};

struct EpochRecord {
  std::uint32_t epoch = 0;
  double loss = 0.0;
  Metrics eval;
};

inline nlohmann::json history_line(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"loss", r.loss},   {"overall", r.eval.overall},
          {"many", r.eval.many}, {"mid", r.eval.mid}, {"low", r.eval.low}};
}

struct TrainResult {
  Model<float> model;
  std::vector<EpochRecord> history;
};

inline std::uint32_t default_batch_size(std::size_t n) {
  const std::size_t tenth = std::max<std::size_t>(1, n / 10);
  return static_cast<std::uint32_t>(std::min<std::size_t>(512, tenth));
}

// Trains the head (and fusion parameters) on the given split. Retrieval
// modes consume the precomputed cache; its digest must match the
// (store, train embeddings, k, exclusion) the caller holds. When eval_ds is
// given, per-epoch history carries its metrics (retrieved once up front —
// store and index are frozen, so live queries would return the same lists
// every epoch); otherwise history reports metrics on the training split.
inline TrainResult train(const ModelConfig& cfg,
                         const DownstreamDataset& train_ds,
                         const MemoryStore& store, const KnnCache* cache,
                         const TrainHyper& hyper,
                         const DownstreamDataset* eval_ds = nullptr) {
  train_ds.validate();
  if (train_ds.size() == 0)
    throw std::invalid_argument("train: empty training set");
  if (cfg.dim != train_ds.dim || cfg.num_classes != train_ds.num_classes)
    throw std::invalid_argument("train: model config does not match dataset");
  const bool retrieval = uses_retrieval(cfg.mode);
  if (retrieval) {
    if (cache == nullptr)
      throw std::invalid_argument("train: retrieval mode requires a knn cache");
    if (store.key_dim != cfg.dim || store.value_dim != cfg.value_dim)
      throw std::invalid_argument("train: store dims do not match model config");
    const auto expected =
        cache_digest(hyper.cache_index_desc, store, train_ds.embeddings,
                     hyper.k, hyper.cache_excludes_self);
    validate_cache(*cache, expected);
    // The digest covers the cache's inputs, not its rows; a damaged file
    // with an intact digest field must still not index past the store.
    for (const auto& row : cache->rows)
      for (const auto& hit : row)
        if (hit.id >= store.count())
          throw io_error(io_errc::corrupt, "knn cache row id out of range");
  }
  // Throws on empty classes when tau > 0.
  const std::vector<float> adjustment =
      lace_adjustment<float>(train_ds.class_counts, hyper.tau);
  bool any_adjust = false;
  for (const auto a : adjustment) any_adjust |= (a != 0.0f);

  const std::size_t n = train_ds.size();
  const std::uint32_t batch =
      hyper.batch == 0 ? default_batch_size(n)
                       : std::min<std::uint32_t>(hyper.batch, n);
  const std::uint64_t steps_per_epoch = (n + batch - 1) / batch;
  nn::Schedule sched;
  sched.total_steps = steps_per_epoch * hyper.epochs;
  sched.warmup_steps = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(
             std::llround(hyper.warmup_epochs * steps_per_epoch)));
  sched.base_lr = hyper.lr;

  Model<float> model = make_model<float>(cfg, hyper.seed);
  nn::AdamConfig adam_cfg;
  adam_cfg.weight_decay = hyper.weight_decay;
  adam_cfg.base_lr = hyper.lr;
  nn::AdamState<float> adam(model.params, adam_cfg);

  // Per-epoch eval retrieval lists are fixed; fetch them once.
  std::vector<std::vector<SearchHit>> eval_hits;
  if (eval_ds != nullptr && retrieval) {
    ExactIndex index(store);
    eval_hits = index.query_batch(eval_ds->embeddings, hyper.k);
  }

  // Fixed-size gradient chunks; each slot owns a model replica so chunk
  // backward passes never share accumulators.
  constexpr std::size_t kChunk = 16;
  const std::size_t n_slots = (batch + kChunk - 1) / kChunk;
  std::vector<Model<float>> slots(n_slots, model);
  std::vector<double> slot_loss(n_slots, 0.0);

  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);

  const Rng base(hyper.seed);
  const std::vector<std::vector<SearchHit>> no_hits;
  TrainResult result{std::move(model), {}};
  std::uint64_t step = 0;
  for (std::uint32_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng = base.derive(90000 + epoch);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t bs = std::min<std::size_t>(batch, n - b0);
      const float inv_bs = 1.0f / static_cast<float>(bs);
      const std::size_t used_slots = (bs + kChunk - 1) / kChunk;
      for (std::size_t s = 0; s < used_slots; ++s) {
        slots[s].params = result.model.params;
        slots[s].params.zero_grads();
        slot_loss[s] = 0.0;
      }
      parallel_chunks(bs, kChunk, [&](std::size_t c, std::size_t beg, std::size_t end) {
        Model<float>& local = slots[c];
        ModelCache<float> mcache;
        Mat<float> keys, values;
        for (std::size_t e = beg; e < end; ++e) {
          const std::size_t i = order[b0 + e];
          if (retrieval) {
            const auto& row = (*cache).rows[i];
            if (row.empty())
              throw std::invalid_argument(
                  "train: cached neighbor list is empty");
            detail::gather_neighbors(store, row, keys, values);
          }
          auto logits = model_forward<float>(
              local, train_ds.embeddings.row_span(i), keys, values, &mcache);
          if (any_adjust)
            for (std::size_t cix = 0; cix < logits.size(); ++cix)
              logits[cix] += adjustment[cix];
          auto lg = ce_label_smoothing<float>(
              logits, static_cast<std::size_t>(train_ds.labels[i]),
              hyper.label_smoothing);
          slot_loss[c] += static_cast<double>(lg.loss);
          for (auto& g : lg.dlogits) g *= inv_bs;
          model_backward<float>(local, mcache, keys, values, lg.dlogits);
        }
      });
      // Merge chunk gradients in slot order.
      auto& params = result.model.params;
      params.zero_grads();
      for (std::size_t s = 0; s < used_slots; ++s) {
        epoch_loss += slot_loss[s];
        for (std::size_t p = 0; p < params.size(); ++p) {
          const auto& src = slots[s].params[p].grad;
          auto& dst = params[p].grad;
          for (std::size_t e2 = 0; e2 < dst.size(); ++e2) dst[e2] += src[e2];
        }
      }
      adam.step(params, nn::lr_at(sched, step));
      step += 1;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = epoch_loss / static_cast<double>(n);
    if (eval_ds != nullptr) {
      rec.eval = evaluate_with_hits(result.model, *eval_ds,
                                    train_ds.class_counts, &store, eval_hits,
                                    hyper.thresholds);
    } else {
      rec.eval = evaluate_with_hits(result.model, train_ds,
                                    train_ds.class_counts, &store,
                                    retrieval ? cache->rows : no_hits,
                                    hyper.thresholds);
    }
    result.history.push_back(std::move(rec));
  }
  return result;
}

// Evaluates the same trained model against a memory store before and after
// merging extra rows in; no parameters change in between.
inline std::pair<Metrics, Metrics> grow_memory_eval(
    const Model<float>& model, const DownstreamDataset& eval_ds,
    std::span<const std::uint32_t> train_counts, const MemoryStore& small_store,
    const MemoryStore& extra_store, std::uint32_t k,
    ShotThresholds thresholds = {}) {
  const ExactIndex before_index(small_store);
  const Metrics before = evaluate(model, eval_ds, train_counts, small_store,
                                  before_index, k, thresholds);
  const MemoryStore grown = merge(small_store, extra_store);
  const ExactIndex after_index(grown);
  const Metrics after =
      evaluate(model, eval_ds, train_counts, grown, after_index, k, thresholds);
  return {before, after};
}

}  // namespace racm
