#pragma once
// Inverted-file index over unit-norm memory keys. Coarse quantizer is a
// spherical k-means (k-means++ seeding, centroids renormalized every
// iteration); a query scans the n_probe posting lists whose centroids score
// highest. With n_probe = n_lists the candidate set is the whole store and
// results match ExactIndex exactly, tie-breaks included.
//
// Build is seed-deterministic: assignments are embarrassingly parallel and
// centroid accumulation merges fixed-size chunks in chunk order, so the
// result does not depend on the worker count.
//
// On-disk ("RACI"): magic | u32 version | u32 dim | u32 n_lists | u64 seed |
// u64 count | 32-byte store-key digest | centroids f32 | per list u64 len +
// u64 ids.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "racm/exact_index.hpp"
#include "racm/io.hpp"
#include "racm/mat.hpp"
#include "racm/parallel.hpp"
#include "racm/rng.hpp"
#include "racm/store.hpp"

namespace racm {

inline std::uint32_t default_n_lists(std::size_t count) {
  const auto r = static_cast<std::uint32_t>(
      std::llround(std::sqrt(static_cast<double>(count))));
  return std::max<std::uint32_t>(1, std::min<std::uint32_t>(r, count));
}

inline std::uint32_t default_n_probe(std::uint32_t n_lists) {
  return std::max<std::uint32_t>(1, n_lists / 16);
}

class IvfIndex {
 public:
  static constexpr int kDefaultKmeansIters = 25;

  static IvfIndex build(const MemoryStore& store, std::uint32_t n_lists,
                        std::uint64_t seed,
                        int max_kmeans_iters = kDefaultKmeansIters) {
    if (store.count() == 0)
      throw std::invalid_argument("cannot index an empty store");
    if (n_lists == 0) throw std::invalid_argument("n_lists must be >= 1");
    if (n_lists > store.count())
      throw std::invalid_argument("n_lists exceeds store count");

    IvfIndex idx;
    idx.store_ = &store;
    idx.seed_ = seed;
    idx.n_lists_ = n_lists;
    idx.centroids_ = kmeans_pp_seed(store, n_lists, seed);

    const std::size_t n = store.count();
    const std::uint32_t d = store.key_dim;
    std::vector<std::uint32_t> assign(n, 0);
    constexpr std::size_t kChunk = 4096;
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;

    for (int iter = 0; iter < max_kmeans_iters; ++iter) {
      bool changed = false;
      std::vector<std::uint8_t> chunk_changed(n_chunks, 0);
      parallel_chunks(n, kChunk, [&](std::size_t c, std::size_t beg, std::size_t end) {
        for (std::size_t i = beg; i < end; ++i) {
          const std::uint32_t best =
              nearest_centroid(idx.centroids_, store.keys.row(i), d);
          if (best != assign[i]) {
            assign[i] = best;
            chunk_changed[c] = 1;
          }
        }
      });
      for (auto f : chunk_changed) changed |= (f != 0);
      if (iter > 0 && !changed) break;

      // Recompute centroids: per-chunk partial sums merged in chunk order.
      std::vector<Mat<double>> sums(n_chunks);
      std::vector<std::vector<std::uint64_t>> cnts(n_chunks);
      parallel_chunks(n, kChunk, [&](std::size_t c, std::size_t beg, std::size_t end) {
        sums[c] = Mat<double>(n_lists, d);
        cnts[c].assign(n_lists, 0);
        for (std::size_t i = beg; i < end; ++i) {
          double* srow = sums[c].row(assign[i]);
          const float* key = store.keys.row(i);
          for (std::uint32_t t = 0; t < d; ++t) srow[t] += key[t];
          cnts[c][assign[i]] += 1;
        }
      });
      Mat<double> total(n_lists, d);
      std::vector<std::uint64_t> count(n_lists, 0);
      for (std::size_t c = 0; c < n_chunks; ++c) {
        for (std::size_t e = 0; e < total.data.size(); ++e)
          total.data[e] += sums[c].data[e];
        for (std::uint32_t l = 0; l < n_lists; ++l) count[l] += cnts[c][l];
      }
      for (std::uint32_t l = 0; l < n_lists; ++l) {
        if (count[l] == 0) continue;  // empty cluster keeps its centroid
        const double* srow = total.row(l);
        double nrm = 0.0;
        for (std::uint32_t t = 0; t < d; ++t) nrm += srow[t] * srow[t];
        nrm = std::sqrt(nrm);
        if (nrm < 1e-12) continue;
        float* crow = idx.centroids_.row(l);
        for (std::uint32_t t = 0; t < d; ++t)
          crow[t] = static_cast<float>(srow[t] / nrm);
      }
    }

    // Final assignment against the final centroids.
    parallel_chunks(n, kChunk, [&](std::size_t, std::size_t beg, std::size_t end) {
      for (std::size_t i = beg; i < end; ++i)
        assign[i] = nearest_centroid(idx.centroids_, store.keys.row(i), d);
    });
    idx.postings_.assign(n_lists, {});
    for (std::size_t i = 0; i < n; ++i) idx.postings_[assign[i]].push_back(i);
    return idx;
  }

  std::uint32_t n_lists() const { return n_lists_; }
  std::uint64_t seed() const { return seed_; }
  const Mat<float>& centroids() const { return centroids_; }
  const std::vector<std::vector<std::uint64_t>>& postings() const {
    return postings_;
  }
  const MemoryStore& store() const { return *store_; }

  std::string descriptor() const {
    return "ivf:lists=" + std::to_string(n_lists_) +
           ":seed=" + std::to_string(seed_);
  }

  std::vector<SearchHit> query(std::span<const float> q, std::size_t k,
                               const QueryOptions& opts = {}) const {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    const std::uint32_t d = store_->key_dim;
    const auto qn = detail::checked_unit_query(q, d);
    std::uint32_t n_probe = opts.n_probe == 0 ? default_n_probe(n_lists_)
                                              : opts.n_probe;
    n_probe = std::min(n_probe, n_lists_);

    // Rank lists by centroid similarity (ties by smaller list id).
    std::vector<SearchHit> lists(n_lists_);
    for (std::uint32_t l = 0; l < n_lists_; ++l)
      lists[l] = {l, dot(qn.data(), centroids_.row(l), d)};
    std::partial_sort(lists.begin(), lists.begin() + n_probe, lists.end(),
                      hit_order);

    std::vector<SearchHit> cands;
    for (std::uint32_t p = 0; p < n_probe; ++p) {
      for (const std::uint64_t id : postings_[lists[p].id]) {
        if (opts.exclude_id && *opts.exclude_id == id) continue;
        cands.push_back(
            {id, dot(qn.data(), store_->keys.row(id), d)});
      }
    }
    return detail::select_top_k(cands, k);
  }

 private:
  static std::uint32_t nearest_centroid(const Mat<float>& centroids,
                                        const float* key, std::uint32_t d) {
    std::uint32_t best = 0;
    float best_score = dot(centroids.row(0), key, d);
    for (std::size_t l = 1; l < centroids.rows; ++l) {
      const float s = dot(centroids.row(l), key, d);
      if (s > best_score) {
        best_score = s;
        best = static_cast<std::uint32_t>(l);
      }
    }
    return best;
  }

  // k-means++ on cosine distance 1 - <q, c>.
  static Mat<float> kmeans_pp_seed(const MemoryStore& store,
                                   std::uint32_t n_lists, std::uint64_t seed) {
    const std::size_t n = store.count();
    const std::uint32_t d = store.key_dim;
    Rng rng(seed);
    Mat<float> centroids(n_lists, d);

    std::size_t first = static_cast<std::size_t>(rng.next_below(n));
    std::copy_n(store.keys.row(first), d, centroids.row(0));

    std::vector<double> min_dist(n);
    for (std::uint32_t l = 1; l < n_lists; ++l) {
      const float* prev = centroids.row(l - 1);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dist =
            std::max(0.0, 1.0 - static_cast<double>(
                                    dot(prev, store.keys.row(i), d)));
        const double sq = dist * dist;
        if (l == 1 || sq < min_dist[i]) min_dist[i] = sq;
        total += min_dist[i];
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = rng.next_double() * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += min_dist[i];
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(rng.next_below(n));
      }
      std::copy_n(store.keys.row(pick), d, centroids.row(l));
    }
    return centroids;
  }

  friend IvfIndex load_ivf(const std::string& path, const MemoryStore& store);

  const MemoryStore* store_ = nullptr;
  std::uint64_t seed_ = 0;
  std::uint32_t n_lists_ = 0;
  Mat<float> centroids_;
  std::vector<std::vector<std::uint64_t>> postings_;
};

inline constexpr std::uint32_t kIvfVersion = 1;

inline void save_ivf(const IvfIndex& idx, const std::string& path) {
  BinaryWriter w(path);
  w.bytes("RACI", 4);
  w.u32(kIvfVersion);
  w.u32(idx.store().key_dim);
  w.u32(idx.n_lists());
  w.u64(idx.seed());
  w.u64(idx.store().count());
  const auto dg = idx.store().keys_digest();
  w.bytes(dg.data(), dg.size());
  w.f32_array(idx.centroids().data.data(), idx.centroids().data.size());
  for (const auto& list : idx.postings()) {
    w.u64(list.size());
    for (const auto id : list) w.u64(id);
  }
  w.close();
}

inline IvfIndex load_ivf(const std::string& path, const MemoryStore& store) {
  BinaryReader r(path);
  expect_magic(r, "RACI", "ivf index");
  expect_version(r.u32(), kIvfVersion, "ivf index");
  IvfIndex idx;
  idx.store_ = &store;
  const std::uint32_t dim = r.u32();
  idx.n_lists_ = r.u32();
  idx.seed_ = r.u64();
  const std::uint64_t count = r.u64();
  Digest256 dg;
  r.bytes(dg.data(), dg.size());
  if (dim != store.key_dim || count != store.count() ||
      dg != store.keys_digest())
    throw stale_cache_error("ivf index does not match the given store");
  idx.centroids_ = Mat<float>(idx.n_lists_, dim);
  r.f32_array(idx.centroids_.data.data(), idx.centroids_.data.size());
  idx.postings_.resize(idx.n_lists_);
  std::uint64_t seen = 0;
  for (auto& list : idx.postings_) {
    const std::uint64_t len = r.u64();
    if (len > count)
      throw io_error(io_errc::corrupt, "ivf posting list longer than store");
    list.resize(len);
    for (auto& id : list) {
      id = r.u64();
      if (id >= count)
        throw io_error(io_errc::corrupt, "ivf posting id out of range");
    }
    seen += len;
  }
  if (seen != count)
    throw io_error(io_errc::corrupt, "ivf postings do not cover the store");
  r.expect_end();
  return idx;
}

}  // namespace racm
