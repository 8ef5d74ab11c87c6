#pragma once
// Precomputed top-k neighbor lists for a fixed (index, query set, k),
// reused across training epochs. A SHA-256 digest of the index description,
// the store keys, the query matrix, k and the exclusion mode is stored in
// the file; consumers recompute the digest from their own inputs and reject
// the cache when it differs.
//
// On-disk ("RACC"): magic | u32 version | u64 n_queries | u32 k | 32-byte
// digest | per query exactly k entries of (u64 id, f32 score). Lists
// shorter than k (store smaller than k, or self-exclusion) are padded with
// sentinel entries (id = 2^64-1, score = -inf) to keep the stride fixed.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "racm/exact_index.hpp"
#include "racm/io.hpp"
#include "racm/ivf_index.hpp"
#include "racm/sha256.hpp"

namespace racm {

struct KnnCache {
  std::uint32_t k = 0;
  Digest256 digest{};
  std::vector<std::vector<SearchHit>> rows;
};

inline constexpr std::uint64_t kCachePadId =
    std::numeric_limits<std::uint64_t>::max();

// Canonical digest over everything the cached lists depend on.
inline Digest256 cache_digest(const std::string& index_desc,
                              const MemoryStore& store,
                              const Mat<float>& queries, std::uint32_t k,
                              bool exclude_self) {
  Sha256 h;
  h.update("RACC-digest-v1", 14);
  h.update(index_desc);
  const auto kd = store.keys_digest();
  h.update(kd.data(), kd.size());
  const std::uint64_t qdims[2] = {queries.rows, queries.cols};
  h.update(qdims, sizeof(qdims));
  h.update(queries.data.data(), queries.data.size() * sizeof(float));
  h.update(&k, sizeof(k));
  const std::uint8_t ex = exclude_self ? 1 : 0;
  h.update(&ex, 1);
  return h.finalize();
}

inline std::string ivf_cache_descriptor(const IvfIndex& idx,
                                        std::uint32_t n_probe) {
  const std::uint32_t probe =
      n_probe == 0 ? default_n_probe(idx.n_lists()) : n_probe;
  return idx.descriptor() + ":probe=" + std::to_string(probe);
}

inline KnnCache precompute_knn(const ExactIndex& index,
                               const Mat<float>& queries, std::uint32_t k,
                               bool exclude_self = false) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  KnnCache cache;
  cache.k = k;
  cache.digest =
      cache_digest(index.descriptor(), index.store(), queries, k, exclude_self);
  std::vector<std::uint64_t> excl;
  if (exclude_self) {
    excl.resize(queries.rows);
    for (std::size_t i = 0; i < queries.rows; ++i) excl[i] = i;
  }
  cache.rows = index.query_batch(queries, k, excl);
  return cache;
}

inline KnnCache precompute_knn(const IvfIndex& index, const Mat<float>& queries,
                               std::uint32_t k, std::uint32_t n_probe = 0,
                               bool exclude_self = false) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  KnnCache cache;
  cache.k = k;
  cache.digest = cache_digest(ivf_cache_descriptor(index, n_probe),
                              index.store(), queries, k, exclude_self);
  cache.rows.resize(queries.rows);
  parallel_chunks(queries.rows, 16, [&](std::size_t, std::size_t beg, std::size_t end) {
    for (std::size_t i = beg; i < end; ++i) {
      QueryOptions opts;
      opts.n_probe = n_probe;
      if (exclude_self) opts.exclude_id = i;
      cache.rows[i] = index.query(queries.row_span(i), k, opts);
    }
  });
  return cache;
}

inline constexpr std::uint32_t kCacheVersion = 1;

inline void write_cache(const KnnCache& cache, const std::string& path) {
  BinaryWriter w(path);
  w.bytes("RACC", 4);
  w.u32(kCacheVersion);
  w.u64(cache.rows.size());
  w.u32(cache.k);
  w.bytes(cache.digest.data(), cache.digest.size());
  for (const auto& row : cache.rows) {
    for (std::size_t j = 0; j < cache.k; ++j) {
      if (j < row.size()) {
        w.u64(row[j].id);
        w.f32(row[j].score);
      } else {
        w.u64(kCachePadId);
        w.f32(-std::numeric_limits<float>::infinity());
      }
    }
  }
  w.close();
}

inline KnnCache read_cache(const std::string& path) {
  BinaryReader r(path);
  expect_magic(r, "RACC", "knn cache");
  expect_version(r.u32(), kCacheVersion, "knn cache");
  KnnCache cache;
  const std::uint64_t n = r.u64();
  cache.k = r.u32();
  r.bytes(cache.digest.data(), cache.digest.size());
  cache.rows.resize(n);
  for (auto& row : cache.rows) {
    row.reserve(cache.k);
    for (std::uint32_t j = 0; j < cache.k; ++j) {
      SearchHit h;
      h.id = r.u64();
      h.score = r.f32();
      if (h.id != kCachePadId) row.push_back(h);
    }
  }
  r.expect_end();
  return cache;
}

// Throws stale_cache_error when the cache was built against different
// inputs than the caller now holds.
inline void validate_cache(const KnnCache& cache, const Digest256& expected) {
  if (cache.digest != expected)
    throw stale_cache_error(
        "knn cache digest mismatch: cache is stale for these inputs");
}

}  // namespace racm
