#pragma once
// Brute-force cosine top-k over a store's keys. Holds only a reference to
// the store (no key copies). Doubles as the correctness oracle for the IVF
// index: both score through the same canonical dot product and the same
// (score desc, id asc) ordering, so results can be compared bit-for-bit.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "racm/mat.hpp"
#include "racm/parallel.hpp"
#include "racm/store.hpp"

namespace racm {

struct SearchHit {
  std::uint64_t id = 0;
  float score = 0.0f;

  bool operator==(const SearchHit&) const = default;
};

// score desc, ties by smaller id.
inline bool hit_order(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

struct QueryOptions {
  // IVF only: number of posting lists to scan; 0 means the index default.
  std::uint32_t n_probe = 0;
  // Drop this memory id from the candidates (self-exclusion during training
  // when the memory set is the training split itself).
  std::optional<std::uint64_t> exclude_id;
};

namespace detail {

inline std::vector<SearchHit> select_top_k(std::vector<SearchHit>& cands,
                                           std::size_t k) {
  const std::size_t take = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + take, cands.end(),
                    hit_order);
  cands.resize(take);
  return std::move(cands);
}

inline std::vector<float> checked_unit_query(std::span<const float> q,
                                             std::uint32_t dim) {
  if (q.size() != dim)
    throw std::invalid_argument("query dimension does not match index");
  if (!all_finite(q.data(), q.size()))
    throw std::invalid_argument("query has non-finite entries");
  return normalized(q);  // throws on zero norm
}

}  // namespace detail

class ExactIndex {
 public:
  explicit ExactIndex(const MemoryStore& store) : store_(&store) {
    if (store.count() == 0)
      throw std::invalid_argument("cannot index an empty store");
  }

  const MemoryStore& store() const { return *store_; }

  std::string descriptor() const { return "exact"; }

  std::vector<SearchHit> query(std::span<const float> q, std::size_t k,
                               const QueryOptions& opts = {}) const {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    const auto qn = detail::checked_unit_query(q, store_->key_dim);
    const std::size_t n = store_->count();
    std::vector<SearchHit> cands;
    cands.reserve(n);
    for (std::size_t id = 0; id < n; ++id) {
      if (opts.exclude_id && *opts.exclude_id == id) continue;
      cands.push_back(
          {id, dot(qn.data(), store_->keys.row(id), store_->key_dim)});
    }
    return detail::select_top_k(cands, k);
  }

  // Batched scoring for evaluation and cache building. Scores are written
  // key-major with the query index innermost, which vectorizes without
  // changing the per-element accumulation order used by query().
  std::vector<std::vector<SearchHit>> query_batch(
      const Mat<float>& queries, std::size_t k,
      std::span<const std::uint64_t> exclude_ids = {}) const {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    const std::size_t n = store_->count();
    const std::uint32_t d = store_->key_dim;
    std::vector<std::vector<SearchHit>> out(queries.rows);

    constexpr std::size_t kBlock = 64;
    Mat<float> qt(d, kBlock);        // transposed normalized query block
    std::vector<float> scores;       // n x block, key-major
    for (std::size_t q0 = 0; q0 < queries.rows; q0 += kBlock) {
      const std::size_t bs = std::min(kBlock, queries.rows - q0);
      for (std::size_t b = 0; b < bs; ++b) {
        const auto qn = detail::checked_unit_query(queries.row_span(q0 + b), d);
        for (std::uint32_t t = 0; t < d; ++t) qt.at(t, b) = qn[t];
      }
      scores.assign(n * bs, 0.0f);
      parallel_chunks(n, 4096, [&](std::size_t, std::size_t beg, std::size_t end) {
        for (std::size_t id = beg; id < end; ++id) {
          const float* key = store_->keys.row(id);
          float* srow = scores.data() + id * bs;
          for (std::uint32_t t = 0; t < d; ++t) {
            const float kv = key[t];
            const float* qrow = qt.row(t);
            for (std::size_t b = 0; b < bs; ++b) srow[b] += kv * qrow[b];
          }
        }
      });
      parallel_chunks(bs, 8, [&](std::size_t, std::size_t beg, std::size_t end) {
        for (std::size_t b = beg; b < end; ++b) {
          const std::size_t qi = q0 + b;
          std::vector<SearchHit> cands;
          cands.reserve(n);
          const bool has_excl = qi < exclude_ids.size();
          for (std::size_t id = 0; id < n; ++id) {
            if (has_excl && exclude_ids[qi] == id) continue;
            cands.push_back({id, scores[id * bs + b]});
          }
          out[qi] = detail::select_top_k(cands, k);
        }
      });
    }
    return out;
  }

 private:
  const MemoryStore* store_;
};

// recall@k between an approximate result list and the exact one:
// |ids(approx) ∩ ids(exact)| / |exact|.
inline double recall_at_k(std::span<const SearchHit> approx,
                          std::span<const SearchHit> exact) {
  if (approx.size() != exact.size())
    throw std::invalid_argument("recall_at_k: result lists differ in length");
  if (exact.empty()) return 1.0;
  std::vector<std::uint64_t> a, b;
  a.reserve(approx.size());
  b.reserve(exact.size());
  for (const auto& h : approx) a.push_back(h.id);
  for (const auto& h : exact) b.push_back(h.id);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::uint64_t> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(exact.size());
}

}  // namespace racm
