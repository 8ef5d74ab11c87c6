#pragma once
// External memory store: parallel key/value embedding matrices plus one
// metadata record per row. Keys are L2-normalized at append time so cosine
// similarity against them reduces to a dot product; values are kept exactly
// as given. Persisted in the "RACM" binary format:
//
//   magic "RACM" | u32 version=1 | u32 key_dim | u32 value_dim | u64 count
//   keys   count x key_dim   float32 row-major
//   values count x value_dim float32 row-major
//   per row: u32 byte length + UTF-8 JSON {"source_tag": str,
//                                          "class_hint": int|null}
//
// value_dim 0 is legal on disk (datasets reuse the container without
// values); create() still rejects it for memory stores built through the
// public API.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "racm/io.hpp"
#include "racm/mat.hpp"
#include "racm/sha256.hpp"

namespace racm {

struct MetaRecord {
  std::string source_tag;
  std::optional<std::int64_t> class_hint;

  bool operator==(const MetaRecord&) const = default;
};

struct MemoryStore {
  std::uint32_t key_dim = 0;
  std::uint32_t value_dim = 0;
  Mat<float> keys;    // count x key_dim, unit rows
  Mat<float> values;  // count x value_dim
  std::vector<MetaRecord> meta;

  std::size_t count() const { return keys.rows; }

  static MemoryStore create(std::uint32_t key_dim, std::uint32_t value_dim) {
    if (key_dim == 0 || value_dim == 0)
      throw std::invalid_argument("store dimensions must be >= 1");
    MemoryStore s;
    s.key_dim = key_dim;
    s.value_dim = value_dim;
    s.keys.cols = key_dim;
    s.values.cols = value_dim;
    return s;
  }

  // Returns the id of the new row (= previous count). The key is stored
  // L2-normalized; zero-norm keys are rejected because cosine similarity
  // against them is undefined.
  std::size_t append(std::span<const float> key, std::span<const float> value,
                     MetaRecord m) {
    if (key.size() != key_dim)
      throw std::invalid_argument("append: key length does not match key_dim");
    if (value.size() != value_dim)
      throw std::invalid_argument("append: value length does not match value_dim");
    if (!all_finite(key.data(), key.size()) ||
        !all_finite(value.data(), value.size()))
      throw std::invalid_argument("append: non-finite entry");
    std::vector<float> unit(key_dim);
    normalize_into(key.data(), key.size(), unit.data());

    const std::size_t id = count();
    keys.data.insert(keys.data.end(), unit.begin(), unit.end());
    keys.rows += 1;
    values.data.insert(values.data.end(), value.begin(), value.end());
    values.rows += 1;
    meta.push_back(std::move(m));
    return id;
  }

  Digest256 keys_digest() const {
    Sha256 h;
    h.update("RACM-keys", 9);
    const std::uint32_t dims[2] = {key_dim, value_dim};
    h.update(dims, sizeof(dims));
    const std::uint64_t n = count();
    h.update(&n, sizeof(n));
    h.update(keys.data.data(), keys.data.size() * sizeof(float));
    return h.finalize();
  }
};

// Concatenates two stores; a's rows keep their ids, b's rows follow.
inline MemoryStore merge(const MemoryStore& a, const MemoryStore& b) {
  if (a.key_dim != b.key_dim || a.value_dim != b.value_dim)
    throw std::invalid_argument("merge: store dimensions differ");
  MemoryStore out;
  out.key_dim = a.key_dim;
  out.value_dim = a.value_dim;
  out.keys = a.keys;
  out.keys.data.insert(out.keys.data.end(), b.keys.data.begin(),
                       b.keys.data.end());
  out.keys.rows = a.keys.rows + b.keys.rows;
  out.values = a.values;
  out.values.data.insert(out.values.data.end(), b.values.data.begin(),
                         b.values.data.end());
  out.values.rows = a.values.rows + b.values.rows;
  out.meta = a.meta;
  out.meta.insert(out.meta.end(), b.meta.begin(), b.meta.end());
  return out;
}

namespace detail {

inline std::string meta_to_json(const MetaRecord& m) {
  nlohmann::json j;
  j["source_tag"] = m.source_tag;
  if (m.class_hint.has_value())
    j["class_hint"] = *m.class_hint;
  else
    j["class_hint"] = nullptr;
  return j.dump();
}

inline MetaRecord meta_from_json(const std::string& s) {
  const auto j = nlohmann::json::parse(s, nullptr, false);
  if (j.is_discarded())
    throw io_error(io_errc::corrupt, "invalid metadata JSON");
  MetaRecord m;
  m.source_tag = j.value("source_tag", std::string{});
  if (j.contains("class_hint") && !j["class_hint"].is_null())
    m.class_hint = j["class_hint"].get<std::int64_t>();
  return m;
}

}  // namespace detail

inline constexpr std::uint32_t kStoreVersion = 1;

inline void write_store(const MemoryStore& s, const std::string& path) {
  BinaryWriter w(path);
  w.bytes("RACM", 4);
  w.u32(kStoreVersion);
  w.u32(s.key_dim);
  w.u32(s.value_dim);
  w.u64(s.count());
  w.f32_array(s.keys.data.data(), s.keys.data.size());
  w.f32_array(s.values.data.data(), s.values.data.size());
  for (const auto& m : s.meta) w.str(detail::meta_to_json(m));
  w.close();
}

inline MemoryStore read_store(const std::string& path) {
  BinaryReader r(path);
  expect_magic(r, "RACM", "memory store");
  expect_version(r.u32(), kStoreVersion, "memory store");
  MemoryStore s;
  s.key_dim = r.u32();
  s.value_dim = r.u32();
  const std::uint64_t n = r.u64();
  if (s.key_dim == 0)
    throw io_error(io_errc::corrupt, "store with key_dim 0");
  s.keys = Mat<float>(n, s.key_dim);
  r.f32_array(s.keys.data.data(), s.keys.data.size());
  s.values = Mat<float>(n, s.value_dim);
  r.f32_array(s.values.data.data(), s.values.data.size());
  s.meta.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i)
    s.meta.push_back(detail::meta_from_json(r.str()));
  r.expect_end();
  return s;
}

}  // namespace racm
