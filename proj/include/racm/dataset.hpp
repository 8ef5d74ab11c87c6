#pragma once
// Downstream classification split: frozen query embeddings with integer
// labels and per-class counts. Persisted as a value-less "RACM" store (the
// embeddings ride in the key slot) plus a JSON sidecar carrying labels,
// counts, and the generator echo for both splits.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "racm/errors.hpp"
#include "racm/mat.hpp"
#include "racm/store.hpp"

namespace racm {

struct DownstreamDataset {
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  Mat<float> embeddings;  // N x dim
  std::vector<std::int32_t> labels;
  std::vector<std::uint32_t> class_counts;  // counts within this split
  std::string split;

  std::size_t size() const { return embeddings.rows; }

  void validate() const {
    if (dim == 0 || num_classes == 0)
      throw std::invalid_argument("dataset dims must be >= 1");
    if (labels.size() != embeddings.rows)
      throw std::invalid_argument("dataset: one label per embedding required");
    if (class_counts.size() != num_classes)
      throw std::invalid_argument("dataset: class_counts size mismatch");
    std::uint64_t sum = 0;
    std::vector<std::uint64_t> seen(num_classes, 0);
    for (const auto l : labels) {
      if (l < 0 || static_cast<std::uint32_t>(l) >= num_classes)
        throw std::invalid_argument("dataset: label out of range");
      seen[static_cast<std::size_t>(l)] += 1;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (seen[c] != class_counts[c])
        throw std::invalid_argument("dataset: class_counts do not match labels");
      sum += class_counts[c];
    }
    if (sum != labels.size())
      throw std::invalid_argument("dataset: class_counts do not sum to N");
  }
};

namespace detail {

inline nlohmann::json split_to_json(const DownstreamDataset& ds) {
  nlohmann::json j;
  j["labels"] = ds.labels;
  j["class_counts"] = ds.class_counts;
  return j;
}

}  // namespace detail

// Sidecar: {"dim", "classes", "train": {...}, "eval": {...}, "spec": echo}
inline void write_dataset_bundle(const std::string& dir,
                                 const DownstreamDataset& train,
                                 const DownstreamDataset& eval,
                                 const MemoryStore& memory,
                                 const nlohmann::json& spec_echo) {
  auto to_store = [](const DownstreamDataset& ds) {
    MemoryStore s;
    s.key_dim = ds.dim;
    s.value_dim = 0;
    s.keys = ds.embeddings;
    s.values.rows = ds.embeddings.rows;
    s.values.cols = 0;
    s.meta.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
      s.meta.push_back({ds.split, ds.labels[i]});
    return s;
  };
  write_store(to_store(train), dir + "/train.racm");
  write_store(to_store(eval), dir + "/eval.racm");
  write_store(memory, dir + "/memory.racm");

  nlohmann::json j;
  j["dim"] = train.dim;
  j["classes"] = train.num_classes;
  j["train"] = detail::split_to_json(train);
  j["eval"] = detail::split_to_json(eval);
  j["spec"] = spec_echo;
  std::ofstream out(dir + "/sidecar.json", std::ios::trunc);
  if (!out) throw io_error(io_errc::corrupt, "cannot write sidecar in " + dir);
  out << j.dump(2) << "\n";
}

inline DownstreamDataset load_dataset(const std::string& dir,
                                      const std::string& split) {
  std::ifstream in(dir + "/sidecar.json");
  if (!in)
    throw io_error(io_errc::corrupt, "missing sidecar.json in " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    throw io_error(io_errc::corrupt, "invalid sidecar.json in " + dir);
  }
  if (!j.contains(split))
    throw io_error(io_errc::corrupt, "sidecar has no split " + split);
  const MemoryStore s = read_store(dir + "/" + split + ".racm");

  DownstreamDataset ds;
  ds.dim = j["dim"].get<std::uint32_t>();
  ds.num_classes = j["classes"].get<std::uint32_t>();
  ds.embeddings = s.keys;
  ds.labels = j[split]["labels"].get<std::vector<std::int32_t>>();
  ds.class_counts = j[split]["class_counts"].get<std::vector<std::uint32_t>>();
  ds.split = split;
  if (ds.dim != s.key_dim)
    throw io_error(io_errc::corrupt, "sidecar dim disagrees with " + split);
  ds.validate();
  return ds;
}

}  // namespace racm
