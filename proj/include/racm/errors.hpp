#pragma once
// Error types shared across the library. Validation failures throw
// std::invalid_argument; file-format problems throw io_error with a kind
// that tests and the CLI can dispatch on.

#include <stdexcept>
#include <string>

namespace racm {

enum class io_errc {
  bad_magic,
  version_mismatch,
  truncated,
  corrupt,
};

class io_error : public std::runtime_error {
 public:
  io_error(io_errc kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  io_errc kind() const noexcept { return kind_; }

 private:
  io_errc kind_;
};

// A persisted k-NN cache (or IVF index) whose digest no longer matches the
// store/query set it claims to describe.
class stale_cache_error : public std::runtime_error {
 public:
  explicit stale_cache_error(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace racm
