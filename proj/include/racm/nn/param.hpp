#pragma once
// Named trainable tensors with paired gradients. A ParamSet owns its params
// in registration order, which fixes the RNG draw order at init, the Adam
// update order, and the checkpoint record order — all three matter for the
// bitwise-reproducibility guarantees.
//
// Checkpoint format ("RACP"): magic | u32 version | u64 n_records | per
// record u32 name_len + name + u32 ndims + u64 dims... + float32 data.

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "racm/io.hpp"
#include "racm/mat.hpp"
#include "racm/rng.hpp"

namespace racm::nn {

template <typename T>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  // Row-major matrix view of a 2-D param.
  Mat<T> as_mat() const {
    Mat<T> m;
    m.rows = rows();
    m.cols = cols();
    m.data = value;
    return m;
  }
};

template <typename T>
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    Param<T> p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(n, T(0));
    p.grad.assign(n, T(0));
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  std::size_t add_uniform(std::string name, std::vector<std::size_t> shape,
                          std::size_t fan_in, Rng& rng) {
    const std::size_t idx = add(std::move(name), std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : params_[idx].value)
      v = static_cast<T>(rng.uniform(-bound, bound));
    return idx;
  }

  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t total_coords() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  // Element-wise copy into an identically-shaped set (used to lift float
  // models to double for finite-difference checks).
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) {
      const std::size_t i = out.add(p.name, p.shape);
      for (std::size_t e = 0; e < p.value.size(); ++e)
        out[i].value[e] = static_cast<U>(p.value[e]);
    }
    return out;
  }

 private:
  std::vector<Param<T>> params_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ParamSet<float>& params,
                            const std::string& path) {
  BinaryWriter w(path);
  w.bytes("RACP", 4);
  w.u32(kCheckpointVersion);
  w.u64(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto s : p.shape) w.u64(s);
    w.f32_array(p.value.data(), p.value.size());
  }
  w.close();
}

inline ParamSet<float> load_checkpoint(const std::string& path) {
  BinaryReader r(path);
  expect_magic(r, "RACP", "checkpoint");
  expect_version(r.u32(), kCheckpointVersion, "checkpoint");
  ParamSet<float> params;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = r.str(4096);
    const std::uint32_t ndims = r.u32();
    if (ndims > 8)
      throw io_error(io_errc::corrupt, "checkpoint record with " +
                                           std::to_string(ndims) + " dims");
    std::vector<std::size_t> shape(ndims);
    for (auto& s : shape) s = r.u64();
    const std::size_t idx = params.add(name, shape);
    r.f32_array(params[idx].value.data(), params[idx].value.size());
  }
  r.expect_end();
  return params;
}

// Copies checkpoint values into an existing set; names and shapes must
// match exactly.
inline void load_checkpoint_into(const std::string& path,
                                 ParamSet<float>& params) {
  const ParamSet<float> loaded = load_checkpoint(path);
  if (loaded.size() != params.size())
    throw io_error(io_errc::corrupt, "checkpoint has a different param count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (loaded[i].name != params[i].name || loaded[i].shape != params[i].shape)
      throw io_error(io_errc::corrupt,
                     "checkpoint record mismatch at " + params[i].name);
    params[i].value = loaded[i].value;
  }
}

}  // namespace racm::nn
