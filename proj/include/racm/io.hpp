#pragma once
// Little-endian binary readers and writers for the on-disk formats. Floats
// travel as raw IEEE-754 bit patterns so round trips are exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "racm/errors.hpp"

namespace racm {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw io_error(io_errc::corrupt, "cannot open for write: " + path);
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }

  void u8(std::uint8_t v) { bytes(&v, 1); }

  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                         std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
    bytes(b, 8);
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void f32_array(const float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(p, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }
  }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void close() {
    out_.flush();
    if (!out_) throw io_error(io_errc::corrupt, "write failed: " + path_);
    out_.close();
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw io_error(io_errc::corrupt, "cannot open for read: " + path);
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw io_error(io_errc::truncated, "truncated file: " + path_);
  }

  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    bytes(b, 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  }

  std::uint64_t u64() {
    std::uint8_t b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void f32_array(float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(p, n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) p[i] = f32();
    }
  }

  std::string str(std::size_t max_len = 1u << 30) {
    const std::uint32_t n = u32();
    if (n > max_len)
      throw io_error(io_errc::corrupt, "unreasonable string length in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  // True when every byte has been consumed.
  bool at_end() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  void expect_end() {
    if (!at_end())
      throw io_error(io_errc::corrupt, "trailing bytes in " + path_);
  }

 private:
  std::string path_;
  std::ifstream in_;
};

inline void expect_magic(BinaryReader& r, const char (&magic)[5],
                         const std::string& what) {
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw io_error(io_errc::bad_magic, "bad magic for " + what);
}

inline void expect_version(std::uint32_t got, std::uint32_t want,
                           const std::string& what) {
  if (got != want)
    throw io_error(io_errc::version_mismatch,
                   what + ": unsupported version " + std::to_string(got));
}

}  // namespace racm
