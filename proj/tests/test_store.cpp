#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "racm/rng.hpp"
#include "racm/sha256.hpp"
#include "racm/store.hpp"

using namespace racm;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "racm_store_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

MemoryStore random_store(Rng& rng, std::uint32_t key_dim,
                         std::uint32_t value_dim, std::size_t count) {
  MemoryStore s = MemoryStore::create(key_dim, value_dim);
  std::vector<float> key(key_dim), value(value_dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& v : key) v = static_cast<float>(rng.normal());
    for (auto& v : value) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    MetaRecord m;
    m.source_tag = "tag" + std::to_string(rng.next_below(4));
    if (rng.next_below(2) == 0)
      m.class_hint = static_cast<std::int64_t>(rng.next_below(10));
    s.append(key, value, m);
  }
  return s;
}

}  // namespace

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(digest_hex(sha256("", 0)),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(digest_hex(sha256("abc", 3)),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::string two_blocks =
      "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
  EXPECT_EQ(digest_hex(sha256(two_blocks.data(), two_blocks.size())),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST(Store, CreateEmpty) {
  const auto s = MemoryStore::create(8, 6);
  EXPECT_EQ(s.count(), 0u);
  EXPECT_EQ(s.key_dim, 8u);
  EXPECT_EQ(s.value_dim, 6u);
}

TEST(Store, CreateEncoderSizedDims) {
  const auto s = MemoryStore::create(768, 768);
  EXPECT_EQ(s.key_dim, 768u);
  EXPECT_EQ(s.value_dim, 768u);
}

TEST(Store, CreateRejectsZeroDims) {
  EXPECT_THROW(MemoryStore::create(8, 0), std::invalid_argument);
  EXPECT_THROW(MemoryStore::create(0, 8), std::invalid_argument);
}

TEST(Store, AppendAssignsDenseIds) {
  auto s = MemoryStore::create(4, 2);
  std::vector<float> k{1, 0, 0, 0}, v{0.5f, 0.5f};
  EXPECT_EQ(s.append(k, v, {"a", std::nullopt}), 0u);
  EXPECT_EQ(s.append(k, v, {"b", 3}), 1u);
  EXPECT_EQ(s.count(), 2u);
  EXPECT_EQ(s.meta[1].source_tag, "b");
  EXPECT_EQ(s.meta[1].class_hint, 3);
}

TEST(Store, AppendNormalizesKeys) {
  auto s = MemoryStore::create(8, 1);
  std::vector<float> k(8, 0.0f);
  k[0] = 3.0f;
  k[1] = 4.0f;
  s.append(k, std::vector<float>{1.0f}, {"t", std::nullopt});
  EXPECT_FLOAT_EQ(s.keys.at(0, 0), 0.6f);
  EXPECT_FLOAT_EQ(s.keys.at(0, 1), 0.8f);
  for (int i = 2; i < 8; ++i) EXPECT_EQ(s.keys.at(0, i), 0.0f);
  // values stay untouched
  EXPECT_EQ(s.values.at(0, 0), 1.0f);
}

TEST(Store, AppendGuards) {
  auto s = MemoryStore::create(4, 2);
  std::vector<float> v{0.0f, 0.0f};
  std::vector<float> nan_key{1, 1, std::numeric_limits<float>::quiet_NaN(), 0};
  EXPECT_THROW(s.append(nan_key, v, {}), std::invalid_argument);
  std::vector<float> short_key{1, 0, 0};
  EXPECT_THROW(s.append(short_key, v, {}), std::invalid_argument);
  std::vector<float> zero_key{0, 0, 0, 0};
  EXPECT_THROW(s.append(zero_key, v, {}), std::invalid_argument);
  std::vector<float> ok_key{1, 0, 0, 0};
  std::vector<float> short_val{1.0f};
  EXPECT_THROW(s.append(ok_key, short_val, {}), std::invalid_argument);
  EXPECT_EQ(s.count(), 0u);
}

TEST(Store, AppendNeverMutatesExistingRows) {
  Rng rng(11);
  auto s = random_store(rng, 6, 3, 20);
  const auto keys_before = s.keys;
  const auto values_before = s.values;
  std::vector<float> k{1, 2, 3, 4, 5, 6}, v{1, 2, 3};
  s.append(k, v, {"x", std::nullopt});
  EXPECT_TRUE(std::equal(keys_before.data.begin(), keys_before.data.end(),
                         s.keys.data.begin()));
  EXPECT_TRUE(std::equal(values_before.data.begin(), values_before.data.end(),
                         s.values.data.begin()));
}

TEST(Store, MergeIdentityAndOrder) {
  Rng rng(5);
  const auto empty = MemoryStore::create(6, 3);
  const auto s = random_store(rng, 6, 3, 10);
  const auto m1 = merge(empty, s);
  EXPECT_EQ(m1.keys, s.keys);
  EXPECT_EQ(m1.values, s.values);
  EXPECT_EQ(m1.meta, s.meta);

  const auto s2 = random_store(rng, 6, 3, 5);
  const auto m2 = merge(s, s2);
  EXPECT_EQ(m2.count(), 15u);
  EXPECT_TRUE(std::equal(s2.keys.row(0), s2.keys.row(0) + 6, m2.keys.row(10)));
}

TEST(Store, MergeRejectsDimMismatch) {
  const auto a = MemoryStore::create(8, 3);
  const auto b = MemoryStore::create(16, 3);
  EXPECT_THROW(merge(a, b), std::invalid_argument);
  const auto c = MemoryStore::create(8, 4);
  EXPECT_THROW(merge(a, c), std::invalid_argument);
}

TEST(Store, MergeAssociativeOnContents) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_store(rng, 5, 2, rng.next_below(8));
    const auto b = random_store(rng, 5, 2, rng.next_below(8));
    const auto c = random_store(rng, 5, 2, 1 + rng.next_below(8));
    const auto left = merge(merge(a, b), c);
    const auto right = merge(a, merge(b, c));
    EXPECT_EQ(left.keys, right.keys);
    EXPECT_EQ(left.values, right.values);
    EXPECT_EQ(left.meta, right.meta);
  }
}

TEST(Store, RoundTripIsBitExact) {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s =
        random_store(rng, 1 + rng.next_below(16), 1 + rng.next_below(16),
                     rng.next_below(200));
    const auto path = temp_path("roundtrip.racm");
    write_store(s, path);
    const auto r = read_store(path);
    EXPECT_EQ(r.key_dim, s.key_dim);
    EXPECT_EQ(r.value_dim, s.value_dim);
    ASSERT_EQ(r.count(), s.count());
    EXPECT_EQ(r.keys.data, s.keys.data);  // exact float bit patterns
    EXPECT_EQ(r.values.data, s.values.data);
    EXPECT_EQ(r.meta, s.meta);
  }
}

TEST(Store, UnitNormInvariantAfterAppend) {
  Rng rng(3);
  const auto s = random_store(rng, 12, 2, 100);
  for (std::size_t i = 0; i < s.count(); ++i)
    EXPECT_NEAR(norm2(s.keys.row(i), s.key_dim), 1.0, 1e-6);
}

TEST(StoreFormat, BadMagic) {
  const auto path = temp_path("bad_magic.racm");
  std::ofstream out(path, std::ios::binary);
  out << "NOPEesomejunkafterheader";
  out.close();
  try {
    read_store(path);
    FAIL() << "expected io_error";
  } catch (const io_error& e) {
    EXPECT_EQ(e.kind(), io_errc::bad_magic);
  }
}

TEST(StoreFormat, VersionMismatch) {
  Rng rng(1);
  const auto s = random_store(rng, 4, 2, 3);
  const auto path = temp_path("version.racm");
  write_store(s, path);
  // Bump the version field in place (offset 4, little endian u32).
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4);
  const char v2[4] = {2, 0, 0, 0};
  f.write(v2, 4);
  f.close();
  try {
    read_store(path);
    FAIL() << "expected io_error";
  } catch (const io_error& e) {
    EXPECT_EQ(e.kind(), io_errc::version_mismatch);
  }
}

TEST(StoreFormat, TruncatedMidMatrix) {
  Rng rng(2);
  const auto s = random_store(rng, 8, 4, 50);
  const auto path = temp_path("trunc.racm");
  write_store(s, path);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full / 2);
  try {
    read_store(path);
    FAIL() << "expected io_error";
  } catch (const io_error& e) {
    EXPECT_EQ(e.kind(), io_errc::truncated);
  }
}

TEST(StoreFormat, TrailingBytesRejected) {
  Rng rng(7);
  const auto s = random_store(rng, 4, 2, 5);
  const auto path = temp_path("trailing.racm");
  write_store(s, path);
  std::ofstream app(path, std::ios::binary | std::ios::app);
  app << "extra";
  app.close();
  try {
    read_store(path);
    FAIL() << "expected io_error";
  } catch (const io_error& e) {
    EXPECT_EQ(e.kind(), io_errc::corrupt);
  }
}

TEST(StoreFormat, ValueDimZeroReadable) {
  // Datasets persist through the same container with no value columns.
  MemoryStore s;
  s.key_dim = 4;
  s.value_dim = 0;
  s.keys = Mat<float>(2, 4);
  s.keys.at(0, 0) = 1.0f;
  s.keys.at(1, 1) = 1.0f;
  s.values.rows = 2;
  s.values.cols = 0;
  s.meta = {{"train", 0}, {"train", 1}};
  const auto path = temp_path("zerowidth.racm");
  write_store(s, path);
  const auto r = read_store(path);
  EXPECT_EQ(r.value_dim, 0u);
  EXPECT_EQ(r.count(), 2u);
  EXPECT_EQ(r.keys.data, s.keys.data);
}
