// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <atomic>
#include <cstdlib>
#include <numeric>
#include <set>

#include "oracles.hpp"

using namespace oodk;

TEST_CASE("error codes map to process exit codes") {
  CHECK(exit_code(ErrorCode::usage) == 1);
  CHECK(exit_code(ErrorCode::input) == 2);
  CHECK(exit_code(ErrorCode::format) == 2);
  CHECK(exit_code(ErrorCode::estimation) == 2);
  CHECK(exit_code(ErrorCode::numerical) == 3);
  CHECK(exit_code(ErrorCode::training) == 3);
  CHECK(to_string(ErrorCode::format) == "format");
  try {
    fail(ErrorCode::estimation, "boom");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::estimation);
    CHECK(std::string(e.what()) == "boom");
  }
}

TEST_CASE("splitmix64 matches the reference sequence") {
  // First outputs of the reference SplitMix64 generator started at state 0.
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(0x9E3779B97F4A7C15ULL) == 0x6E789E6AA1B965F4ULL);
  CHECK(derive_seed(5, 7) == splitmix64(5 ^ 7));
}

TEST_CASE("rng streams are reproducible and seed-dependent") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("uniform draws stay in range") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double v = rng.uniform_open_low();
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
    const int k = rng.uniform_int(-2, 3);
    REQUIRE(k >= -2);
    REQUIRE(k <= 3);
  }
}

TEST_CASE("below is uniform over small ranges") {
  Rng rng(2);
  const int n = 7, draws = 70000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) ++counts[rng.below(n)];
  double chi2 = 0.0;
  const double expected = static_cast<double>(draws) / n;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 22.46);  // 0.999 quantile, 6 dof
  CHECK(rng.below(1) == 0);
}

TEST_CASE("normal and exponential moments") {
  Rng rng(3);
  const int n = 200000;
  double s = 0, s2 = 0, e = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    e += rng.exponential();
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(e / n - 1.0) < 4.0 / std::sqrt(n));
}

TEST_CASE("shuffle yields a permutation") {
  Rng rng(4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v.begin(), v.end());
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  CHECK(!std::is_sorted(v.begin(), v.end()));
}

TEST_CASE("byte writer and reader round trip") {
  io::ByteWriter w;
  w.magic("TEST");
  w.u8(7);
  w.u32(0xDEADBEEF);
  w.u64(0x0123456789ABCDEFULL);
  w.f32(1.5f);
  w.f64(-0.1);
  w.string("hello");
  const auto bytes = w.bytes();
  CHECK(bytes[4] == 7);
  CHECK(bytes[5] == 0xEF);  // little-endian

  io::ByteReader r(bytes);
  r.expect_magic("TEST");
  CHECK(r.u8() == 7);
  CHECK(r.u32() == 0xDEADBEEF);
  CHECK(r.u64() == 0x0123456789ABCDEFULL);
  CHECK(r.f32() == 1.5f);
  CHECK(r.f64() == -0.1);
  CHECK(r.string() == "hello");
  CHECK(r.at_end());

  io::ByteReader short_reader(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 6));
  short_reader.expect_magic("TEST");
  short_reader.u8();
  try {
    short_reader.u32();
    FAIL("expected a truncation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
  io::ByteReader wrong(bytes);
  CHECK_THROWS_AS(wrong.expect_magic("NOPE"), Error);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, threads);
    for (auto& h : hits) REQUIRE(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(100, [](std::size_t i) {
    if (i == 37) fail(ErrorCode::numerical, "task failed");
  }, 4), Error);
}

TEST_CASE("thread budget honours OODK_THREADS") {
  ::setenv("OODK_THREADS", "3", 1);
  CHECK(thread_budget() == 3u);
  ::setenv("OODK_THREADS", "0", 1);
  CHECK(thread_budget() >= 1u);
  ::unsetenv("OODK_THREADS");
  CHECK(thread_budget() >= 1u);
}
