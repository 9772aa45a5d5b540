#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "topseg/rng.hpp"

using topseg::numkit::Rng;

// The stream is an on-disk contract: these constants were produced by an
// independent splitmix64 implementation and must never change.
TEST_CASE("splitmix64 golden stream, seed 0") {
  const std::uint64_t expected[] = {
      0xe220a8397b1dcdafull, 0x6e789e6aa1b965f4ull, 0x06c45d188009454full,
      0xf88bb8a8724c81ecull, 0x1b39896a51a8749bull, 0x53cb9f0c747ea2eaull,
      0x2c829abe1f4532e1ull, 0xc584133ac916ab3cull,
  };
  Rng rng(0);
  for (std::uint64_t want : expected) CHECK(rng.next() == want);
}

TEST_CASE("splitmix64 golden stream, seed 42") {
  const std::uint64_t expected[] = {
      0xbdd732262feb6e95ull, 0x28efe333b266f103ull, 0x47526757130f9f52ull,
      0x581ce1ff0e4ae394ull,
  };
  Rng rng(42);
  for (std::uint64_t want : expected) CHECK(rng.next() == want);
}

TEST_CASE("same seed reproduces the stream exactly") {
  Rng a(1234567), b(1234567);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next() == b.next());
}

TEST_CASE("uniform lies in [0, 1) and hits the golden first draw") {
  Rng rng(0);
  CHECK(rng.uniform() == doctest::Approx(0.8833108082136426).epsilon(1e-15));
  Rng probe(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = probe.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform(lo, hi) respects its bounds") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.5, 4.0);
    REQUIRE(u >= -2.5);
    REQUIRE(u < 4.0);
  }
}

TEST_CASE("below stays in range and is roughly uniform") {
  Rng rng(99);
  std::vector<int> hits(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = rng.below(10);
    REQUIRE(v < 10);
    ++hits[v];
  }
  // Each bucket expects 10000; 5 sigma is about 474.
  for (int h : hits) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("below(1) is always 0") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) REQUIRE(rng.below(1) == 0);
}

TEST_CASE("normal is standard within Monte-Carlo error") {
  Rng rng(11);
  const int draws = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / draws;
  const double var = sum2 / draws - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("poisson matches its mean for small and halved-large lambda") {
  Rng rng(21);
  for (const double lambda : {0.5, 4.0, 30.0, 700.0}) {
    const int draws = lambda > 100 ? 2000 : 20000;
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) sum += static_cast<double>(rng.poisson(lambda));
    const double mean = sum / draws;
    // 5 sigma of the sample mean.
    const double slack = 5.0 * std::sqrt(lambda / draws);
    CHECK(std::abs(mean - lambda) < slack + 1e-9);
  }
  CHECK(Rng(1).poisson(0.0) == 0);
  CHECK(Rng(1).poisson(-3.0) == 0);
}

TEST_CASE("split derives a distinct deterministic substream") {
  Rng a(77);
  Rng sub = a.split();
  Rng b(77);
  Rng sub2 = b.split();
  CHECK(sub.next() == sub2.next());
  CHECK(a.next() == b.next());
}
