#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "aquilt/error.hpp"
#include "aquilt/util.hpp"
#include "testsupport.hpp"

using namespace aquilt;

TEST(Util, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Util, DerivedSeedsDependOnLabel) {
  EXPECT_EQ(derive_seed(1, "x"), derive_seed(1, "x"));
  EXPECT_NE(derive_seed(1, "x"), derive_seed(1, "y"));
  EXPECT_NE(derive_seed(1, "x"), derive_seed(2, "x"));
}

TEST(Util, RngIsReproducible) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform_index(17), b.uniform_index(17));
}

TEST(Util, UniformIndexStaysInRangeAndCoversIt) {
  Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto x = rng.uniform_index(7);
    ASSERT_LT(x, 7u);
    ++hits[x];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Util, Uniform01InUnitInterval) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Util, SampleSortedProperties) {
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 5u, 100u}) {
    for (std::size_t k : {0u, 1u, 3u, 100u, 200u}) {
      const auto s = rng.sample_sorted(n, k);
      EXPECT_EQ(s.size(), std::min(n, k));
      EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
      EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), s.size());
      for (auto x : s) EXPECT_LT(x, n);
    }
  }
}

TEST(Util, ShuffleIsAPermutation) {
  Rng rng(9);
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  auto w = v;
  rng.shuffle(w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Util, ParallelForVisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> seen(1000);
  parallel_for(seen.size(), 8, [&](std::size_t i) { seen[i]++; });
  for (auto& s : seen) EXPECT_EQ(s.load(), 1);
}

TEST(Util, ParallelForRethrows) {
  EXPECT_THROW(parallel_for(50, 4,
                            [](std::size_t i) {
                              if (i == 17) throw RangeError("boom");
                            }),
               RangeError);
}

TEST(Util, AtomicWriteAndRead) {
  aquilt::testing::TempDir dir("util");
  const auto p = dir / "f.txt";
  io::write_file_atomic(p, "hello");
  EXPECT_EQ(io::read_file(p), "hello");
  io::write_file_atomic(p, "bye");
  EXPECT_EQ(io::read_file(p), "bye");
  EXPECT_FALSE(std::filesystem::exists(dir / "f.txt.tmp"));
  EXPECT_THROW(io::read_file(dir / "missing"), IoError);
  EXPECT_THROW(io::write_file_atomic(dir / "no/such/dir/f", "x"), IoError);
}
