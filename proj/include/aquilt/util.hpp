#pragma once

// Hashing, seeded randomness and file helpers. Everything here is
// platform-stable: the same seed yields the same draws on every standard
// library, which std::uniform_int_distribution does not guarantee.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace aquilt {

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t splitmix64(std::uint64_t x);

// Derives a child seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  // k distinct indices from [0, n), returned in ascending order.
  std::vector<std::size_t> sample_sorted(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

// Runs fn(i) for i in [0, n) on at most `bound` threads. The first exception
// thrown by any call is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t bound, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(bound, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

namespace io {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames it into place, so readers never
// observe a partial file. Throws IoError on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace io

}  // namespace aquilt
