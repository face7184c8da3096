#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace twmq {

// xoshiro256++ with splitmix64 seeding. Replicate r of a run with master
// seed s draws from the stream seeded by splitmix64 starting at
// s ^ (r+1)*0x9E3779B97F4A7C15, so parallel and serial executions consume
// identical per-replicate sequences.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed ^ ((stream + 1) * 0x9E3779B97F4A7C15ULL);
    for (auto& w : state_) w = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1], safe as a log argument
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // unbiased-enough bounded integer via 128-bit multiply-shift
  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double a = 2.0 * std::numbers::pi * uniform();
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double lognormal(double meanlog, double sdlog) {
    return std::exp(normal(meanlog, sdlog));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // simple random sample without replacement of `n` indices from 0..N-1,
  // partial Fisher-Yates, returned in draw order
  std::vector<int> srswor(int n, int N) {
    std::vector<int> pool(N);
    for (int i = 0; i < N; ++i) pool[i] = i;
    for (int i = 0; i < n; ++i) {
      const int k = i + static_cast<int>(below(static_cast<std::uint64_t>(N - i)));
      std::swap(pool[i], pool[k]);
    }
    pool.resize(n);
    return pool;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// Kahan-compensated accumulator; keeps parallel/serial reductions in
// agreement at the 1e-12 level required of reported metrics.
class KahanSum {
 public:
  void add(double v) {
    const double y = v - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace twmq
