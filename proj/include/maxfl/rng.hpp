#pragma once

// Counter-based splittable random streams. Every consumer of randomness
// owns a stream keyed by (seed, client, round, purpose), so parallel
// evaluation order cannot change any result: the same key always replays
// the same bit-exact sequence.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace maxfl {

// What a stream is for. Part of the stream key; two streams with distinct
// purposes are independent even for the same (client, round).
enum class Purpose : std::uint64_t {
  ModelInit = 1,
  Warmup = 2,
  LocalTrain = 3,
  ByzantineNoise = 4,
  DataGen = 5,
  Partition = 6,
  Split = 7,
  LabelFlip = 8,
  ClientSampling = 9,
  MeanEst = 10,
  FineTune = 11,
  ByzantineAssign = 12,
};

struct StreamId {
  std::uint64_t client = 0;  // client index, trial index, or 0
  std::uint64_t round = 0;   // round index or context tag (0 seen / 1 unseen)
  Purpose purpose = Purpose::DataGen;
};

namespace detail {
// SplitMix64 finalizer (Stafford mix); bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamId id) {
    using detail::mix64;
    std::uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ull);
    s = mix64(s ^ (id.client + 0xBF58476D1CE4E5B9ull));
    s = mix64(s ^ (id.round + 0x94D049BB133111EBull));
    s = mix64(s ^ (static_cast<std::uint64_t>(id.purpose) + 0xD6E8FEB86659FD93ull));
    state_ = s;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::mix64(state_);
  }

  /// Uniform double in [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call;
  /// no cached spare, so the draw count per call is fixed.
  double next_gaussian() {
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform integer in [0, bound), unbiased via rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by a stream.
template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// k distinct indices drawn uniformly from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           RngStream& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  if (k > n) k = n;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace maxfl
