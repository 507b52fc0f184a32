#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace growlen {

// splitmix64: seed mixing and derived-stream seeds. Fixed algorithm so that
// every deterministic contract is pinned by this code, not by the standard
// library's distribution internals.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive an independent stream seed from (base, stream_id).
inline uint64_t derive_seed(uint64_t base, uint64_t stream_id) {
  uint64_t s = base ^ (0x9e3779b97f4a7c15ull * (stream_id + 1));
  (void)splitmix64(s);
  return splitmix64(s);
}

// xoshiro256** — small, fast, and self-contained.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, n). Rejection-free modulo is fine at our scales.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (one value per call; partner discarded
  // to keep the stream position independent of call parity).
  float next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 1e-300) u1 = next_double();
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
  }

  template <typename T>
  void shuffle(T* begin, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = next_below(i);
      T tmp = begin[i - 1];
      begin[i - 1] = begin[j];
      begin[j] = tmp;
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

}  // namespace growlen
