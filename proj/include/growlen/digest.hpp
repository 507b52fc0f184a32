#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace growlen {

// FNV-1a 64-bit. Content fingerprinting for corpora, configs and
// checkpoints; not cryptographic.
class Fnv1a {
 public:
  void update(const void* ptr, size_t n) {
    const auto* p = static_cast<const unsigned char*>(ptr);
    for (size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ull;
    }
  }
  uint64_t value() const { return hash_; }

 private:
  uint64_t hash_ = 0xcbf29ce484222325ull;
};

inline uint64_t fnv1a(const void* ptr, size_t n) {
  Fnv1a h;
  h.update(ptr, n);
  return h.value();
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string hex_digest(uint64_t value);

}  // namespace growlen
