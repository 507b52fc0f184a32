#include "growlen/digest.hpp"

#include <cstdio>

namespace growlen {

std::string hex_digest(uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

}  // namespace growlen
