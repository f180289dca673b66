#ifndef CVC_COMMON_HPP
#define CVC_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cvc {

// Error taxonomy. The CLI maps each class to a distinct exit code.
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BitstreamError : std::runtime_error {
  explicit BitstreamError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::runtime_error {
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}

// FNV-1a, used for config hashing and seed derivation.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), seed);
}

// CRC-32 (IEEE 802.3 polynomial, reflected). Used as substream integrity check.
uint32_t crc32(const void* data, size_t len, uint32_t crc = 0);

}  // namespace cvc

#endif
