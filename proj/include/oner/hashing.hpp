#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace oner {

// FNV-1a 64-bit over raw bytes. Used for weight fingerprints and config
// digests; not cryptographic.
inline uint64_t fnv1a64(std::span<const std::byte> bytes,
                        uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::as_bytes(std::span(s.data(), s.size())));
}

// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320). Trailer checksum of the
// experience file format.
inline uint32_t crc32(std::span<const std::byte> bytes, uint32_t crc = 0) {
  crc = ~crc;
  for (std::byte b : bytes) {
    crc ^= static_cast<uint32_t>(b);
    for (int k = 0; k < 8; ++k) {
      crc = (crc >> 1) ^ (0xEDB88320u & (~(crc & 1u) + 1u));
    }
  }
  return ~crc;
}

}  // namespace oner
