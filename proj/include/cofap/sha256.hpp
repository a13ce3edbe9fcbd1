// SHA-256 (FIPS 180-4), used for checkpoint content hashes and config hashes
// in artifact manifests.
#pragma once

#include <cstdint>
#include <string>

namespace cofap {

std::string sha256_hex(const void* data, size_t len);
inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

}  // namespace cofap
