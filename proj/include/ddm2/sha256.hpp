#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ddm2 {

/// Incremental SHA-256 (OpenSSL-backed). Used for artifact fingerprints and
/// checkpoint integrity trailers.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, size_t len);
  std::array<uint8_t, 32> digest();  // finalizes

 private:
  void* ctx_;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::vector<uint8_t>& bytes);
std::string sha256_file_hex(const std::string& path);
std::string hex_string(const std::array<uint8_t, 32>& digest);

}  // namespace ddm2
