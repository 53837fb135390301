#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

// Minimal SHA-256 (FIPS 180-4) used to digest parameter bytes for the
// frozen-backbone contract. No external dependencies.

namespace uapt {

class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::array<uint8_t, 32> finish();

  static std::string hex(const std::array<uint8_t, 32>& digest);

 private:
  void process_block(const uint8_t* p);

  uint32_t h_[8];
  uint64_t total_bits_ = 0;
  uint8_t buf_[64];
  size_t buf_len_ = 0;
  bool finished_ = false;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);

}  // namespace uapt
