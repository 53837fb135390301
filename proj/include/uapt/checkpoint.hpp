#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uapt/blocks.hpp"
#include "uapt/sha256.hpp"
#include "uapt/tensor.hpp"

// Binary checkpoint format:
//   "UAPT" | u32 version | u64 config length + UTF-8 config text |
//   u64 tensor count | per tensor: u64 name length + name, u8 dtype
//   (0 = f32, 1 = f64), u8 rank, rank x u64 dims, little-endian raw values.
// Round trips are byte-identical; readers reject unknown layouts loudly.

namespace uapt {

constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  enum class Kind {
    io,
    bad_magic,
    version_mismatch,
    truncated_tensor,
    dim_overflow,
    bad_payload,
  };
  Kind kind;
  CheckpointError(Kind k, const std::string& what)
      : std::runtime_error(what), kind(k) {}
};

struct CheckpointData {
  uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::vector<std::pair<std::string, TensorF>> tensors;  // file order
};

void write_checkpoint(const std::string& path, const std::string& config_text,
                      const ParamSet<float>& tensors);
CheckpointData read_checkpoint(const std::string& path);

// Strict both-ways match: every stored tensor must name a target (same dims),
// every target must be filled exactly once.
void assign_checkpoint(const CheckpointData& data, const ParamSet<float>& targets);

// Digest of names, dims and raw value bytes, in set order.
template <typename T>
std::string param_digest(const ParamSet<T>& params) {
  Sha256 h;
  for (const auto& [name, p] : params) {
    h.update(name);
    const uint64_t rank = static_cast<uint64_t>(p->rank());
    h.update(&rank, sizeof(rank));
    for (int i = 0; i < p->rank(); ++i) {
      const uint64_t d = static_cast<uint64_t>(p->dim(i));
      h.update(&d, sizeof(d));
    }
    h.update(p->values->data(), p->numel() * sizeof(T));
  }
  return Sha256::hex(h.finish());
}

}  // namespace uapt
