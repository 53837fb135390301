#include "uapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace uapt {

namespace {

using Kind = CheckpointError::Kind;

constexpr char kMagic[4] = {'U', 'A', 'P', 'T'};
constexpr uint64_t kMaxNameLen = 1 << 16;
constexpr uint64_t kMaxDim = 1u << 30;
constexpr uint64_t kMaxNumel = 1u << 30;

void put(std::ofstream& f, const void* p, size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ofstream& f, uint32_t v) { put(f, &v, 4); }
void put_u64(std::ofstream& f, uint64_t v) { put(f, &v, 8); }

struct Reader {
  std::ifstream f;
  explicit Reader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw CheckpointError(Kind::io, "checkpoint: cannot open " + path);
  }
  void bytes(void* p, size_t n, const char* what) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f.gcount()) != n)
      throw CheckpointError(Kind::truncated_tensor,
                            std::string("checkpoint: truncated tensor data (") + what + ")");
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
};

}  // namespace

void write_checkpoint(const std::string& path, const std::string& config_text,
                      const ParamSet<float>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(Kind::io, "checkpoint: cannot write " + path);
  put(f, kMagic, 4);
  put_u32(f, kCheckpointVersion);
  put_u64(f, config_text.size());
  put(f, config_text.data(), config_text.size());
  put_u64(f, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(f, name.size());
    put(f, name.data(), name.size());
    const uint8_t dtype = 0;  // f32
    put(f, &dtype, 1);
    const uint8_t rank = static_cast<uint8_t>(t->rank());
    put(f, &rank, 1);
    for (int i = 0; i < t->rank(); ++i) put_u64(f, static_cast<uint64_t>(t->dim(i)));
    put(f, t->values->data(), t->numel() * sizeof(float));
  }
  f.flush();
  if (!f) throw CheckpointError(Kind::io, "checkpoint: write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(Kind::bad_magic, "checkpoint: bad magic bytes");

  CheckpointData data;
  data.version = r.u32("version");
  if (data.version != kCheckpointVersion)
    throw CheckpointError(Kind::version_mismatch,
                          "checkpoint: version mismatch (file has " +
                              std::to_string(data.version) + ", expected " +
                              std::to_string(kCheckpointVersion) + ")");

  const uint64_t cfg_len = r.u64("config length");
  if (cfg_len > (1u << 24))
    throw CheckpointError(Kind::bad_payload, "checkpoint: config blob too large");
  data.config_text.resize(cfg_len);
  if (cfg_len > 0) r.bytes(data.config_text.data(), cfg_len, "config");

  const uint64_t count = r.u64("tensor count");
  if (count > (1u << 20))
    throw CheckpointError(Kind::bad_payload, "checkpoint: tensor count too large");
  data.tensors.reserve(count);
  for (uint64_t k = 0; k < count; ++k) {
    const uint64_t name_len = r.u64("name length");
    if (name_len == 0 || name_len > kMaxNameLen)
      throw CheckpointError(Kind::bad_payload, "checkpoint: bad tensor name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");

    uint8_t dtype, rank;
    r.bytes(&dtype, 1, "dtype");
    r.bytes(&rank, 1, "rank");
    if (dtype > 1)
      throw CheckpointError(Kind::bad_payload, "checkpoint: unknown dtype code");
    if (rank == 0 || rank > 3)
      throw CheckpointError(Kind::bad_payload, "checkpoint: unsupported rank");

    std::vector<int> dims(rank);
    uint64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      const uint64_t d = r.u64("dim");
      if (d == 0 || d > kMaxDim || numel > kMaxNumel / d)
        throw CheckpointError(Kind::dim_overflow, "checkpoint: dim overflow in " + name);
      dims[static_cast<size_t>(i)] = static_cast<int>(d);
      numel *= d;
    }

    std::vector<float> values(numel);
    if (dtype == 0) {
      r.bytes(values.data(), numel * sizeof(float), name.c_str());
    } else {
      std::vector<double> wide(numel);
      r.bytes(wide.data(), numel * sizeof(double), name.c_str());
      for (uint64_t i = 0; i < numel; ++i) values[i] = static_cast<float>(wide[i]);
    }
    data.tensors.emplace_back(std::move(name), TensorF(dims, std::move(values)));
  }

  // trailing garbage means the file is not what the writer produced
  char extra;
  r.f.read(&extra, 1);
  if (r.f.gcount() != 0)
    throw CheckpointError(Kind::bad_payload, "checkpoint: trailing bytes after last tensor");
  return data;
}

void assign_checkpoint(const CheckpointData& data, const ParamSet<float>& targets) {
  std::unordered_map<std::string, Tensor<float>*> by_name;
  for (const auto& [name, p] : targets)
    if (!by_name.emplace(name, p).second)
      throw CheckpointError(Kind::bad_payload, "checkpoint: duplicate target name " + name);

  std::unordered_map<std::string, bool> filled;
  for (const auto& [name, t] : data.tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError(Kind::bad_payload, "checkpoint: unknown tensor name " + name);
    if (filled[name])
      throw CheckpointError(Kind::bad_payload, "checkpoint: tensor stored twice: " + name);
    if (it->second->dims != t.dims)
      throw CheckpointError(Kind::bad_payload, "checkpoint: dims mismatch for " + name);
    *it->second->values = *t.values;
    filled[name] = true;
  }
  for (const auto& [name, p] : targets)
    if (!filled[name])
      throw CheckpointError(Kind::bad_payload, "checkpoint: missing tensor " + name);
}

}  // namespace uapt
