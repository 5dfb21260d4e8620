#include "pgdd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "pgdd/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need byte swaps");

namespace pgdd {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'D', 'D'};
constexpr uint32_t kDtypeF32 = 0;

void put_u32(std::string& s, uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& s, uint64_t v) { s.append(reinterpret_cast<const char*>(&v), 8); }

struct Reader {
  const std::string& s;
  size_t off = 0;

  void need(size_t n) const {
    if (off + n > s.size()) throw std::runtime_error("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, s.data() + off, 4);
    off += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, s.data() + off, 8);
    off += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string out = s.substr(off, n);
    off += n;
    return out;
  }
};

}  // namespace

std::string CheckpointBundle::serialize() const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, metadata_json.size());
  out += metadata_json;
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, kDtypeF32);
    put_u32(out, static_cast<uint32_t>(t.value.dims.size()));
    for (int64_t d : t.value.dims) put_u64(out, static_cast<uint64_t>(d));
    out.append(reinterpret_cast<const char*>(t.value.ptr()), t.value.data.size() * sizeof(float));
  }
  return out;
}

CheckpointBundle CheckpointBundle::deserialize(const std::string& bytes) {
  Reader r{bytes};
  std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw std::runtime_error("not a PGDD checkpoint (bad magic)");
  uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  CheckpointBundle b;
  uint64_t meta_len = r.u64();
  b.metadata_json = r.bytes(static_cast<size_t>(meta_len));
  uint32_t count = r.u32();
  b.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    uint32_t dtype = r.u32();
    if (dtype != kDtypeF32)
      throw std::runtime_error("unknown tensor dtype code " + std::to_string(dtype) + " for \"" +
                               t.name + "\"");
    uint32_t rank = r.u32();
    Shape dims(rank);
    for (uint32_t d = 0; d < rank; ++d) dims[d] = static_cast<int64_t>(r.u64());
    t.value = TensorF(dims);
    size_t nbytes = t.value.data.size() * sizeof(float);
    r.need(nbytes);
    std::memcpy(t.value.ptr(), bytes.data() + r.off, nbytes);
    r.off += nbytes;
    b.tensors.push_back(std::move(t));
  }
  if (r.off != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint payload");
  return b;
}

bool CheckpointBundle::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

const TensorF& CheckpointBundle::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw std::out_of_range("checkpoint has no tensor \"" + name + "\"");
}

void save_checkpoint(const CheckpointBundle& b, const std::string& path) {
  atomic_write_file(path, b.serialize());
}

CheckpointBundle load_checkpoint(const std::string& path) {
  return CheckpointBundle::deserialize(read_file(path));
}

uint64_t checkpoint_hash(const CheckpointBundle& b) {
  std::string bytes = b.serialize();
  return fnv1a64(bytes.data(), bytes.size());
}

uint64_t checkpoint_file_hash(const std::string& path) {
  std::string bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

CheckpointBundle bundle_params(const ParamSet& params, const std::string& metadata_json) {
  CheckpointBundle b;
  b.metadata_json = metadata_json;
  b.tensors.reserve(params.items.size());
  for (const auto& it : params.items) b.tensors.push_back({it.name, it.value});
  return b;
}

ParamSet params_from_bundle(const CheckpointBundle& b) {
  ParamSet p;
  if (!b.metadata_json.empty()) {
    auto meta = nlohmann::json::parse(b.metadata_json);
    if (meta.contains("owner")) p.owner = meta["owner"].get<std::string>();
  }
  for (const auto& t : b.tensors) p.add(t.name, t.value.dims) = t.value;
  return p;
}

}  // namespace pgdd
