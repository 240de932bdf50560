#include "tagnn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace tagnn {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'G', 'N'};
constexpr uint32_t kVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

/// Bounds-checked little-endian reader over a byte image.
struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes.size())
      raise(ErrorKind::checkpoint,
            std::string("truncated checkpoint: ran out of bytes reading ") + what);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }
  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(&bytes[pos]), n);
    pos += n;
    return s;
  }
};

}  // namespace

uint64_t fnv1a_64(const uint8_t* data, size_t len, uint64_t seed) {
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t vocab_hash(const Vocabulary& v) {
  uint64_t h = 14695981039346656037ULL;
  for (const std::string& ext : v.external) {
    h = fnv1a_64(reinterpret_cast<const uint8_t*>(ext.data()), ext.size(), h);
    const uint8_t sep = '\n';
    h = fnv1a_64(&sep, 1, h);
  }
  return h;
}

const std::string& Checkpoint::need(const std::string& key) const {
  auto it = config.find(key);
  if (it == config.end())
    raise(ErrorKind::checkpoint, "checkpoint metadata missing key '" + key + "'");
  return it->second;
}

std::vector<uint8_t> checkpoint_bytes(const Checkpoint& c) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    if (name.size() > 0xffff)
      raise(ErrorKind::checkpoint, "tensor name too long: " + name.substr(0, 32));
    if (t.rank() > 0xff) raise(ErrorKind::checkpoint, "tensor rank too large");
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int dim : t.shape) put_u32(out, static_cast<uint32_t>(dim));
    for (float v : t.data) put_f32(out, v);
  }
  std::string kv;
  for (const auto& [k, v] : c.config) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos)
      raise(ErrorKind::checkpoint, "metadata key/value contains reserved characters: " + k);
    kv += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<uint32_t>(kv.size()));
  out.insert(out.end(), kv.begin(), kv.end());
  put_u64(out, fnv1a_64(out.data(), out.size()));
  return out;
}

Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 4 + 4 + 8)
    raise(ErrorKind::checkpoint, "truncated checkpoint: file too small for header");
  const size_t body = bytes.size() - 8;
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<uint64_t>(bytes[body + i]) << (8 * i);
  const uint64_t computed = fnv1a_64(bytes.data(), body);
  if (stored != computed)
    raise(ErrorKind::checkpoint, "checkpoint content hash mismatch: file is corrupt");

  Reader r{bytes};
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    raise(ErrorKind::checkpoint, "bad checkpoint magic: not a checkpoint file");
  const uint32_t version = r.u32("version");
  if (version != kVersion)
    raise(ErrorKind::checkpoint, "unsupported checkpoint version " + std::to_string(version) +
                                     " (expected " + std::to_string(kVersion) + ")");
  Checkpoint c;
  const uint32_t count = r.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const uint8_t rank = r.u8("tensor rank");
    Shape shape;
    size_t numel = 1;
    for (int k = 0; k < rank; ++k) {
      const uint32_t dim = r.u32("tensor dim");
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    if (numel > (bytes.size() / 4) + 1)
      raise(ErrorKind::checkpoint, "truncated checkpoint: tensor '" + name + "' payload overruns file");
    Tensor t = Tensor::zeros(shape);
    for (size_t k = 0; k < numel; ++k) t.data[k] = r.f32("tensor payload");
    c.tensors.push_back({name, std::move(t)});
  }
  const uint32_t kv_len = r.u32("config block length");
  const std::string kv = r.str(kv_len, "config block");
  size_t start = 0;
  while (start < kv.size()) {
    size_t end = kv.find('\n', start);
    if (end == std::string::npos) end = kv.size();
    const std::string line = kv.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      raise(ErrorKind::checkpoint, "malformed metadata line '" + line + "'");
    c.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (r.pos != body)
    raise(ErrorKind::checkpoint, "checkpoint has " + std::to_string(body - r.pos) +
                                     " unexpected trailing bytes before the hash");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::vector<uint8_t> bytes = checkpoint_bytes(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::checkpoint, "cannot open checkpoint path for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorKind::checkpoint, "failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::checkpoint, "cannot open checkpoint file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

Checkpoint make_checkpoint(const ModelParams& p,
                           const std::map<std::string, std::string>& extra) {
  Checkpoint c;
  for (const auto& [name, t] : p.named()) c.tensors.push_back({name, *t});
  c.config["m"] = std::to_string(p.m);
  c.config["d"] = std::to_string(p.d);
  c.config["variant"] = variant_name(p.variant);
  for (const auto& [k, v] : extra) c.config[k] = v;
  return c;
}

ModelParams params_from_checkpoint(const Checkpoint& c) {
  ModelParams p;
  p.m = std::stoi(c.need("m"));
  p.d = std::stoi(c.need("d"));
  p.variant = parse_variant(c.need("variant"));
  if (p.m < 1 || p.d < 1)
    raise(ErrorKind::checkpoint, "checkpoint metadata has invalid m/d");

  // Allocate the variant's tensor set, then fill each from the file.
  ModelParams shaped = init_params<float>(p.m, p.d, 0, p.variant);
  auto expected = shaped.named();
  if (expected.size() != c.tensors.size())
    raise(ErrorKind::checkpoint,
          "checkpoint holds " + std::to_string(c.tensors.size()) + " tensors but variant " +
              variant_name(p.variant) + " needs " + std::to_string(expected.size()));
  for (auto& [name, slot] : expected) {
    const Tensor* t = c.find(name);
    if (!t) raise(ErrorKind::checkpoint, "checkpoint missing tensor '" + name + "'");
    if (t->shape != slot->shape)
      raise(ErrorKind::checkpoint, "checkpoint tensor '" + name + "' has shape " +
                                       shape_str(t->shape) + ", expected " +
                                       shape_str(slot->shape));
    *slot = *t;
  }
  shaped.m = p.m;
  shaped.d = p.d;
  shaped.variant = p.variant;
  return shaped;
}

}  // namespace tagnn
