#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tagnn/data.hpp"
#include "tagnn/model.hpp"

namespace tagnn {

/// 64-bit FNV-1a over a byte range.
uint64_t fnv1a_64(const uint8_t* data, size_t len, uint64_t seed = 14695981039346656037ULL);

/// Stable digest of a vocabulary: external ids hashed in index order.
/// Guards checkpoints against being applied to a different item universe.
uint64_t vocab_hash(const Vocabulary& v);

/// On-disk training snapshot: named tensors plus a key=value metadata block
/// (model shape, variant, vocabulary digest, epoch, best validation metric,
/// training configuration). Round-trips byte-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> config;  // serialized sorted by key

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  /// Config value or a checkpoint error naming the missing key.
  const std::string& need(const std::string& key) const;
};

/// Serialized image of a checkpoint (header, tensors, config block, trailing
/// content hash). Exposed separately so tests can corrupt specific bytes.
std::vector<uint8_t> checkpoint_bytes(const Checkpoint& c);
Checkpoint checkpoint_from_bytes(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// Bundles model parameters into a checkpoint. Metadata keys m, d and
/// variant are filled from the parameters; `extra` entries are merged in.
Checkpoint make_checkpoint(const ModelParams& p,
                           const std::map<std::string, std::string>& extra = {});

/// Rebuilds parameters from a loaded checkpoint, validating that exactly the
/// variant's tensor set is present with the right shapes.
ModelParams params_from_checkpoint(const Checkpoint& c);

}  // namespace tagnn
