#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dgcount/tensor.hpp"

namespace dgcount {

// Ordered name -> tensor map. Ordering by name keeps every iteration over
// parameters (optimizer updates, serialization) deterministic.
using NamedTensors = std::map<std::string, Tensor>;

// Binary layout, all integers little-endian:
//   magic "DGCKPT01" (8 bytes)
//   u32 tensor count
//   per tensor: u32 name length, name bytes (UTF-8),
//               u32 rank, u64 dims[rank], f64 data[product(dims)]
//   u64 FNV-1a hash of every preceding byte
void save_checkpoint(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

// Leaves with requires_grad set to `requires_grad`, values copied.
NamedTensors clone_tensors(const NamedTensors& tensors, bool requires_grad);

}  // namespace dgcount
