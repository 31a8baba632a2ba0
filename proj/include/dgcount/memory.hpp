#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgcount/checkpoint.hpp"
#include "dgcount/tensor.hpp"

namespace dgcount::memory {

// A learnable set of vectors [size x C]. bank_id 0 is the domain-invariant
// memory; 1..K are the domain-specific sets.
struct MemoryBank {
  Tensor vectors;
  int bank_id = 0;

  std::size_t size() const { return vectors.dim(0); }
  std::size_t channels() const { return vectors.dim(1); }
};

struct DomainSpecificMemory {
  std::vector<MemoryBank> banks;
  std::size_t count() const { return banks.size(); }
};

struct Reencoded {
  Tensor features;  // [hw x C]
  Tensor weights;   // [hw x M], rows sum to one
};

// Each pixel vector becomes softmax(f_j V^T / temperature) V.
Reencoded reencode(const Tensor& pixels, const MemoryBank& bank, double temperature = 1.0);

const MemoryBank& select_bank(const DomainSpecificMemory& dscm, int domain_label);

// Uniform(+-1/sqrt(C)) banks; DICM and every DSCM set use separate streams.
std::pair<MemoryBank, DomainSpecificMemory> init_banks(std::size_t m, std::size_t n,
                                                       std::size_t channels, std::size_t k,
                                                       std::uint64_t seed);

inline const std::string kDicmName = "memory.dicm";
std::string dscm_name(std::size_t k);

// Views over / insertion into a named parameter map.
void store_banks(NamedTensors& params, const MemoryBank& dicm, const DomainSpecificMemory& dscm);
MemoryBank dicm_from(const NamedTensors& params);
DomainSpecificMemory dscm_from(const NamedTensors& params);

}  // namespace dgcount::memory
