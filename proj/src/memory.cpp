#include "dgcount/memory.hpp"

#include <cmath>

#include "dgcount/ops.hpp"
#include "dgcount/rng.hpp"

namespace dgcount::memory {

Reencoded reencode(const Tensor& pixels, const MemoryBank& bank, double temperature) {
  if (pixels.ndim() != 2 || bank.vectors.ndim() != 2) {
    throw ContractError("reencode: expected 2-D pixel matrix and bank");
  }
  if (pixels.dim(1) != bank.channels()) {
    throw ContractError("reencode: feature channels " + std::to_string(pixels.dim(1)) +
                        " do not match bank channels " + std::to_string(bank.channels()));
  }
  if (!(temperature > 0.0)) throw ContractError("reencode: temperature must be positive");
  Tensor logits = ops::matmul(pixels, ops::transpose(bank.vectors));
  if (temperature != 1.0) logits = ops::scale(logits, 1.0 / temperature);
  Tensor weights = ops::softmax(logits, 1);
  return {ops::matmul(weights, bank.vectors), weights};
}

const MemoryBank& select_bank(const DomainSpecificMemory& dscm, int domain_label) {
  if (domain_label < 0 || static_cast<std::size_t>(domain_label) >= dscm.count()) {
    throw ContractError("select_bank: label " + std::to_string(domain_label) +
                        " outside [0, " + std::to_string(dscm.count()) + ")");
  }
  return dscm.banks[static_cast<std::size_t>(domain_label)];
}

std::pair<MemoryBank, DomainSpecificMemory> init_banks(std::size_t m, std::size_t n,
                                                       std::size_t channels, std::size_t k,
                                                       std::uint64_t seed) {
  if (m == 0 || n == 0 || channels == 0 || k == 0) throw ContractError("init_banks: sizes must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  MemoryBank dicm{Tensor::create({m, channels}, Init::uniform(bound, Rng::derive(seed, 0)), true), 0};
  DomainSpecificMemory dscm;
  for (std::size_t i = 0; i < k; ++i) {
    dscm.banks.push_back(
        {Tensor::create({n, channels}, Init::uniform(bound, Rng::derive(seed, i + 1)), true),
         static_cast<int>(i + 1)});
  }
  return {std::move(dicm), std::move(dscm)};
}

std::string dscm_name(std::size_t k) { return "memory.dscm." + std::to_string(k); }

void store_banks(NamedTensors& params, const MemoryBank& dicm, const DomainSpecificMemory& dscm) {
  params.insert_or_assign(kDicmName, dicm.vectors);
  for (std::size_t k = 0; k < dscm.count(); ++k) params.insert_or_assign(dscm_name(k), dscm.banks[k].vectors);
}

MemoryBank dicm_from(const NamedTensors& params) {
  auto it = params.find(kDicmName);
  if (it == params.end()) throw ContractError("parameter set has no " + kDicmName);
  return {it->second, 0};
}

DomainSpecificMemory dscm_from(const NamedTensors& params) {
  DomainSpecificMemory dscm;
  for (std::size_t k = 0;; ++k) {
    auto it = params.find(dscm_name(k));
    if (it == params.end()) break;
    dscm.banks.push_back({it->second, static_cast<int>(k + 1)});
  }
  return dscm;
}

}  // namespace dgcount::memory
