#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dgcount/losses.hpp"
#include "dgcount/model.hpp"
#include "dgcount/synth.hpp"

namespace dgcount {

// Component switches for the ablation table. All false = full method.
struct AblationFlags {
  bool disable_rec = false;
  bool disable_orth = false;
  bool disable_hard_regions = false;
  bool static_division = false;  // cluster backbone features once, never refresh
  bool disable_meta = false;      // plain training on the meta-train loss
  bool disable_ds_branch = false;
  bool disable_memory = false;    // no DICM/DSCM re-encoding at all

  bool operator==(const AblationFlags&) const = default;
};

struct OptimizerConfig {
  double outer_lr = 1e-3;  // gamma, Adam
  double inner_lr = 1e-3;  // alpha, plain SGD for the intermediate model
  int epochs = 20;
  int iterations = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  synth::DatasetSpec data;
  std::size_t crop = 48;
  model::BackboneConfig model;
  std::size_t memory_m = 64;
  std::size_t memory_n = 16;
  double memory_temperature = 1.0;
  std::size_t k = 3;
  losses::LossWeights loss;
  OptimizerConfig optim;
  std::uint64_t seed = 0;
  AblationFlags ablation;
  std::string output_dir = "runs/default";
};

// 64x64 scenes, C=32, M=64, N=16, K=3, 20 epochs x 20 iterations.
TrainConfig desk_preset();
// 320 crops, C=256, M=1024, N=256, gamma=1e-5, 150 x 100. Valid, but far
// beyond a desk-scale budget.
TrainConfig full_scale_preset();

// Throws ValidationError naming the offending field.
void validate(const TrainConfig& cfg);

nlohmann::json to_json(const TrainConfig& cfg);
// Unknown keys are rejected; absent keys keep the desk-preset default.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const TrainConfig& cfg, const std::filesystem::path& path);

}  // namespace dgcount
