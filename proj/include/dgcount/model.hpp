#pragma once

#include <array>
#include <cstdint>

#include "dgcount/checkpoint.hpp"
#include "dgcount/tensor.hpp"

namespace dgcount::model {

// Every learnable tensor, including the memory banks, keyed by name:
//   encoder.conv{1,2,3}.{w,b}, encoder.fuse.{w,b}, di.{w,b}, ds.{w,b},
//   est.{w,b}, memory.dicm, memory.dscm.<k>
using Params = NamedTensors;

struct BackboneConfig {
  std::array<std::size_t, 3> widths{8, 16, 32};
  std::size_t feature_channels = 32;
  std::size_t downsample = 2;  // per stage
  // Ground-truth density is multiplied by this before the pixel loss so the
  // density term is not swamped by the feature losses; predicted counts are
  // divided by it. At desk scale the pixel-summed reconstruction term is
  // ~600 per branch; at 1000 the DI path learned only a constant count.
  double density_scale = 3000.0;

  // Input side length must be a multiple of this.
  std::size_t input_multiple() const { return downsample * downsample * downsample; }
  // Feature map is 1/feature_stride of the input resolution.
  std::size_t feature_stride() const { return downsample * downsample; }
};

inline constexpr double kEstimatorBiasInit = 0.1;

// Backbone and DI/DS units: He-uniform weights, +-sqrt(6/fan_in), zero
// biases. The estimator starts with zero weights and a small positive bias;
// meta::init_params then lifts the bias to the mean target density.
Params init_model_params(const BackboneConfig& cfg, std::uint64_t seed);

// image [1 x H x W] -> F [C x H/4 x W/4]: three conv stages, each resized to
// 1/4 resolution, concatenated and fused by a 1x1 conv.
Tensor encode(const Tensor& image, const Params& params, const BackboneConfig& cfg);

// 1x1 conv + ReLU on F, separate parameters per branch.
Tensor di_unit(const Tensor& backbone, const Params& params);
Tensor ds_unit(const Tensor& backbone, const Params& params);

// f~ [C x h x w] -> non-negative density [1 x h x w] in scaled units.
Tensor estimate_density(const Tensor& features, const Params& params);

// Count at input resolution: sum over cells x cell area / density_scale.
double predicted_count(const Tensor& density, const BackboneConfig& cfg);

// Ground truth [1 x H x W] -> pooled and scaled target [1 x H/4 x W/4].
Tensor density_target(const Tensor& gt_density, const BackboneConfig& cfg);

// [C x h x w] <-> [hw x C] pixel matrix.
Tensor to_pixels(const Tensor& chw);
Tensor from_pixels(const Tensor& pixels, std::size_t h, std::size_t w);

// DI-branch inference: encode -> di_unit -> DICM re-encoding -> estimator.
// Only encoder.*, di.*, est.* and the given DICM bank are read.
double infer(const Tensor& image, const Params& params, const Tensor& dicm,
             const BackboneConfig& cfg, double temperature = 1.0);
// Same pipeline without memory re-encoding (memory-free baseline).
double infer_without_memory(const Tensor& image, const Params& params, const BackboneConfig& cfg);

// Shape check of a parameter set against a config; throws ValidationError
// naming the first offending tensor.
void validate_params(const Params& params, const BackboneConfig& cfg);

}  // namespace dgcount::model
