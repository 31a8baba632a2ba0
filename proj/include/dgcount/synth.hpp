#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dgcount/tensor.hpp"

namespace dgcount::synth {

inline constexpr std::size_t kDefaultKernelSize = 15;
inline constexpr double kDefaultSigma = 15.0 / 4.0;

// Appearance of one synthetic domain. Only appearance: head positions are
// sampled independently of the style.
struct StyleParams {
  double background_frequency = 0.1;  // cycles per pixel of the stripe texture
  double brightness = 0.5;            // background mean in [0, 1]
  int head_radius_px = 2;
  double noise_sigma = 0.02;
  double head_contrast = 0.4;  // signed: > 0 bright heads, < 0 dark heads
  double texture_amplitude = 0.15;
  int style_id = 0;
};

// Fixed style table; ids beyond the hand-picked ones are generated from the id.
StyleParams default_style(int style_id);

struct Point {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const Point&) const = default;
};

struct CrowdSample {
  Tensor image;    // [1 x H x W], values in [0, 1]
  std::vector<Point> points;
  Tensor density;  // [1 x H x W], sums to points.size()
  int style_id = 0;
  int subdomain_label = -1;  // -1 while unassigned
  int sample_id = 0;

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }
};

// Each head contributes a truncated Gaussian centred on its nearest pixel,
// renormalised over the in-image part of the window so it integrates to
// exactly one.
Tensor density_map(const std::vector<Point>& points, std::size_t height, std::size_t width,
                   std::size_t kernel_size = kDefaultKernelSize, double sigma = kDefaultSigma);

CrowdSample generate_scene(const StyleParams& style, int n_heads, std::size_t height,
                           std::size_t width, std::uint64_t seed);

enum class FlipMode { kRandom, kForceOn, kForceOff };

struct AugmentOptions {
  FlipMode flip = FlipMode::kRandom;
  std::size_t kernel_size = kDefaultKernelSize;
  double sigma = kDefaultSigma;
};

// Uniform crop plus horizontal flip with probability 0.5. Heads outside the
// window are dropped and the density is rebuilt from the survivors.
CrowdSample augment(const CrowdSample& sample, std::size_t crop_size, std::uint64_t seed,
                    const AugmentOptions& options = {});

struct DatasetSpec {
  int n_styles = 4;
  int per_style = 50;       // training samples per source style
  int test_per_style = 50;  // test samples per style, seen and held out
  std::vector<int> held_out_styles{3};
  std::size_t height = 64;
  std::size_t width = 64;
  int min_heads = 5;
  int max_heads = 40;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<CrowdSample> train;
  std::vector<CrowdSample> seen_test;  // fresh images of the training styles
  std::vector<CrowdSample> test;       // held-out styles
};

// Sample i of style s has sample_id s * (per_style + test_per_style) + i,
// with seen-style test images after the training ones, and is generated
// from seed (spec.seed ^ sample_id), so generation order does not matter.
Dataset make_dataset(const DatasetSpec& spec);

}  // namespace dgcount::synth
