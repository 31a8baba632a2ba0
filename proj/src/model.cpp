#include "dgcount/model.hpp"

#include <cmath>

#include "dgcount/memory.hpp"
#include "dgcount/ops.hpp"
#include "dgcount/rng.hpp"

namespace dgcount::model {

namespace {

void add_conv(Params& params, const std::string& prefix, std::size_t out_c, std::size_t in_c,
              std::size_t k, Rng& seeds) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in_c * k * k));  // He uniform
  params.emplace(prefix + ".w",
                 Tensor::create({out_c, in_c, k, k}, Init::uniform(bound, seeds.next_u64()), true));
  params.emplace(prefix + ".b", Tensor::create({out_c}, Init::zeros(), true));
}

const Tensor& get(const Params& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

Tensor conv_relu(const Tensor& x, const Params& params, const std::string& prefix,
                 std::size_t padding) {
  return ops::relu(ops::conv2d(x, get(params, prefix + ".w"), get(params, prefix + ".b"), 1, padding));
}

}  // namespace

Params init_model_params(const BackboneConfig& cfg, std::uint64_t seed) {
  Rng seeds(seed);
  Params p;
  const std::size_t c = cfg.feature_channels;
  add_conv(p, "encoder.conv1", cfg.widths[0], 1, 3, seeds);
  add_conv(p, "encoder.conv2", cfg.widths[1], cfg.widths[0], 3, seeds);
  add_conv(p, "encoder.conv3", cfg.widths[2], cfg.widths[1], 3, seeds);
  add_conv(p, "encoder.fuse", c, cfg.widths[0] + cfg.widths[1] + cfg.widths[2], 1, seeds);
  add_conv(p, "di", c, c, 1, seeds);
  add_conv(p, "ds", c, c, 1, seeds);
  add_conv(p, "est", 1, c, 1, seeds);
  // A randomly initialised estimator can start with every output below zero,
  // where the ReLU never recovers. Start flat and positive instead.
  for (auto& v : p.at("est.w").mutable_data()) v = 0.0;
  for (auto& v : p.at("est.b").mutable_data()) v = kEstimatorBiasInit;
  return p;
}

Tensor encode(const Tensor& image, const Params& params, const BackboneConfig& cfg) {
  if (image.ndim() != 3 || image.dim(0) != 1) {
    throw ContractError("encode: expected a [1 x H x W] image, got " + shape_str(image.shape()));
  }
  const std::size_t mult = cfg.input_multiple();
  if (image.dim(1) % mult != 0 || image.dim(2) % mult != 0) {
    throw ContractError("encode: image " + shape_str(image.shape()) + " not divisible by " +
                        std::to_string(mult));
  }
  const std::size_t ds = cfg.downsample;
  Tensor s1 = ops::avg_pool2d(conv_relu(image, params, "encoder.conv1", 1), ds);  // H/2
  Tensor s2 = ops::avg_pool2d(conv_relu(s1, params, "encoder.conv2", 1), ds);     // H/4
  Tensor s3 = ops::avg_pool2d(conv_relu(s2, params, "encoder.conv3", 1), ds);     // H/8
  Tensor fused = ops::concat({ops::avg_pool2d(s1, ds), s2, ops::upsample_nearest(s3, ds)}, 0);
  return conv_relu(fused, params, "encoder.fuse", 0);
}

Tensor di_unit(const Tensor& backbone, const Params& params) {
  return conv_relu(backbone, params, "di", 0);
}

Tensor ds_unit(const Tensor& backbone, const Params& params) {
  return conv_relu(backbone, params, "ds", 0);
}

Tensor estimate_density(const Tensor& features, const Params& params) {
  return conv_relu(features, params, "est", 0);
}

double predicted_count(const Tensor& density, const BackboneConfig& cfg) {
  double s = 0.0;
  for (double v : density.data()) s += v;
  const double area = static_cast<double>(cfg.feature_stride() * cfg.feature_stride());
  return s * area / cfg.density_scale;
}

Tensor density_target(const Tensor& gt_density, const BackboneConfig& cfg) {
  NoGradGuard guard;
  return ops::scale(ops::avg_pool2d(gt_density, cfg.feature_stride()), cfg.density_scale);
}

Tensor to_pixels(const Tensor& chw) {
  if (chw.ndim() != 3) throw ShapeError("to_pixels: expected [C x h x w]");
  return ops::transpose(ops::reshape(chw, {chw.dim(0), chw.dim(1) * chw.dim(2)}));
}

Tensor from_pixels(const Tensor& pixels, std::size_t h, std::size_t w) {
  if (pixels.ndim() != 2 || pixels.dim(0) != h * w) throw ShapeError("from_pixels: bad shape");
  return ops::reshape(ops::transpose(pixels), {pixels.dim(1), h, w});
}

double infer(const Tensor& image, const Params& params, const Tensor& dicm,
             const BackboneConfig& cfg, double temperature) {
  NoGradGuard guard;
  Tensor f = di_unit(encode(image, params, cfg), params);
  const std::size_t h = f.dim(1), w = f.dim(2);
  auto re = memory::reencode(to_pixels(f), memory::MemoryBank{dicm, 0}, temperature);
  return predicted_count(estimate_density(from_pixels(re.features, h, w), params), cfg);
}

double infer_without_memory(const Tensor& image, const Params& params, const BackboneConfig& cfg) {
  NoGradGuard guard;
  Tensor f = di_unit(encode(image, params, cfg), params);
  return predicted_count(estimate_density(f, params), cfg);
}

void validate_params(const Params& params, const BackboneConfig& cfg) {
  const auto expected = init_model_params(cfg, 0);
  for (const auto& [name, t] : expected) {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw ValidationError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                            " but the configuration expects " + shape_str(t.shape()));
    }
  }
}

}  // namespace dgcount::model
