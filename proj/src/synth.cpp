#include "dgcount/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dgcount/rng.hpp"

namespace dgcount::synth {

namespace {

enum Stream : std::uint64_t { kCountStream = 0, kPointStream = 1, kRenderStream = 2 };

}  // namespace

StyleParams default_style(int style_id) {
  static const StyleParams kTable[] = {
      {0.05, 0.20, 2, 0.02, 0.45, 0.08, 0},
      {0.10, 0.40, 2, 0.04, 0.40, 0.12, 1},
      {0.18, 0.30, 3, 0.05, 0.35, 0.10, 2},
      {0.25, 0.50, 2, 0.06, 0.35, 0.15, 3},
  };
  if (style_id >= 0 && style_id < 4) return kTable[style_id];
  Rng rng(Rng::derive(0x5747E, static_cast<std::uint64_t>(style_id)));
  StyleParams s;
  s.background_frequency = rng.uniform(0.04, 0.35);
  s.brightness = rng.uniform(0.2, 0.8);
  s.head_radius_px = rng.uniform_int(2, 3);
  s.noise_sigma = rng.uniform(0.01, 0.08);
  s.head_contrast = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.3, 0.5);
  s.texture_amplitude = rng.uniform(0.05, 0.2);
  s.style_id = style_id;
  return s;
}

Tensor density_map(const std::vector<Point>& points, std::size_t height, std::size_t width,
                   std::size_t kernel_size, double sigma) {
  if (kernel_size % 2 == 0) throw ContractError("density_map: kernel size must be odd");
  if (!(sigma > 0.0)) throw ContractError("density_map: sigma must be positive");
  const long half = static_cast<long>(kernel_size / 2);
  const long h = static_cast<long>(height), w = static_cast<long>(width);
  std::vector<double> kernel(kernel_size * kernel_size);
  for (long dy = -half; dy <= half; ++dy)
    for (long dx = -half; dx <= half; ++dx)
      kernel[(dy + half) * kernel_size + (dx + half)] =
          std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * sigma * sigma));

  std::vector<double> map(height * width, 0.0);
  for (const auto& p : points) {
    if (!(p.row >= 0.0 && p.row <= h - 1.0 && p.col >= 0.0 && p.col <= w - 1.0)) {
      throw ContractError("density_map: point outside image");
    }
    const long cy = std::lround(p.row), cx = std::lround(p.col);
    const long y0 = std::max(-half, -cy), y1 = std::min(half, h - 1 - cy);
    const long x0 = std::max(-half, -cx), x1 = std::min(half, w - 1 - cx);
    double mass = 0.0;
    for (long dy = y0; dy <= y1; ++dy)
      for (long dx = x0; dx <= x1; ++dx) mass += kernel[(dy + half) * kernel_size + (dx + half)];
    for (long dy = y0; dy <= y1; ++dy)
      for (long dx = x0; dx <= x1; ++dx)
        map[(cy + dy) * w + (cx + dx)] += kernel[(dy + half) * kernel_size + (dx + half)] / mass;
  }
  return Tensor::from_data({1, height, width}, std::move(map));
}

CrowdSample generate_scene(const StyleParams& style, int n_heads, std::size_t height,
                           std::size_t width, std::uint64_t seed) {
  if (n_heads < 0) throw ContractError("generate_scene: negative head count");
  if (style.head_radius_px < 1) throw ContractError("generate_scene: head radius must be >= 1");
  if (style.noise_sigma < 0.0) throw ContractError("generate_scene: negative noise sigma");
  const double radius = style.head_radius_px;
  if (static_cast<double>(height) < 2.0 * radius + 1.0 ||
      static_cast<double>(width) < 2.0 * radius + 1.0) {
    throw ContractError("generate_scene: image smaller than a head");
  }

  CrowdSample s;
  s.style_id = style.style_id;

  Rng point_rng(Rng::derive(seed, kPointStream));
  s.points.reserve(static_cast<std::size_t>(n_heads));
  for (int i = 0; i < n_heads; ++i) {
    const double r = point_rng.uniform(radius, static_cast<double>(height) - 1.0 - radius);
    const double c = point_rng.uniform(radius, static_cast<double>(width) - 1.0 - radius);
    s.points.push_back({r, c});
  }

  Rng render_rng(Rng::derive(seed, kRenderStream));
  const double phase = render_rng.uniform(0.0, 2.0 * M_PI);
  std::vector<double> img(height * width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c)
      img[r * width + c] =
          style.brightness + style.texture_amplitude *
                                 std::sin(2.0 * M_PI * style.background_frequency *
                                              static_cast<double>(c) + phase);
  // Heads: discs with a one-pixel linear edge.
  for (const auto& p : s.points) {
    const long r0 = static_cast<long>(std::floor(p.row - radius - 1));
    const long r1 = static_cast<long>(std::ceil(p.row + radius + 1));
    const long c0 = static_cast<long>(std::floor(p.col - radius - 1));
    const long c1 = static_cast<long>(std::ceil(p.col + radius + 1));
    for (long r = std::max(0L, r0); r <= std::min<long>(height - 1, r1); ++r) {
      for (long c = std::max(0L, c0); c <= std::min<long>(width - 1, c1); ++c) {
        const double d = std::hypot(r - p.row, c - p.col);
        const double cover = std::clamp(radius + 0.5 - d, 0.0, 1.0);
        if (cover > 0.0) img[r * width + c] += style.head_contrast * cover;
      }
    }
  }
  for (auto& v : img) v = std::clamp(v + render_rng.normal(0.0, style.noise_sigma), 0.0, 1.0);

  s.image = Tensor::from_data({1, height, width}, std::move(img));
  s.density = density_map(s.points, height, width);
  return s;
}

CrowdSample augment(const CrowdSample& sample, std::size_t crop_size, std::uint64_t seed,
                    const AugmentOptions& options) {
  const std::size_t h = sample.height(), w = sample.width();
  if (crop_size == 0 || crop_size > std::min(h, w)) {
    throw ContractError("augment: crop size exceeds image");
  }
  Rng rng(seed);
  const std::size_t top = static_cast<std::size_t>(rng.below(h - crop_size + 1));
  const std::size_t left = static_cast<std::size_t>(rng.below(w - crop_size + 1));
  const bool coin = rng.bernoulli(0.5);
  const bool flip = options.flip == FlipMode::kForceOn ||
                    (options.flip == FlipMode::kRandom && coin);

  std::vector<double> img(crop_size * crop_size);
  const auto src = sample.image.data();
  for (std::size_t r = 0; r < crop_size; ++r)
    for (std::size_t c = 0; c < crop_size; ++c) {
      const std::size_t sc = flip ? crop_size - 1 - c : c;
      img[r * crop_size + c] = src[(top + r) * w + left + sc];
    }

  CrowdSample out;
  out.style_id = sample.style_id;
  out.subdomain_label = sample.subdomain_label;
  out.sample_id = sample.sample_id;
  const double lim = static_cast<double>(crop_size) - 1.0;
  for (const auto& p : sample.points) {
    const double r = p.row - static_cast<double>(top);
    const double c = p.col - static_cast<double>(left);
    if (r < 0.0 || r > lim || c < 0.0 || c > lim) continue;
    out.points.push_back({r, flip ? lim - c : c});
  }
  out.image = Tensor::from_data({1, crop_size, crop_size}, std::move(img));
  out.density = density_map(out.points, crop_size, crop_size, options.kernel_size, options.sigma);
  return out;
}

Dataset make_dataset(const DatasetSpec& spec) {
  if (spec.n_styles < 2) throw ContractError("make_dataset: need at least two styles");
  std::set<int> held(spec.held_out_styles.begin(), spec.held_out_styles.end());
  for (int s : held) {
    if (s < 0 || s >= spec.n_styles) throw ContractError("make_dataset: held-out style not in styles");
  }
  if (static_cast<int>(held.size()) >= spec.n_styles) {
    throw ContractError("make_dataset: no training styles left");
  }
  if (spec.min_heads < 0 || spec.max_heads < spec.min_heads) {
    throw ContractError("make_dataset: bad head count range");
  }

  enum class Split { kTrain, kSeenTest, kTest };
  struct Job {
    int style, index;
    Split split;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < spec.n_styles; ++s) {
    if (held.count(s)) {
      for (int i = 0; i < spec.test_per_style; ++i) jobs.push_back({s, i, Split::kTest});
    } else {
      for (int i = 0; i < spec.per_style; ++i) jobs.push_back({s, i, Split::kTrain});
      for (int i = 0; i < spec.test_per_style; ++i)
        jobs.push_back({s, spec.per_style + i, Split::kSeenTest});
    }
  }
  const int stride = spec.per_style + spec.test_per_style;

  std::vector<CrowdSample> samples(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long long j = 0; j < static_cast<long long>(jobs.size()); ++j) {
    const Job& job = jobs[static_cast<std::size_t>(j)];
    const int sample_id = job.style * stride + job.index;
    const std::uint64_t seed = spec.seed ^ static_cast<std::uint64_t>(sample_id);
    Rng count_rng(Rng::derive(seed, kCountStream));
    const int n_heads = count_rng.uniform_int(spec.min_heads, spec.max_heads);
    auto sample = generate_scene(default_style(job.style), n_heads, spec.height, spec.width, seed);
    sample.sample_id = sample_id;
    samples[static_cast<std::size_t>(j)] = std::move(sample);
  }

  Dataset ds;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    auto& dst = jobs[j].split == Split::kTrain ? ds.train : jobs[j].split == Split::kTest ? ds.test : ds.seen_test;
    dst.push_back(std::move(samples[j]));
  }
  return ds;
}

}  // namespace dgcount::synth
