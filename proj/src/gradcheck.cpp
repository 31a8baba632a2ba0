#include "dgcount/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dgcount/config.hpp"
#include "dgcount/losses.hpp"
#include "dgcount/memory.hpp"
#include "dgcount/meta_opt.hpp"
#include "dgcount/ops.hpp"
#include "dgcount/rng.hpp"
#include "dgcount/synth.hpp"

namespace dgcount::gradcheck {

double element_error(double analytic, double numeric, const Tolerance& tol) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= tol.abs_floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

double max_gradient_error(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                          const Tolerance& tol) {
  std::vector<Tensor> leaves = inputs;
  for (auto& t : leaves) t.release_grad();
  backward(fn(leaves));

  double worst = 0.0;
  NoGradGuard guard;
  for (auto& t : leaves) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + tol.eps;
      const double up = fn(leaves).item();
      data[i] = saved - tol.eps;
      const double down = fn(leaves).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * tol.eps);
      worst = std::max(worst, element_error(analytic[i], numeric, tol));
    }
  }
  return worst;
}

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(v), requires_grad);
}

// Values bounded away from zero so ReLU kinks stay outside the FD stencil.
Tensor away_from_zero(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  return Tensor::from_data(shape, std::move(v), true);
}

std::size_t dim(Rng& rng, int lo, int hi) { return static_cast<std::size_t>(rng.uniform_int(lo, hi)); }

// Random linear functional of a tensor-valued op, so every output element
// carries a distinct upstream gradient.
ScalarFn projected(std::function<Tensor(const std::vector<Tensor>&)> op, const Shape& out_shape,
                   Rng& rng) {
  Tensor proj = random_tensor(out_shape, rng, -1.0, 1.0, false);
  return [op = std::move(op), proj](const std::vector<Tensor>& in) {
    return ops::sum(ops::mul(op(in), proj));
  };
}

struct Case {
  ScalarFn fn;
  std::vector<Tensor> inputs;
};

using CaseMaker = std::function<Case(Rng&)>;

Case unary_case(Rng& rng, Tensor (*op)(const Tensor&), bool avoid_zero = false) {
  const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
  Tensor x = avoid_zero ? away_from_zero(s, rng) : random_tensor(s, rng);
  return {projected([op](const std::vector<Tensor>& in) { return op(in[0]); }, s, rng), {x}};
}

Case binary_case(Rng& rng, Tensor (*op)(const Tensor&, const Tensor&)) {
  const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
  Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
  return {projected([op](const std::vector<Tensor>& in) { return op(in[0], in[1]); }, s, rng), {a, b}};
}

model::Params tiny_params(const TrainConfig& cfg, std::uint64_t seed) {
  auto p = model::init_model_params(cfg.model, seed);
  auto [dicm, dscm] = memory::init_banks(cfg.memory_m, cfg.memory_n, cfg.model.feature_channels, cfg.k,
                                         Rng::derive(seed, 99));
  memory::store_banks(p, dicm, dscm);
  // Positive biases keep most ReLUs active so the check exercises every path.
  for (auto& [name, t] : p) {
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0) {
      for (auto& v : t.mutable_data()) v = 0.05;
    }
  }
  return p;
}

std::vector<std::pair<std::string, CaseMaker>> suites() {
  std::vector<std::pair<std::string, CaseMaker>> s;
  s.emplace_back("add", [](Rng& r) { return binary_case(r, ops::add); });
  s.emplace_back("sub", [](Rng& r) { return binary_case(r, ops::sub); });
  s.emplace_back("mul", [](Rng& r) { return binary_case(r, ops::mul); });
  s.emplace_back("scale", [](Rng& r) {
    const double f = r.uniform(-3.0, 3.0);
    const Shape sh{dim(r, 1, 4), dim(r, 1, 4)};
    return Case{projected([f](const std::vector<Tensor>& in) { return ops::scale(in[0], f); }, sh, r),
                {random_tensor(sh, r)}};
  });
  s.emplace_back("relu", [](Rng& r) { return unary_case(r, ops::relu, true); });
  s.emplace_back("square", [](Rng& r) { return unary_case(r, ops::square); });
  s.emplace_back("sum", [](Rng& r) {
    return Case{[](const std::vector<Tensor>& in) { return ops::scale(ops::sum(in[0]), 1.7); },
                {random_tensor({dim(r, 1, 4), dim(r, 1, 4)}, r)}};
  });
  s.emplace_back("mean", [](Rng& r) {
    return Case{[](const std::vector<Tensor>& in) { return ops::mean(in[0]); },
                {random_tensor({dim(r, 1, 4), dim(r, 1, 4)}, r)}};
  });
  s.emplace_back("reshape", [](Rng& r) {
    const std::size_t a = dim(r, 1, 3), b = dim(r, 1, 3), c = dim(r, 1, 3);
    return Case{projected([=](const std::vector<Tensor>& in) { return ops::reshape(in[0], {a * b, c}); },
                          {a * b, c}, r),
                {random_tensor({a, b, c}, r)}};
  });
  s.emplace_back("transpose", [](Rng& r) {
    const std::size_t a = dim(r, 1, 4), b = dim(r, 1, 4);
    return Case{projected([](const std::vector<Tensor>& in) { return ops::transpose(in[0]); }, {b, a}, r),
                {random_tensor({a, b}, r)}};
  });
  s.emplace_back("concat", [](Rng& r) {
    const std::size_t axis = dim(r, 0, 2);
    Shape s1{dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3)};
    Shape s2 = s1;
    s2[axis] = dim(r, 1, 3);
    Shape out = s1;
    out[axis] += s2[axis];
    return Case{projected([axis](const std::vector<Tensor>& in) { return ops::concat({in[0], in[1]}, axis); },
                          out, r),
                {random_tensor(s1, r), random_tensor(s2, r)}};
  });
  s.emplace_back("matmul", [](Rng& r) {
    const std::size_t p = dim(r, 1, 4), q = dim(r, 1, 4), k = dim(r, 1, 4);
    return Case{projected([](const std::vector<Tensor>& in) { return ops::matmul(in[0], in[1]); }, {p, k}, r),
                {random_tensor({p, q}, r), random_tensor({q, k}, r)}};
  });
  s.emplace_back("softmax", [](Rng& r) {
    const Shape sh{dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 3)};
    const std::size_t axis = dim(r, 0, 2);
    return Case{projected([axis](const std::vector<Tensor>& in) { return ops::softmax(in[0], axis); }, sh, r),
                {random_tensor(sh, r, -2.0, 2.0)}};
  });
  s.emplace_back("log_softmax", [](Rng& r) {
    const Shape sh{dim(r, 1, 4), dim(r, 1, 4)};
    const std::size_t axis = dim(r, 0, 1);
    return Case{projected([axis](const std::vector<Tensor>& in) { return ops::log_softmax(in[0], axis); }, sh, r),
                {random_tensor(sh, r, -2.0, 2.0)}};
  });
  s.emplace_back("l2_normalize_rows", [](Rng& r) {
    const Shape sh{dim(r, 1, 4), dim(r, 2, 5)};
    return Case{projected([](const std::vector<Tensor>& in) { return ops::l2_normalize_rows(in[0], losses::kNormEps); },
                          sh, r),
                {random_tensor(sh, r)}};
  });
  s.emplace_back("diag", [](Rng& r) {
    const std::size_t n = dim(r, 1, 5);
    return Case{projected([](const std::vector<Tensor>& in) { return ops::diag(in[0]); }, {n}, r),
                {random_tensor({n, n}, r)}};
  });
  s.emplace_back("conv2d", [](Rng& r) {
    const std::size_t k = r.bernoulli(0.5) ? 3 : 1;
    const std::size_t stride = dim(r, 1, 2), pad = k == 3 ? dim(r, 0, 1) : 0;
    const std::size_t cin = dim(r, 1, 3), cout = dim(r, 1, 3), h = dim(r, 3, 5), w = dim(r, 3, 5);
    Tensor x = random_tensor({cin, h, w}, r);
    Tensor wt = random_tensor({cout, cin, k, k}, r);
    Tensor b = random_tensor({cout}, r);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    return Case{projected([=](const std::vector<Tensor>& in) { return ops::conv2d(in[0], in[1], in[2], stride, pad); },
                          {cout, oh, ow}, r),
                {x, wt, b}};
  });
  s.emplace_back("avg_pool2d", [](Rng& r) {
    const std::size_t k = dim(r, 1, 2), c = dim(r, 1, 2), h = k * dim(r, 1, 3), w = k * dim(r, 1, 3);
    return Case{projected([k](const std::vector<Tensor>& in) { return ops::avg_pool2d(in[0], k); },
                          {c, h / k, w / k}, r),
                {random_tensor({c, h, w}, r)}};
  });
  s.emplace_back("upsample_nearest", [](Rng& r) {
    const std::size_t f = dim(r, 1, 3), c = dim(r, 1, 2), h = dim(r, 1, 3), w = dim(r, 1, 3);
    return Case{projected([f](const std::vector<Tensor>& in) { return ops::upsample_nearest(in[0], f); },
                          {c, h * f, w * f}, r),
                {random_tensor({c, h, w}, r)}};
  });
  s.emplace_back("reencode", [](Rng& r) {
    const std::size_t n = dim(r, 1, 6), m = dim(r, 1, 5), c = dim(r, 1, 4);
    return Case{projected([](const std::vector<Tensor>& in) { return memory::reencode(in[0], {in[1], 0}).features; },
                          {n, c}, r),
                {random_tensor({n, c}, r), random_tensor({m, c}, r)}};
  });
  s.emplace_back("correlation_matrix", [](Rng& r) {
    const std::size_t n = dim(r, 1, 5), c = dim(r, 2, 4);
    const double tau = r.uniform(0.5, 2.0);
    return Case{projected([tau](const std::vector<Tensor>& in) { return losses::correlation_matrix(in[0], in[1], tau); },
                          {n, n}, r),
                {random_tensor({n, c}, r), random_tensor({n, c}, r)}};
  });
  s.emplace_back("rec_loss", [](Rng& r) {
    const std::size_t n = dim(r, 2, 6), c = dim(r, 2, 4);
    losses::HardRegionSet hard;
    for (std::size_t i = 0; i < n; ++i)
      if (r.bernoulli(0.3)) hard.indices.push_back(i);
    const bool symmetric = r.bernoulli(0.5);
    return Case{[hard, symmetric](const std::vector<Tensor>& in) {
                  return losses::rec_loss(in[0], in[1], hard, 1.0, symmetric);
                },
                {random_tensor({n, c}, r), random_tensor({n, c}, r)}};
  });
  s.emplace_back("orth_loss", [](Rng& r) {
    const std::size_t n = dim(r, 1, 5), c = dim(r, 2, 4);
    return Case{[](const std::vector<Tensor>& in) { return losses::orth_loss(in[0], in[1], in[2], in[3]); },
                {random_tensor({n, c}, r), random_tensor({n, c}, r), random_tensor({n, c}, r),
                 random_tensor({n, c}, r)}};
  });
  s.emplace_back("density_loss", [](Rng& r) {
    const Shape sh{1, dim(r, 1, 4), dim(r, 1, 4)};
    return Case{[](const std::vector<Tensor>& in) { return losses::density_loss(in[0], in[1]); },
                {random_tensor(sh, r), random_tensor(sh, r)}};
  });
  s.emplace_back("composite_ops", [](Rng& r) {
    // conv -> relu -> pixels -> softmax-weighted readout -> mean square
    Tensor x = random_tensor({2, 4, 4}, r);
    Tensor w = random_tensor({3, 2, 3, 3}, r);
    Tensor v = random_tensor({4, 3}, r);
    return Case{[](const std::vector<Tensor>& in) {
                  Tensor y = ops::conv2d(in[0], in[1], Tensor(), 1, 1);
                  Tensor pix = ops::transpose(ops::reshape(y, {3, 16}));
                  Tensor wts = ops::softmax(ops::matmul(pix, ops::transpose(in[2])), 1);
                  return ops::mean(ops::square(ops::matmul(wts, in[2])));
                },
                {x, w, v}};
  });
  s.emplace_back("full_objective", [](Rng& r) {
    TrainConfig cfg = desk_preset();
    cfg.model.widths = {2, 3, 3};
    cfg.model.feature_channels = 4;
    cfg.memory_m = 3;
    cfg.memory_n = 2;
    cfg.k = 2;
    cfg.loss.hard_fraction = 0.25;
    // Keep the loss terms of similar size; a large total drowns the small
    // memory gradients in finite-difference cancellation.
    cfg.model.density_scale = 100.0;
    auto params = tiny_params(cfg, r.next_u64());
    const auto style = synth::default_style(static_cast<int>(r.below(4)));
    auto sample = synth::generate_scene(style, r.uniform_int(1, 4), 16, 16, r.next_u64());
    const int label = static_cast<int>(r.below(2));
    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    for (auto& [name, t] : params) {
      names.push_back(name);
      inputs.push_back(t);
    }
    return Case{[cfg, sample, label, names](const std::vector<Tensor>& in) {
                  model::Params p;
                  for (std::size_t i = 0; i < names.size(); ++i) p.emplace(names[i], in[i]);
                  return meta::sample_forward(sample, p, cfg, label).total;
                },
                inputs};
  });
  return s;
}

}  // namespace

std::vector<SuiteResult> run_all(int instances, std::uint64_t seed, const Tolerance& tol) {
  std::vector<SuiteResult> results;
  for (auto& [name, make] : suites()) {
    SuiteResult res;
    res.name = name;
    Rng rng(Rng::derive(seed, std::hash<std::string>{}(name)));
    for (int i = 0; i < instances; ++i) {
      Case c = make(rng);
      res.max_error = std::max(res.max_error, max_gradient_error(c.fn, c.inputs, tol));
      ++res.instances;
    }
    res.passed = res.max_error <= tol.rel_tol;
    results.push_back(res);
  }
  return results;
}

}  // namespace dgcount::gradcheck
