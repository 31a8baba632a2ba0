#include "dgcount/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgcount/kernels.hpp"

namespace dgcount::ops {

namespace {

using detail::Node;

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

// Accumulate fn(i) into the parent's grad when it participates in the graph.
template <typename Fn>
void accumulate(Node& p, Fn&& fn) {
  if (!p.requires_grad) return;
  for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += fn(i);
}

struct AxisView {
  std::size_t outer, len, inner;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) throw ShapeError("axis out of range for shape " + shape_str(shape));
  AxisView v{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.ndim() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

#define DGCOUNT_KERNEL(name) (kernels::force_serial() ? kernels::serial::name : kernels::parallel::name)

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& n) {
    accumulate(parent(n, 0), [&](std::size_t i) { return n.grad[i]; });
    accumulate(parent(n, 1), [&](std::size_t i) { return n.grad[i]; });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& n) {
    accumulate(parent(n, 0), [&](std::size_t i) { return n.grad[i]; });
    accumulate(parent(n, 1), [&](std::size_t i) { return -n.grad[i]; });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& n) {
    const auto& av = parent(n, 0).data;
    const auto& bv = parent(n, 1).data;
    accumulate(parent(n, 0), [&](std::size_t i) { return n.grad[i] * bv[i]; });
    accumulate(parent(n, 1), [&](std::size_t i) { return n.grad[i] * av[i]; });
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return Tensor::make_result(a.shape(), std::move(out), "scale", {a}, [factor](Node& n) {
    accumulate(parent(n, 0), [&](std::size_t i) { return n.grad[i] * factor; });
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return Tensor::make_result(a.shape(), std::move(out), "relu", {a}, [](Node& n) {
    const auto& av = parent(n, 0).data;
    accumulate(parent(n, 0), [&](std::size_t i) { return av[i] > 0.0 ? n.grad[i] : 0.0; });
  });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
  return Tensor::make_result(a.shape(), std::move(out), "square", {a}, [](Node& n) {
    const auto& av = parent(n, 0).data;
    accumulate(parent(n, 0), [&](std::size_t i) { return 2.0 * av[i] * n.grad[i]; });
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, "sum", {a}, [](Node& n) {
    const double g = n.grad[0];
    accumulate(parent(n, 0), [&](std::size_t) { return g; });
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return Tensor::make_result({1}, {s * inv}, "mean", {a}, [inv](Node& n) {
    const double g = n.grad[0] * inv;
    accumulate(parent(n, 0), [&](std::size_t) { return g; });
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(shape, std::move(out), "reshape", {a}, [](Node& n) {
    accumulate(parent(n, 0), [&](std::size_t i) { return n.grad[i]; });
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return Tensor::make_result({c, r}, std::move(out), "transpose", {a}, [r, c](Node& n) {
    accumulate(parent(n, 0), [&](std::size_t idx) {
      const std::size_t i = idx / c, j = idx % c;
      return n.grad[j * r + i];
    });
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.ndim() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(ref));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  const AxisView view = axis_view(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    for (std::size_t o = 0; o < view.outer; ++o) {
      std::copy_n(p.data().begin() + o * len * view.inner, len * view.inner,
                  out.begin() + (o * view.len + offset) * view.inner);
    }
    offset += len;
  }
  return Tensor::make_result(out_shape, std::move(out), "concat", parts,
                             [view, offsets](Node& n) {
                               for (std::size_t k = 0; k < n.parents.size(); ++k) {
                                 Node& p = *n.parents[k];
                                 if (!p.requires_grad) continue;
                                 const std::size_t len = p.grad.size() / (view.outer * view.inner);
                                 for (std::size_t o = 0; o < view.outer; ++o) {
                                   const double* src =
                                       n.grad.data() + (o * view.len + offsets[k]) * view.inner;
                                   double* dst = p.grad.data() + o * len * view.inner;
                                   for (std::size_t i = 0; i < len * view.inner; ++i) dst[i] += src[i];
                                 }
                               }
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(p * r);
  DGCOUNT_KERNEL(gemm)(a.data(), b.data(), out, p, q, r);
  return Tensor::make_result({p, r}, std::move(out), "matmul", {a, b}, [p, q, r](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) DGCOUNT_KERNEL(gemm_grad_a)(n.grad, pb.data, pa.grad, p, q, r);
    if (pb.requires_grad) DGCOUNT_KERNEL(gemm_grad_b)(pa.data, n.grad, pb.grad, p, q, r);
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisView v = axis_view(a.shape(), axis);
  std::vector<double> out(a.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.len; ++k) mx = std::max(mx, a[base + k * v.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const double e = std::exp(a[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < v.len; ++k) out[base + k * v.inner] /= z;
    }
  }
  return Tensor::make_result(a.shape(), std::move(out), "softmax", {a}, [v](Node& n) {
    Node& pa = parent(n, 0);
    if (!pa.requires_grad) return;
    // dx = y * (g - <g, y>) along the axis
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.len * v.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < v.len; ++k)
          dot += n.grad[base + k * v.inner] * n.data[base + k * v.inner];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t idx = base + k * v.inner;
          pa.grad[idx] += n.data[idx] * (n.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const AxisView v = axis_view(a.shape(), axis);
  std::vector<double> out(a.numel());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.len * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.len; ++k) mx = std::max(mx, a[base + k * v.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < v.len; ++k) z += std::exp(a[base + k * v.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t k = 0; k < v.len; ++k)
        out[base + k * v.inner] = a[base + k * v.inner] - lse;
    }
  }
  return Tensor::make_result(a.shape(), std::move(out), "log_softmax", {a}, [v](Node& n) {
    Node& pa = parent(n, 0);
    if (!pa.requires_grad) return;
    // dx = g - softmax * sum(g) along the axis
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.len * v.inner + in;
        double gsum = 0.0;
        for (std::size_t k = 0; k < v.len; ++k) gsum += n.grad[base + k * v.inner];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t idx = base + k * v.inner;
          pa.grad[idx] += n.grad[idx] - std::exp(n.data[idx]) * gsum;
        }
      }
    }
  });
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  require_rank(a, 2, "l2_normalize_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.numel());
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += a[i * cols + j] * a[i * cols + j];
    norms[i] = std::sqrt(ss);
    const double inv = 1.0 / (norms[i] + eps);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a[i * cols + j] * inv;
  }
  return Tensor::make_result(
      a.shape(), std::move(out), "l2_normalize_rows", {a},
      [rows, cols, eps, norms = std::move(norms)](Node& n) {
        Node& pa = parent(n, 0);
        if (!pa.requires_grad) return;
        // y = x / (|x| + eps): dx = (g - x <g, x> / (|x| (|x| + eps))) / (|x| + eps)
        for (std::size_t i = 0; i < rows; ++i) {
          const double* x = pa.data.data() + i * cols;
          const double* g = n.grad.data() + i * cols;
          const double denom = norms[i] + eps;
          double gx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) gx += g[j] * x[j];
          const double coef = norms[i] > 0.0 ? gx / (norms[i] * denom) : 0.0;
          for (std::size_t j = 0; j < cols; ++j)
            pa.grad[i * cols + j] += (g[j] - x[j] * coef) / denom;
        }
      });
}

Tensor diag(const Tensor& a) {
  require_rank(a, 2, "diag");
  if (a.dim(0) != a.dim(1)) throw ShapeError("diag: matrix is not square " + shape_str(a.shape()));
  const std::size_t n_rows = a.dim(0);
  std::vector<double> out(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) out[i] = a[i * n_rows + i];
  return Tensor::make_result({n_rows}, std::move(out), "diag", {a}, [n_rows](Node& n) {
    Node& pa = parent(n, 0);
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < n_rows; ++i) pa.grad[i * n_rows + i] += n.grad[i];
  });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not accept input " +
                     shape_str(input.shape()));
  }
  if (weight.dim(2) != weight.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const kernels::ConvGeometry geo{input.dim(0), input.dim(1), input.dim(2), weight.dim(0),
                                  weight.dim(2), stride,       padding};
  if (input.dim(1) + 2 * padding < geo.kernel || input.dim(2) + 2 * padding < geo.kernel) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(input.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != geo.out_channels)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  std::vector<double> out(geo.out_channels * geo.out_h() * geo.out_w());
  DGCOUNT_KERNEL(conv2d)(input.data(), weight.data(),
                         has_bias ? bias.data() : std::span<const double>{}, out, geo);
  std::vector<Tensor> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result(
      {geo.out_channels, geo.out_h(), geo.out_w()}, std::move(out), "conv2d", std::move(inputs),
      [geo, has_bias](Node& n) {
        Node& pin = parent(n, 0);
        Node& pw = parent(n, 1);
        if (pin.requires_grad) DGCOUNT_KERNEL(conv2d_grad_input)(n.grad, pw.data, pin.grad, geo);
        std::span<double> dbias;
        if (has_bias && parent(n, 2).requires_grad) dbias = parent(n, 2).grad;
        if (pw.requires_grad) {
          DGCOUNT_KERNEL(conv2d_grad_weight)(n.grad, pin.data, pw.grad, dbias, geo);
        } else if (!dbias.empty()) {
          const std::size_t area = geo.out_h() * geo.out_w();
          for (std::size_t co = 0; co < geo.out_channels; ++co) {
            double acc = 0.0;
            for (std::size_t i = 0; i < area; ++i) acc += n.grad[co * area + i];
            dbias[co] += acc;
          }
        }
      });
}

Tensor avg_pool2d(const Tensor& input, std::size_t k) {
  require_rank(input, 3, "avg_pool2d");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (k == 0 || h % k != 0 || w % k != 0) {
    throw ShapeError("avg_pool2d: " + shape_str(input.shape()) + " not divisible by " +
                     std::to_string(k));
  }
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(ch * oh + y / k) * ow + x / k] += input[(ch * h + y) * w + x];
  for (auto& v : out) v *= inv;
  return Tensor::make_result({c, oh, ow}, std::move(out), "avg_pool2d", {input},
                             [c, h, w, k, oh, ow, inv](Node& n) {
                               Node& p = parent(n, 0);
                               if (!p.requires_grad) return;
                               for (std::size_t ch = 0; ch < c; ++ch)
                                 for (std::size_t y = 0; y < h; ++y)
                                   for (std::size_t x = 0; x < w; ++x)
                                     p.grad[(ch * h + y) * w + x] +=
                                         n.grad[(ch * oh + y / k) * ow + x / k] * inv;
                             });
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
  require_rank(input, 3, "upsample_nearest");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        out[(ch * oh + y) * ow + x] = input[(ch * h + y / factor) * w + x / factor];
  return Tensor::make_result({c, oh, ow}, std::move(out), "upsample_nearest", {input},
                             [c, h, w, factor, oh, ow](Node& n) {
                               Node& p = parent(n, 0);
                               if (!p.requires_grad) return;
                               for (std::size_t ch = 0; ch < c; ++ch)
                                 for (std::size_t y = 0; y < oh; ++y)
                                   for (std::size_t x = 0; x < ow; ++x)
                                     p.grad[(ch * h + y / factor) * w + x / factor] +=
                                         n.grad[(ch * oh + y) * ow + x];
                             });
}

}  // namespace dgcount::ops
