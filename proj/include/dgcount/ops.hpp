#pragma once

#include <span>
#include <vector>

#include "dgcount/tensor.hpp"

// Differentiable tensor operations. There is no implicit broadcasting:
// binary ops need equal shapes, scalars enter only through scale().
namespace dgcount::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);   // -> [1]
Tensor mean(const Tensor& a);  // -> [1]

// Same data, new shape with the same element count.
Tensor reshape(const Tensor& a, const Shape& shape);
// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// [p x q] * [q x r] -> [p x r]
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

// Rows of a 2-D tensor divided by (L2 norm + eps).
Tensor l2_normalize_rows(const Tensor& a, double eps);
// Main diagonal of a square 2-D tensor, shape [n].
Tensor diag(const Tensor& a);

// input [C_in x H x W], weight [C_out x C_in x k x k], bias [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
// Non-overlapping k x k average pooling on [C x H x W]; H, W divisible by k.
Tensor avg_pool2d(const Tensor& input, std::size_t k);
// Nearest-neighbour upsampling of [C x H x W] by an integer factor.
Tensor upsample_nearest(const Tensor& input, std::size_t factor);

}  // namespace dgcount::ops
