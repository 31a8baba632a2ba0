#pragma once

// Raw dense kernels behind the differentiable ops. Two implementations are
// kept side by side: `serial` is the reference, `parallel` splits the
// outermost output loop across OpenMP threads. Each output element is
// produced by exactly one thread with the same accumulation order as the
// serial loop, so both paths are bitwise identical.

#include <cstddef>
#include <span>

namespace dgcount::kernels {

struct ConvGeometry {
  std::size_t in_channels, in_h, in_w;
  std::size_t out_channels, kernel, stride, padding;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
};

#define DGCOUNT_KERNEL_DECLS                                                                  \
  /* c[p x r] = a[p x q] * b[q x r] */                                                        \
  void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,       \
            std::size_t p, std::size_t q, std::size_t r);                                     \
  /* da[p x q] += g[p x r] * b[q x r]^T */                                                    \
  void gemm_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> da, \
                   std::size_t p, std::size_t q, std::size_t r);                              \
  /* db[q x r] += a[p x q]^T * g[p x r] */                                                    \
  void gemm_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> db, \
                   std::size_t p, std::size_t q, std::size_t r);                              \
  /* out = conv(in, w) + bias; bias may be empty */                                          \
  void conv2d(std::span<const double> in, std::span<const double> w,                         \
              std::span<const double> bias, std::span<double> out, const ConvGeometry& geo);  \
  /* din += conv^T(g, w) */                                                                   \
  void conv2d_grad_input(std::span<const double> g, std::span<const double> w,               \
                         std::span<double> din, const ConvGeometry& geo);                    \
  /* dw += correlation of g with in; dbias += spatial sums of g (skipped if empty) */         \
  void conv2d_grad_weight(std::span<const double> g, std::span<const double> in,             \
                          std::span<double> dw, std::span<double> dbias,                     \
                          const ConvGeometry& geo);

namespace serial {
DGCOUNT_KERNEL_DECLS
}  // namespace serial

namespace parallel {
DGCOUNT_KERNEL_DECLS
}  // namespace parallel

#undef DGCOUNT_KERNEL_DECLS

// Whether the library was built with OpenMP; when false `parallel` runs on
// one thread.
bool openmp_enabled();
int max_threads();

// Kernels used by the ops: `parallel` unless the serial reference has been
// forced for debugging.
void set_force_serial(bool on);
bool force_serial();

}  // namespace dgcount::kernels
