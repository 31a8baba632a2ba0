#include "dgcount/kernels.hpp"

#include <algorithm>
#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dgcount::kernels {

namespace {

std::atomic<bool> g_force_serial{false};

// Per-outer-index bodies shared by both drivers so the accumulation order
// cannot drift between them.

inline void gemm_row(const double* a, const double* b, double* c, std::size_t i, std::size_t q,
                     std::size_t r) {
  double* ci = c + i * r;
  std::fill(ci, ci + r, 0.0);
  for (std::size_t k = 0; k < q; ++k) {
    const double aik = a[i * q + k];
    const double* bk = b + k * r;
    for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
  }
}

inline void gemm_grad_a_row(const double* g, const double* b, double* da, std::size_t i,
                            std::size_t q, std::size_t r) {
  const double* gi = g + i * r;
  for (std::size_t k = 0; k < q; ++k) {
    const double* bk = b + k * r;
    double acc = 0.0;
    for (std::size_t j = 0; j < r; ++j) acc += gi[j] * bk[j];
    da[i * q + k] += acc;
  }
}

inline void gemm_grad_b_row(const double* a, const double* g, double* db, std::size_t k,
                            std::size_t p, std::size_t q, std::size_t r) {
  double* dbk = db + k * r;
  for (std::size_t i = 0; i < p; ++i) {
    const double aik = a[i * q + k];
    const double* gi = g + i * r;
    for (std::size_t j = 0; j < r; ++j) dbk[j] += aik * gi[j];
  }
}

// Output columns ox whose input column ox*stride + kx - padding is in range.
inline void valid_range(std::size_t out_len, std::size_t in_len, std::size_t k_off,
                        std::size_t stride, std::size_t padding, std::size_t& lo,
                        std::size_t& hi) {
  // ix = ox*stride + k_off - padding, need 0 <= ix < in_len
  lo = 0;
  if (k_off < padding) lo = (padding - k_off + stride - 1) / stride;
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in_len) - 1 +
                             static_cast<std::ptrdiff_t>(padding) -
                             static_cast<std::ptrdiff_t>(k_off);
  if (top < 0) {
    hi = 0;
    return;
  }
  hi = std::min(out_len, static_cast<std::size_t>(top) / stride + 1);
  if (hi < lo) hi = lo;
}

inline void conv_out_channel(const double* in, const double* w, const double* bias, double* out,
                             const ConvGeometry& geo, std::size_t co) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), k = geo.kernel, s = geo.stride,
                    p = geo.padding;
  double* o = out + co * oh * ow;
  std::fill(o, o + oh * ow, bias ? bias[co] : 0.0);
  for (std::size_t ci = 0; ci < geo.in_channels; ++ci) {
    const double* src = in + ci * geo.in_h * geo.in_w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      std::size_t y_lo, y_hi;
      valid_range(oh, geo.in_h, ky, s, p, y_lo, y_hi);
      for (std::size_t kx = 0; kx < k; ++kx) {
        std::size_t x_lo, x_hi;
        valid_range(ow, geo.in_w, kx, s, p, x_lo, x_hi);
        const double wv = w[((co * geo.in_channels + ci) * k + ky) * k + kx];
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          const double* row = src + (oy * s + ky - p) * geo.in_w;
          double* orow = o + oy * ow;
          std::size_t ix = x_lo * s + kx - p;
          for (std::size_t ox = x_lo; ox < x_hi; ++ox, ix += s) orow[ox] += wv * row[ix];
        }
      }
    }
  }
}

inline void conv_grad_input_channel(const double* g, const double* w, double* din,
                                    const ConvGeometry& geo, std::size_t ci) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), k = geo.kernel, s = geo.stride,
                    p = geo.padding;
  double* dst = din + ci * geo.in_h * geo.in_w;
  for (std::size_t co = 0; co < geo.out_channels; ++co) {
    const double* gc = g + co * oh * ow;
    for (std::size_t ky = 0; ky < k; ++ky) {
      std::size_t y_lo, y_hi;
      valid_range(oh, geo.in_h, ky, s, p, y_lo, y_hi);
      for (std::size_t kx = 0; kx < k; ++kx) {
        std::size_t x_lo, x_hi;
        valid_range(ow, geo.in_w, kx, s, p, x_lo, x_hi);
        const double wv = w[((co * geo.in_channels + ci) * k + ky) * k + kx];
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          double* row = dst + (oy * s + ky - p) * geo.in_w;
          const double* grow = gc + oy * ow;
          std::size_t ix = x_lo * s + kx - p;
          for (std::size_t ox = x_lo; ox < x_hi; ++ox, ix += s) row[ix] += wv * grow[ox];
        }
      }
    }
  }
}

inline void conv_grad_weight_channel(const double* g, const double* in, double* dw, double* dbias,
                                     const ConvGeometry& geo, std::size_t co) {
  const std::size_t oh = geo.out_h(), ow = geo.out_w(), k = geo.kernel, s = geo.stride,
                    p = geo.padding;
  const double* gc = g + co * oh * ow;
  for (std::size_t ci = 0; ci < geo.in_channels; ++ci) {
    const double* src = in + ci * geo.in_h * geo.in_w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      std::size_t y_lo, y_hi;
      valid_range(oh, geo.in_h, ky, s, p, y_lo, y_hi);
      for (std::size_t kx = 0; kx < k; ++kx) {
        std::size_t x_lo, x_hi;
        valid_range(ow, geo.in_w, kx, s, p, x_lo, x_hi);
        double acc = 0.0;
        for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
          const double* row = src + (oy * s + ky - p) * geo.in_w;
          const double* grow = gc + oy * ow;
          std::size_t ix = x_lo * s + kx - p;
          for (std::size_t ox = x_lo; ox < x_hi; ++ox, ix += s) acc += grow[ox] * row[ix];
        }
        dw[((co * geo.in_channels + ci) * k + ky) * k + kx] += acc;
      }
    }
  }
  if (dbias) {
    double acc = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) acc += gc[i];
    dbias[co] += acc;
  }
}

inline const double* or_null(std::span<const double> s) { return s.empty() ? nullptr : s.data(); }
inline double* or_null(std::span<double> s) { return s.empty() ? nullptr : s.data(); }

using Index = long long;  // OpenMP loop counters must be signed for older runtimes

}  // namespace

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) gemm_row(a.data(), b.data(), c.data(), i, q, r);
}

void gemm_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> da,
                 std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) gemm_grad_a_row(g.data(), b.data(), da.data(), i, q, r);
}

void gemm_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> db,
                 std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t k = 0; k < q; ++k) gemm_grad_b_row(a.data(), g.data(), db.data(), k, p, q, r);
}

void conv2d(std::span<const double> in, std::span<const double> w, std::span<const double> bias,
            std::span<double> out, const ConvGeometry& geo) {
  for (std::size_t co = 0; co < geo.out_channels; ++co)
    conv_out_channel(in.data(), w.data(), or_null(bias), out.data(), geo, co);
}

void conv2d_grad_input(std::span<const double> g, std::span<const double> w,
                       std::span<double> din, const ConvGeometry& geo) {
  for (std::size_t ci = 0; ci < geo.in_channels; ++ci)
    conv_grad_input_channel(g.data(), w.data(), din.data(), geo, ci);
}

void conv2d_grad_weight(std::span<const double> g, std::span<const double> in,
                        std::span<double> dw, std::span<double> dbias, const ConvGeometry& geo) {
  for (std::size_t co = 0; co < geo.out_channels; ++co)
    conv_grad_weight_channel(g.data(), in.data(), dw.data(), or_null(dbias), geo, co);
}

}  // namespace serial

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t p, std::size_t q, std::size_t r) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(p); ++i)
    gemm_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), q, r);
}

void gemm_grad_a(std::span<const double> g, std::span<const double> b, std::span<double> da,
                 std::size_t p, std::size_t q, std::size_t r) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(p); ++i)
    gemm_grad_a_row(g.data(), b.data(), da.data(), static_cast<std::size_t>(i), q, r);
}

void gemm_grad_b(std::span<const double> a, std::span<const double> g, std::span<double> db,
                 std::size_t p, std::size_t q, std::size_t r) {
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < static_cast<Index>(q); ++k)
    gemm_grad_b_row(a.data(), g.data(), db.data(), static_cast<std::size_t>(k), p, q, r);
}

void conv2d(std::span<const double> in, std::span<const double> w, std::span<const double> bias,
            std::span<double> out, const ConvGeometry& geo) {
#pragma omp parallel for schedule(static)
  for (Index co = 0; co < static_cast<Index>(geo.out_channels); ++co)
    conv_out_channel(in.data(), w.data(), or_null(bias), out.data(), geo,
                     static_cast<std::size_t>(co));
}

void conv2d_grad_input(std::span<const double> g, std::span<const double> w,
                       std::span<double> din, const ConvGeometry& geo) {
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(geo.in_channels); ++ci)
    conv_grad_input_channel(g.data(), w.data(), din.data(), geo, static_cast<std::size_t>(ci));
}

void conv2d_grad_weight(std::span<const double> g, std::span<const double> in,
                        std::span<double> dw, std::span<double> dbias, const ConvGeometry& geo) {
#pragma omp parallel for schedule(static)
  for (Index co = 0; co < static_cast<Index>(geo.out_channels); ++co)
    conv_grad_weight_channel(g.data(), in.data(), dw.data(), or_null(dbias), geo,
                             static_cast<std::size_t>(co));
}

}  // namespace parallel

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_force_serial(bool on) { g_force_serial.store(on); }
bool force_serial() { return g_force_serial.load(); }

}  // namespace dgcount::kernels
