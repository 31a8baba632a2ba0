// Serial reference vs OpenMP kernels at the sizes the desk model uses.

#include <benchmark/benchmark.h>

#include <vector>

#include "dgcount/kernels.hpp"
#include "dgcount/rng.hpp"

using namespace dgcount;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// pixels x channels times channels x memory slots, as in the re-encoding
template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const std::size_t q = 32, r = 64;
  const auto a = random_vec(p * q, 1), b = random_vec(q * r, 2);
  std::vector<double> c(p * r);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::gemm(a, b, c, p, q, r);
    else kernels::serial::gemm(a, b, c, p, q, r);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * p * q * r));
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const kernels::ConvGeometry geo{ch, 24, 24, ch, 3, 1, 1};
  const auto in = random_vec(ch * 24 * 24, 3), w = random_vec(ch * ch * 9, 4), bias = random_vec(ch, 5);
  std::vector<double> out(ch * geo.out_h() * geo.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::conv2d(in, w, bias, out, geo);
    else kernels::serial::conv2d(in, w, bias, out, geo);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * out.size() * ch * 9));
}

template <bool Parallel>
void BM_ConvGradWeight(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const kernels::ConvGeometry geo{ch, 24, 24, ch, 3, 1, 1};
  const auto in = random_vec(ch * 24 * 24, 6), g = random_vec(ch * 24 * 24, 7);
  std::vector<double> dw(ch * ch * 9), db(ch);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::conv2d_grad_weight(g, in, dw, db, geo);
    else kernels::serial::conv2d_grad_weight(g, in, dw, db, geo);
    benchmark::DoNotOptimize(dw.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(144)->Arg(576);
BENCHMARK(BM_Gemm<true>)->Arg(144)->Arg(576);
BENCHMARK(BM_Conv<false>)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_Conv<true>)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_ConvGradWeight<false>)->Arg(16)->Arg(32);
BENCHMARK(BM_ConvGradWeight<true>)->Arg(16)->Arg(32);

BENCHMARK_MAIN();
