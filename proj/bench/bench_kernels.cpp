// Serial reference kernels against the im2col/GEMM OpenMP kernels, plus one
// full encode at 64x64.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "aifc/codec.hpp"
#include "aifc/kernels.hpp"

namespace kn = aifc::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Args: channels, spatial extent, kernel, stride.
kn::ConvGeometry geometry(const benchmark::State& s) {
  const int c = static_cast<int>(s.range(0)), hw = static_cast<int>(s.range(1));
  const int k = static_cast<int>(s.range(2)), st = static_cast<int>(s.range(3));
  return kn::ConvGeometry::forward(1, c, hw, hw, c, k, k, st, k / 2 - (st == 2 ? 1 - k % 2 : 0));
}

template <auto Fn>
void conv_forward(benchmark::State& s) {
  const kn::ConvGeometry g = geometry(s);
  const auto in = random_buffer(g.in_size(), 1), w = random_buffer(g.weight_size(), 2);
  std::vector<double> out(g.out_size());
  for (auto _ : s) {
    Fn(g, in.data(), w.data(), nullptr, out.data());
    benchmark::DoNotOptimize(out.data());
  }
  s.counters["MFLOP/s"] = benchmark::Counter(2.0 * g.out_size() * g.in_channels * g.kernel_h * g.kernel_w * 1e-6,
                                             benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Fn>
void conv_backward_weight(benchmark::State& s) {
  const kn::ConvGeometry g = geometry(s);
  const auto in = random_buffer(g.in_size(), 3), go = random_buffer(g.out_size(), 4);
  std::vector<double> gw(g.weight_size());
  for (auto _ : s) {
    Fn(g, in.data(), go.data(), gw.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <auto Fn>
void gemm(benchmark::State& s) {
  const int n = static_cast<int>(s.range(0));
  const auto a = random_buffer(static_cast<std::size_t>(n) * n, 5), b = random_buffer(static_cast<std::size_t>(n) * n, 6);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : s) {
    Fn(n, n, n, a.data(), n, 1, b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  s.counters["MFLOP/s"] = benchmark::Counter(2.0 * n * n * n * 1e-6, benchmark::Counter::kIsIterationInvariantRate);
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 64, 3, 1})->Args({48, 32, 4, 2})->Args({64, 16, 3, 1})->Unit(benchmark::kMicrosecond);
}

void encode_64(benchmark::State& s) {
  const aifc::CodecModel model(aifc::CodecConfig{}, 1);
  aifc::Image img{64, 64, std::vector<std::uint8_t>(64 * 64 * 3)};
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>((i * 37) % 256);
  for (auto _ : s) benchmark::DoNotOptimize(aifc::encode_image(model, img).bytes.size());
}

}  // namespace

BENCHMARK(conv_forward<kn::serial::conv2d_forward>)->Name("conv_forward/serial")->Apply(conv_args);
BENCHMARK(conv_forward<kn::parallel::conv2d_forward>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(conv_backward_weight<kn::serial::conv2d_backward_weight>)->Name("conv_backward_weight/serial")->Apply(conv_args);
BENCHMARK(conv_backward_weight<kn::parallel::conv2d_backward_weight>)->Name("conv_backward_weight/parallel")->Apply(conv_args);
BENCHMARK(gemm<kn::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(gemm<kn::parallel::gemm>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(encode_64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
