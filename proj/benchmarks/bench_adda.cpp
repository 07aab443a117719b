#include <benchmark/benchmark.h>

#include <complex>
#include <random>
#include <vector>

#include "adda/data.hpp"
#include "adda/eval.hpp"
#include "adda/model.hpp"
#include "adda/signal.hpp"
#include "adda/train.hpp"

using namespace adda;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> x(n);
  for (double& v : x) v = d(rng);
  return x;
}

const data::DomainDataset& dataset() {
  static const auto ds = [] {
    data::SynthConfig c;
    for (int k = 0; k < 10; ++k) c.classes.push_back({{150 + 90 * k, 1200 + 40 * k}, {1.0, 0.4}});
    c.noise_sigma = 0.05;
    c.samples_per_class = 20;
    c.seed = 3;
    return data::synth_domain(c, 0);
  }();
  return ds;
}

}  // namespace

static void BM_Fft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto re = noise(n, 1);
  std::vector<std::complex<double>> x(re.begin(), re.end());
  for (auto _ : state) benchmark::DoNotOptimize(signal::fft_radix2(x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Fft)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oNLogN);

static void BM_MakeSpectrum(benchmark::State& state) {
  const auto window = noise(signal::kWindowLength, 2);
  for (auto _ : state) benchmark::DoNotOptimize(signal::make_spectrum(window, 1, 0));
}
BENCHMARK(BM_MakeSpectrum);

// Forward of one extractor group (conv + ReLU + pool, or dense).
static void BM_GroupForward(benchmark::State& state) {
  const auto g = static_cast<std::size_t>(state.range(0));
  const auto fe = model::FeatureExtractor::build(1);
  const nn::Shape in = model::group_input_shape(g);
  const nn::FeatureMap x{in.length, in.channels, noise(in.size(), 3)};
  for (auto _ : state) benchmark::DoNotOptimize(fe.apply_groups(x, g, g + 1));
}
BENCHMARK(BM_GroupForward)->DenseRange(0, 6);

static void BM_ExtractorForward(benchmark::State& state) {
  const auto fe = model::FeatureExtractor::build(1);
  const auto& s = dataset().samples.front();
  for (auto _ : state) benchmark::DoNotOptimize(model::extract_features(fe, s));
}
BENCHMARK(BM_ExtractorForward);

static void BM_ExtractorForwardBackward(benchmark::State& state) {
  const auto fe = model::FeatureExtractor::build(1);
  const auto& s = dataset().samples.front();
  const std::vector<double> grad(model::kNumClasses, 0.1);
  for (auto _ : state) {
    const auto trace = fe.forward(nn::FeatureMap::signal(s.amplitudes));
    benchmark::DoNotOptimize(fe.backward(trace, grad));
  }
}
BENCHMARK(BM_ExtractorForwardBackward);

static void BM_DiscriminatorBatch(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto d = model::Discriminator::build(1);
  nn::Batch x(rows, model::kNumClasses);
  x.data = noise(x.data.size(), 4);
  const std::vector<double> grad(rows, 0.5);
  for (auto _ : state) {
    const auto trace = d.forward_batch(x);
    benchmark::DoNotOptimize(d.backward_batch(trace, grad));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DiscriminatorBatch)->Arg(64)->Arg(128);

// Ten pretraining iterations at m = 64, including the run setup.
static void BM_PretrainSteps(benchmark::State& state) {
  train::PretrainConfig cfg;
  cfg.iterations = 10;
  train::RunOptions options;
  options.threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train::pretrain(dataset(), cfg, options));
}
BENCHMARK(BM_PretrainSteps)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

// Ten finetuning iterations with k = 1, l = 7.
static void BM_FinetuneSteps(benchmark::State& state) {
  const auto fe = model::FeatureExtractor::build(1);
  train::FinetuneConfig cfg;
  cfg.iterations = 10;
  for (auto _ : state) benchmark::DoNotOptimize(train::adversarial_finetune(fe, dataset(), dataset(), cfg));
}
BENCHMARK(BM_FinetuneSteps)->Unit(benchmark::kMillisecond);

static void BM_ProxyDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> a(n), b(n);
  const auto va = noise(n * 10, 5), vb = noise(n * 10, 6);
  for (std::size_t i = 0; i < n; ++i) {
    a[i].assign(va.begin() + static_cast<long>(i * 10), va.begin() + static_cast<long>(i * 10 + 10));
    b[i].assign(vb.begin() + static_cast<long>(i * 10), vb.begin() + static_cast<long>(i * 10 + 10));
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::proxy_a_distance(a, b, 0.5, 1));
}
BENCHMARK(BM_ProxyDistance)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
