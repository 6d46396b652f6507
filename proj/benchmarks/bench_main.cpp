#include <benchmark/benchmark.h>

#include "speckle/dataset.hpp"
#include "speckle/decoder.hpp"
#include "speckle/metrics.hpp"
#include "speckle/optics.hpp"
#include "speckle/rng.hpp"

namespace {

using namespace speckle;

PlainImage random_plain(std::size_t side, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<double> v(side * side);
  for (auto& x : v) x = rng.uniform();
  return PlainImage(side, side, std::move(v));
}

void BM_Encrypt(benchmark::State& state) {
  const auto side_in = static_cast<std::size_t>(state.range(0));
  const std::size_t side_out = 2 * side_in;
  const auto key = generate_key(1, side_in * side_in, side_out * side_out);
  const auto image = random_plain(side_in, 2);
  for (auto _ : state) benchmark::DoNotOptimize(encrypt(key, image, SpeckleShape{side_out, side_out}));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Encrypt)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

struct DeskFixture {
  PhysicalKey key = generate_key(7, 256, 1024);
  std::vector<PlainImage> plain;
  std::vector<SpecklePattern> speckle;
  DecoderModel model = make_decoder(DecoderSpec{}, 3);

  DeskFixture() {
    const auto corpus = dataset::build_corpus(8, 4, 16, 1);
    plain = dataset::images_of(corpus.samples);
    speckle = encrypt_all(key, plain, SpeckleShape{32, 32});
  }
};

const DeskFixture& desk() {
  static const DeskFixture f;
  return f;
}

void BM_DecoderForward(benchmark::State& state) {
  const auto& f = desk();
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.model, f.speckle[0]));
}
BENCHMARK(BM_DecoderForward)->Unit(benchmark::kMicrosecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto& f = desk();
  const SampleSet set{f.speckle, f.plain};
  const TrainConfig config{0.15, 1, 8, 4};
  for (auto _ : state) benchmark::DoNotOptimize(train(f.model, set, set, config));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.plain.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
  const auto a = random_plain(16, 3);
  const auto b = random_plain(16, 4);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(a, b));
}
BENCHMARK(BM_Metrics);

void BM_PinvDecode(benchmark::State& state) {
  const auto& f = desk();
  const auto field = detect_field(f.key, f.plain[0]);
  for (auto _ : state) benchmark::DoNotOptimize(pinv_decode(f.key, field));
}
BENCHMARK(BM_PinvDecode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
