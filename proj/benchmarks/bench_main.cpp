#include <benchmark/benchmark.h>

#include <numeric>

#include "ipmc/codec.hpp"
#include "ipmc/codes.hpp"
#include "ipmc/dataset.hpp"
#include "ipmc/dynlist.hpp"
#include "ipmc/entropy.hpp"
#include "ipmc/search.hpp"

using namespace ipmc;

namespace {

const std::vector<Sample>& samples_for(const SymbolSpace& space) {
  static std::vector<Sample> hevc, jem;
  auto& v = space.k == 35 ? hevc : jem;
  if (v.empty()) {
    SynthParams p;
    p.width = 256;
    p.height = 256;
    p.seed = 11;
    v = synth_dataset(space, p);
  }
  return v;
}

ConditionalHistogram hist_for(const SymbolSpace& space, ContextSet ctx) {
  HistogramBuilder b(space, std::move(ctx));
  for (const auto& s : samples_for(space)) b.add(s.ctx, s.ipm);
  return std::move(b).finish();
}

void BM_Enumerate(benchmark::State& state) {
  const auto space = state.range(0) == 35 ? SymbolSpace::hevc() : SymbolSpace::jem();
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_codes(space, static_code_profile(space)));
}
BENCHMARK(BM_Enumerate)->Arg(35)->Arg(67)->Unit(benchmark::kMillisecond);

void BM_Histogram(benchmark::State& state) {
  const auto& s = samples_for(SymbolSpace::hevc());
  for (auto _ : state) benchmark::DoNotOptimize(hist_for(SymbolSpace::hevc(), ContextSet::parse("L,U")));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_Histogram)->Unit(benchmark::kMillisecond);

void BM_Entropy(benchmark::State& state) {
  const auto hist = hist_for(SymbolSpace::hevc(), ContextSet::parse("L,U"));
  for (auto _ : state) benchmark::DoNotOptimize(entropy(hist));
}
BENCHMARK(BM_Entropy);

void BM_CodeBasedEntropy(benchmark::State& state) {
  const auto hist = hist_for(SymbolSpace::hevc(), ContextSet::parse("L,U"));
  const auto codes = enumerate_codes(SymbolSpace::hevc(), static_code_profile(SymbolSpace::hevc()));
  for (auto _ : state) benchmark::DoNotOptimize(code_based_entropy(hist, codes));
}
BENCHMARK(BM_CodeBasedEntropy)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  const Scheme s = state.range(0) == 0 ? anchor_hevc() : anchor_jem();
  const auto& samples = samples_for(s.space());
  for (auto _ : state) benchmark::DoNotOptimize(encode(s, samples));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * samples.size()));
}
BENCHMARK(BM_Encode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Decode(benchmark::State& state) {
  const Scheme s = state.range(0) == 0 ? anchor_hevc() : anchor_jem();
  const auto& samples = samples_for(s.space());
  const auto blob = encode(s, samples);
  std::vector<ContextTuple> ctx;
  for (const auto& x : samples) ctx.push_back(x.ctx);
  for (auto _ : state) benchmark::DoNotOptimize(decode(s, blob, ctx));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * samples.size()));
}
BENCHMARK(BM_Decode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_LeafEvaluatorUncached(benchmark::State& state) {
  const auto hist = hist_for(SymbolSpace::hevc(), ContextSet::parse("L,U"));
  const auto cfg = extended_hevc_search_config();
  for (auto _ : state) {
    LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
    benchmark::DoNotOptimize(ev.leaf(ev.all()));
  }
}
BENCHMARK(BM_LeafEvaluatorUncached)->Unit(benchmark::kMillisecond);

void BM_ExhaustiveHevc(benchmark::State& state) {
  const auto hist = hist_for(SymbolSpace::hevc(), ContextSet::parse("L,U"));
  auto cfg = hevc_search_config();
  cfg.max_leaves = static_cast<int>(state.range(0));
  for (auto _ : state) {
    LeafEvaluator ev(hist, cfg.rules, cfg.test_set, cfg.label_set, cfg.code_set);
    benchmark::DoNotOptimize(exhaustive_tree_curve(ev, cfg));
  }
}
BENCHMARK(BM_ExhaustiveHevc)->Arg(5)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_IndexHistogram(benchmark::State& state) {
  const auto hist = hist_for(SymbolSpace::jem(), ContextSet::all());
  const auto cfg = jem_dyntree_config();
  IndexEvaluator ev(hist, cfg.rules, cfg.vocabulary, cfg.codes);
  const auto order = ev.frequency_order();
  for (auto _ : state) benchmark::DoNotOptimize(ev.bits(order));
}
BENCHMARK(BM_IndexHistogram)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
