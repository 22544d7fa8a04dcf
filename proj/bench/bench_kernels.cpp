// Serial reference vs OpenMP kernels: batch breath classification and
// dataset generation.

#include "ventsim/datagen/config.hpp"
#include "ventsim/datagen/dataset.hpp"
#include "ventsim/labeling/labels.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

using namespace ventsim;

namespace {

std::vector<DelayQuery> make_queries(std::size_t n)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> start(-200, 600), end(-400, 700);
    std::bernoulli_distribution ineffective(0.02);
    std::vector<DelayQuery> q(n);
    for (auto& d : q) {
        d.triggered = !ineffective(rng);
        if (!d.triggered) continue;
        d.start_ms = start(rng);
        d.end_ms = end(rng);
    }
    return q;
}

void BM_ClassifySerial(benchmark::State& state)
{
    const auto q = make_queries(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(classify_batch_serial(q));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ClassifyParallel(benchmark::State& state)
{
    const auto q = make_queries(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(classify_batch(q));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_ClassifySerial)->Range(1 << 10, 1 << 20);
BENCHMARK(BM_ClassifyParallel)->Range(1 << 10, 1 << 20);

RunConfig small_config()
{
    Json j = {{"master_seed", 7},
              {"defaults", {{"record_length", 30}, {"asynchrony", "default"}}},
              {"records", Json::array()}};
    for (const char* a : {"Healthy", "ARDS1", "COPD1", "Fibrosis"}) j["records"].push_back({{"archetype", a}});
    return parse_run_config(j);
}

void generate(benchmark::State& state, bool parallel)
{
    const RunConfig cfg = small_config();
    const auto dir = std::filesystem::temp_directory_path() / (parallel ? "ventsim_bench_par" : "ventsim_bench_ser");
    GenerateOptions opt;
    opt.parallel = parallel;
    for (auto _ : state) {
        std::filesystem::remove_all(dir);
        benchmark::DoNotOptimize(generate_dataset(cfg, dir, opt));
    }
    std::filesystem::remove_all(dir);
    state.SetItemsProcessed(state.iterations() * static_cast<long>(cfg.records.size()));
}

void BM_GenerateSerial(benchmark::State& state) { generate(state, false); }
void BM_GenerateParallel(benchmark::State& state) { generate(state, true); }

BENCHMARK(BM_GenerateSerial)->Unit(benchmark::kMillisecond)->Iterations(2);
BENCHMARK(BM_GenerateParallel)->Unit(benchmark::kMillisecond)->Iterations(2);

} // namespace

BENCHMARK_MAIN();
