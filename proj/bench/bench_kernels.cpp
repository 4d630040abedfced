// Serial vs OpenMP: cosine scoring, top-k search, and fragment extraction.
#include <benchmark/benchmark.h>

#include "iodiag/kb.hpp"
#include "iodiag/kernels.hpp"
#include "iodiag/summary.hpp"
#include "iodiag/trace.hpp"

#include <random>

using namespace iodiag;

namespace {

struct Matrix {
    std::vector<double> data, norms, query;
    double query_norm = 0;
    std::size_t dim = 0;
};

Matrix random_matrix(std::size_t rows, std::size_t dim) {
    std::mt19937_64 rng(rows * 31 + dim);
    std::normal_distribution<double> g;
    Matrix m;
    m.dim = dim;
    m.data.resize(rows * dim);
    for (auto& x : m.data) x = g(rng);
    for (std::size_t r = 0; r < rows; ++r)
        m.norms.push_back(kernels::norm(std::span<const double>(m.data).subspan(r * dim, dim)));
    m.query.resize(dim);
    for (auto& x : m.query) x = g(rng);
    m.query_norm = kernels::norm(m.query);
    return m;
}

void BM_cosine_serial(benchmark::State& state) {
    const auto m = random_matrix(static_cast<std::size_t>(state.range(0)), 768);
    std::vector<double> out(m.norms.size());
    for (auto _ : state) {
        kernels::cosine_scores_serial(m.data, m.dim, m.norms, m.query, m.query_norm, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_cosine_parallel(benchmark::State& state) {
    const auto m = random_matrix(static_cast<std::size_t>(state.range(0)), 768);
    std::vector<double> out(m.norms.size());
    for (auto _ : state) {
        kernels::cosine_scores_parallel(m.data, m.dim, m.norms, m.query, m.query_norm, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

kb::VectorIndex random_index(std::size_t rows, std::size_t dim) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    kb::VectorIndex idx;
    for (std::size_t i = 0; i < rows; ++i) {
        kb::EmbeddedChunk e;
        e.chunk.doc_id = "doc" + std::to_string(i / 8);
        e.chunk.chunk_index = i % 8;
        e.vector.resize(dim);
        for (auto& x : e.vector) x = g(rng);
        idx.add(std::move(e));
    }
    return idx;
}

template <Execution Mode>
void BM_search(benchmark::State& state) {
    const auto idx = random_index(static_cast<std::size_t>(state.range(0)), 768);
    const auto query = idx.at(0).vector;
    for (auto _ : state) benchmark::DoNotOptimize(idx.search(query, 15, Mode));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Execution Mode>
void BM_extract(benchmark::State& state) {
    const auto profile = trace::parse_trace_file(IODIAG_BENCH_TRACE);
    summary::ExtractOptions opt;
    opt.execution = Mode;
    for (auto _ : state) benchmark::DoNotOptimize(summary::extract_fragments(profile, opt));
}

}  // namespace

BENCHMARK(BM_cosine_serial)->Arg(1000)->Arg(10000)->Arg(50000);
BENCHMARK(BM_cosine_parallel)->Arg(1000)->Arg(10000)->Arg(50000);
BENCHMARK(BM_search<Execution::serial>)->Name("BM_search_serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_search<Execution::parallel>)->Name("BM_search_parallel")->Arg(1000)->Arg(10000);
BENCHMARK(BM_extract<Execution::serial>)->Name("BM_extract_serial");
BENCHMARK(BM_extract<Execution::parallel>)->Name("BM_extract_parallel");

BENCHMARK_MAIN();
