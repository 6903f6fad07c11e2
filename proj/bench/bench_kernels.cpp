// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "nisynth/sampling.hpp"
#include "nisynth/sim.hpp"
#include "nisynth/structure.hpp"
#include "nisynth/synthesis.hpp"

using namespace nisynth;

namespace {

const std::vector<std::string> kVars{"xi1", "xi2", "xi3", "xc1", "xc2"};

const Expr& storage() {
    static const Expr W = parse("xi1^2 + cbrt(xi2)^4 + 0.5*xi3^2 + 0.5*xc1^2 + 0.25*xc2^4 - xi1*xc1 - xi2*xc2");
    return W;
}

PointSet points(std::size_t n) { return sample_box(Box::symmetric(kVars.size(), 3.0), n, 20240101); }

void BM_EvaluateBatchSerial(benchmark::State& state) {
    const CompiledExpr e(storage(), kVars);
    const auto pts = points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::evaluate_batch_serial(e, pts));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EvaluateBatchParallel(benchmark::State& state) {
    const CompiledExpr e(storage(), kVars);
    const auto pts = points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::evaluate_batch(e, pts));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScanSignSerial(benchmark::State& state) {
    const CompiledExpr e(storage(), kVars);
    const auto pts = points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::scan_sign_serial(e, pts, true));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScanSignParallel(benchmark::State& state) {
    const CompiledExpr e(storage(), kVars);
    const auto pts = points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(kernels::scan_sign(e, pts, true));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

AffineSystem non_involutive() {
    ExprMatrix g(3, 2);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) g(i, j) = Expr::constant(0.0);
    g(0, 0) = Expr::constant(1.0);
    g(1, 1) = parse("1 + x3^2");
    g(2, 1) = parse("sin(x2)");
    return make_system({"x1", "x2", "x3"}, {parse("0"), parse("0"), parse("0")}, g, {parse("x1"), parse("x2")});
}

void BM_Involutive(benchmark::State& state) {
    const auto sys = non_involutive();
    SamplingConfig opts;
    opts.samples = 2000;
    opts.parallel = state.range(0) != 0;
    for (auto _ : state) benchmark::DoNotOptimize(check_involutive(sys, opts));
}

const InternalDynamics& internal() {
    static const InternalDynamics dyn{{"z"}, {"xi1"}, {parse("-z - z^3 + xi1^2")}};
    return dyn;
}

IssProbeConfig probe_config() {
    IssProbeConfig cfg;
    cfg.z0 = {{10.0}, {-10.0}, {1.0}};
    cfg.T_final = 10.0;
    return cfg;
}

void BM_IssProbeSerial(benchmark::State& state) {
    const auto cfg = probe_config();
    for (auto _ : state) benchmark::DoNotOptimize(iss_probe_serial(internal(), cfg));
}

void BM_IssProbeParallel(benchmark::State& state) {
    const auto cfg = probe_config();
    for (auto _ : state) benchmark::DoNotOptimize(iss_probe(internal(), cfg));
}

}  // namespace

BENCHMARK(BM_EvaluateBatchSerial)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_EvaluateBatchParallel)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_ScanSignSerial)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_ScanSignParallel)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_Involutive)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IssProbeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IssProbeParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
