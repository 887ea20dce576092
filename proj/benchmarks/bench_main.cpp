#include <benchmark/benchmark.h>

#include "hwobs/estimate.hpp"
#include "hwobs/observer.hpp"
#include "hwobs/placement.hpp"
#include "hwobs/rng.hpp"

using namespace hwobs;

namespace {

struct Fixture {
    HighwayConfig cfg = highway_a();
    StateSpace ss = build_state_space(cfg);
    InputSchedule sched = InputSchedule::random_dwell(cfg, 256, 7, 32);
    VecX x, u;

    Fixture() {
        Rng rng(3);
        x.resize(ss.n());
        u.resize(ss.m());
        for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, cfg.fd.rho_m);
        for (int i = 0; i < u.size(); ++i) u[i] = rng.uniform(0.0, cfg.fd.v_f * cfg.fd.rho_c);
    }
};

Fixture& fix() {
    static Fixture f;
    return f;
}

void BM_StepDirect(benchmark::State& state) {
    auto& f = fix();
    for (auto _ : state) benchmark::DoNotOptimize(step_direct(f.x, f.u, f.cfg));
}
BENCHMARK(BM_StepDirect);

void BM_StepCompact(benchmark::State& state) {
    auto& f = fix();
    for (auto _ : state) benchmark::DoNotOptimize(step_compact(f.ss, f.x, f.u));
}
BENCHMARK(BM_StepCompact);

void BM_JacobianF(benchmark::State& state) {
    auto& f = fix();
    for (auto _ : state) benchmark::DoNotOptimize(jacobian_f(f.ss, f.x, f.u));
}
BENCHMARK(BM_JacobianF);

void BM_GramianWindow(benchmark::State& state) {
    auto& f = fix();
    const auto sel = SensorSelection::all(f.ss.n());
    for (auto _ : state)
        benchmark::DoNotOptimize(gramian(f.ss, sel, f.x, f.sched, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_GramianWindow)->Arg(50)->Arg(200);

void BM_TracePlacement(benchmark::State& state) {
    auto& f = fix();
    const auto terms = make_gramian_terms(f.ss, f.x, f.sched, 100);
    for (auto _ : state) benchmark::DoNotOptimize(solve_trace_exact(terms, 9));
}
BENCHMARK(BM_TracePlacement);

void BM_DetBnb11(benchmark::State& state) {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 40, 5, 10);
    Rng rng(9);
    VecX x0(ss.n());
    for (int i = 0; i < x0.size(); ++i) x0[i] = rng.uniform(0.0, cfg.fd.rho_m);
    const auto terms = make_gramian_terms(ss, x0, sched, 40);
    for (auto _ : state) benchmark::DoNotOptimize(solve_bnb(terms, Metric::GeomeanDet, 4));
}
BENCHMARK(BM_DetBnb11);

} // namespace

BENCHMARK_MAIN();
