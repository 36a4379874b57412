// Microbenchmarks for the projection and coordinate-descent hot loops.

#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>
#include <random>

#include "sct/optimizer.hpp"
#include "sct/projector.hpp"
#include "sct/simulator.hpp"

using namespace sct;

namespace {

ProjectorSpec make_spec(int n, int n_views) {
    ProjectorSpec s;
    s.geometry.detector_channels = n + n / 2;
    s.geometry.channel_pitch = 2.0 / s.geometry.detector_channels * std::sqrt(2.0);
    s.schedule = uniform_angles(n_views, 0.0, 180.0);
    s.ny = s.nx = n;
    s.nz = 1;
    s.voxel_size = 2.0 / n;
    return s;
}

Volume phantom(const ProjectorSpec& spec) {
    PhantomSpec ps;
    ps.nx = spec.nx;
    ps.ny = spec.ny;
    ps.voxel_size = spec.voxel_size;
    return make_phantom(ps);
}

void bm_forward_project(benchmark::State& state) {
    auto spec = make_spec(static_cast<int>(state.range(0)), 90);
    Volume x = phantom(spec);
    for (auto _ : state) {
        Sinogram y = forward_project(x, spec);
        benchmark::DoNotOptimize(y.data.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<int64_t>(spec.n_measurements()));
}

void bm_back_project(benchmark::State& state) {
    auto spec = make_spec(static_cast<int>(state.range(0)), 90);
    Sinogram y = forward_project(phantom(spec), spec);
    for (auto _ : state) {
        Volume x = back_project(y, spec);
        benchmark::DoNotOptimize(x.data.data());
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<int64_t>(spec.n_measurements()));
}

void bm_sparse_build(benchmark::State& state) {
    auto spec = make_spec(static_cast<int>(state.range(0)), 90);
    std::vector<int> views(spec.schedule.n_views());
    std::iota(views.begin(), views.end(), 0);
    for (auto _ : state) {
        SparseProjection A = build_sparse_projection(spec, views);
        benchmark::DoNotOptimize(A.val.data());
    }
}

// One full reconstruction at a fixed small iteration budget; this covers the
// ICD sweep plus the periodic refresh paths.
void bm_icd_iterations(benchmark::State& state) {
    auto spec = make_spec(static_cast<int>(state.range(0)), 45);
    Volume truth = phantom(spec);
    CorruptionSpec corr;
    corr.dose_I0 = 1e4;
    corr.seed = 1;
    SynthesisResult res = synthesize(truth, spec, corr);
    WeightMap W = compute_weights(res.counts);
    FidelityModel fid;
    PriorModel prior;
    prior.sigma_x = 0.1;
    prior.beta_s = 2e-4;
    ReconOptions opts;
    opts.max_outer_iters = 5;
    opts.stop_rel_x = 0.0;
    opts.stop_rel_cost = 0.0;
    for (auto _ : state) {
        ReconResult r = mbir_reconstruct(res.log_norm, W, spec, fid, prior, opts);
        benchmark::DoNotOptimize(r.x_hat.data.data());
    }
    state.SetItemsProcessed(state.iterations() * opts.max_outer_iters *
                            static_cast<int64_t>(spec.n_voxels()));
}

BENCHMARK(bm_forward_project)->Arg(64)->Arg(128)->Arg(256)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_back_project)->Arg(64)->Arg(128)->Arg(256)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(bm_sparse_build)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_icd_iterations)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
