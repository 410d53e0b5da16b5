#pragma once

#include <optional>
#include <vector>

#include "ditcache/dit.hpp"
#include "ditcache/router.hpp"
#include "ditcache/schedule.hpp"

namespace ditcache {

enum class SolverKind { ddim, euler };

struct SamplerConfig {
    SolverKind kind = SolverKind::ddim;
    int steps = 8;           // T, the maximum denoising step of the router
    double cfg_scale = 1.0;  // w >= 1; w == 1 runs the conditional branch only

    // Uniform stride over [1, t_train]: inference step t (in [1..T]) denoises at
    // training step floor(t * t_train / T). Returned descending, size `steps`.
    std::vector<int> timesteps(int t_train) const;
    void validate() const;
};

struct StepRecord {
    int t = 0;                // inference step (paper scale), T..1
    int t_train_hi = 0;       // training step the model was conditioned on
    ad::Tensor x;             // state after this step: x_{t-1}
    ad::Tensor eps;           // guided noise prediction used by the solver
    long blocks_computed = 0; // across cfg branches
    long blocks_reused = 0;
};

struct Trajectory {
    ad::Tensor x_start;              // x_T
    std::vector<StepRecord> steps;   // T entries, t descending

    const ad::Tensor& x0() const { return steps.back().x; }
    // x_t for t in [0, T]; t = T returns the start state
    const ad::Tensor& x_at(int t) const;
};

// Full denoising run. When `gates` is non-null the forward passes run in hard
// caching mode with one cache per cfg branch; the pre-fill at t = T is
// guaranteed by the all-ones router row. Deterministic given its inputs.
Trajectory sample(const DiTModel& m, const GateMatrix* gates, const NoiseSchedule& ns,
                  const SamplerConfig& sc, const ad::Tensor& x_T, int class_id);

}  // namespace ditcache
