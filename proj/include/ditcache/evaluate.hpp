#pragma once

#include <string>
#include <vector>

#include "ditcache/dit.hpp"
#include "ditcache/router.hpp"
#include "ditcache/sampler.hpp"
#include "ditcache/schedule.hpp"

namespace ditcache {

// Heuristic schedules, materialized as routers with large-magnitude logits so
// every gate sits strictly away from the threshold.
Router make_fora(int k, int T, int N, double tau);         // compute every k-th step
Router make_alternating(int T, int N, double tau);         // fora with k = 2
Router make_random_cur(double target_cur, int T, int N, double tau, uint64_t seed);

// Mean squared Frobenius distance between cached and plain trajectories,
// per timestep t in [0, T-1], averaged over seeds. The two runs share x_T.
std::vector<double> trajectory_mse(const DiTModel& m, const GateMatrix& gates,
                                   const NoiseSchedule& ns, const SamplerConfig& sc,
                                   int n_seeds, uint64_t base_seed, int class_id = 0);

struct EvalReport {
    std::string name;
    double cur = 0.0;
    double speedup = 0.0;
    double wallclock_per_sample_s = 0.0;
    double final_mse_mean = 0.0;  // |x0_cached - x0_plain|_F^2, mean over seeds
    double final_mse_sd = 0.0;
    std::vector<double> curve;    // per-step trajectory error, index = t
};

EvalReport evaluate_router(const std::string& name, const DiTModel& m, const Router& router,
                           const NoiseSchedule& ns, const SamplerConfig& sc, int n_seeds,
                           uint64_t base_seed, int class_id = 0);

// Rows sorted by final-sample error, ascending. Stable for ties.
std::vector<EvalReport> rank_reports(std::vector<EvalReport> reports);

std::string reports_to_csv(const std::vector<EvalReport>& reports);
std::string reports_to_json(const std::vector<EvalReport>& reports);
std::string curve_to_csv(const std::vector<double>& curve);

}  // namespace ditcache
