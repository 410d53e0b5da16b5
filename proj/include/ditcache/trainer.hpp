#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "ditcache/dit.hpp"
#include "ditcache/router.hpp"
#include "ditcache/sampler.hpp"
#include "ditcache/schedule.hpp"

namespace ditcache {

enum class Objective { iepo, ltc };
enum class Paradigm { sdt, ltc };
enum class ProxyMetric { fro, l1, kl };
enum class LtcSampling { even_only, unconstrained };

struct TrainConfig {
    long iters = 2000;        // timestep-level iterations; outer loops = iters / T
    double beta = 5e-4;       // regularization coefficient
    long interval_c = 512;    // proxy refresh interval, C mod T == 0
    double lr = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double weight_decay = 0.0;
    Objective objective = Objective::iepo;
    Paradigm paradigm = Paradigm::sdt;
    bool teacher_forcing = false;
    ProxyMetric proxy_metric = ProxyMetric::fro;
    LtcSampling ltc_sampling = LtcSampling::even_only;
    uint64_t seed = 0;
    int batch = 8;
    double tau = 0.1;
    double router_init_mean = 1.1;   // initial gates ~0.75, above tau
    double router_init_sigma = 0.1;

    void validate(int T) const;
};

// Per-timestep final-image-error proxies; lambda[t] for t in [1..T], lambda[T]
// pinned to 0 by the pre-fill convention.
struct ProxyVector {
    std::vector<double> lambda;  // size T+1, index 0 unused
    long refreshed_at = -1;

    double at(int t) const { return lambda.at(t); }
};

// Scalar distance between two final images.
double proxy_metric_value(const ad::Tensor& a, const ad::Tensor& b, ProxyMetric kind);

// Final-image error proxies for every timestep: one hard-mode generation under
// the router, then one per t under the row-t-disabled mask; lambda_t is the
// metric between the two final images. Rows already fully above tau yield an
// exactly-zero lambda (masking changes nothing). Entirely graph-free.
ProxyVector gen_proxy(const DiTModel& m, const NoiseSchedule& ns, const SamplerConfig& sc,
                      const ad::Tensor& x_T, int class_id, const Router& router,
                      ProxyMetric metric = ProxyMetric::fro);

// Append-only CSV training log: iter, t, l_mse, lambda, reg, cur.
class TrainLog {
public:
    explicit TrainLog(const std::string& path);
    void add(long iter, int t, double l_mse, double lambda, double reg, double cur);

private:
    std::ofstream out_;
};

struct TrainStats {
    long proxy_refreshes = 0;
    long row_updates = 0;
};

// Step-wise denoising training: walks the full T-step trajectory each outer
// iteration so every row's loss sees the cache state produced by all earlier
// steps. Teacher weights stay frozen; only router logits train.
Router sdt_train(const DiTModel& teacher, const NoiseSchedule& ns, const SamplerConfig& sc,
                 const TrainConfig& cfg, TrainLog* log = nullptr, TrainStats* stats = nullptr);

// Baseline trainer: each iteration samples a timestep t, pre-fills an empty
// cache at t from a forward-noised dataset image, and trains row t-1 only.
Router ltc_train(const DiTModel& teacher, const NoiseSchedule& ns, const SamplerConfig& sc,
                 const TrainConfig& cfg, TrainLog* log = nullptr, TrainStats* stats = nullptr);

// Dispatch on cfg.paradigm.
Router train_router(const DiTModel& teacher, const NoiseSchedule& ns, const SamplerConfig& sc,
                    const TrainConfig& cfg, TrainLog* log = nullptr,
                    TrainStats* stats = nullptr);

}  // namespace ditcache
