#pragma once

#include <cstdint>

#include "ditcache/dataset.hpp"
#include "ditcache/dit.hpp"
#include "ditcache/schedule.hpp"

namespace ditcache {

struct PretrainConfig {
    long steps = 3000;
    int batch = 8;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double null_cond_prob = 0.1;  // classifier-free dropout to the null class
    double val_threshold = 0.9;   // required held-out denoising loss
    int val_batches = 16;
    uint64_t seed = 0;
};

struct PretrainStats {
    double final_train_loss = 0.0;
    double val_loss = 0.0;
    long steps_run = 0;
};

// Standard denoising pretraining on the synthetic dataset: per step draw a
// class-conditional batch, a shared timestep, noise it, and regress the noise.
// steps == 0 returns the freshly initialized model unchanged. NaN loss aborts
// with diagnostics. Deterministic given (config seeds).
DiTModel pretrain_teacher(const DiTConfig& model_cfg, const NoiseSchedule& ns,
                          const PretrainConfig& cfg, PretrainStats* stats = nullptr);

// Mean per-element denoising loss over held-out synthetic batches.
double validation_loss(const DiTModel& m, const NoiseSchedule& ns, const PretrainConfig& cfg);

}  // namespace ditcache
