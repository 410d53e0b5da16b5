#pragma once

#include <vector>

#include "ditcache/router.hpp"
#include "ditcache/tensor.hpp"

namespace ditcache {

struct AdamWConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled
};

// AdamW over a fixed list of leaf tensors (model pretraining).
class AdamW {
public:
    AdamW(AdamWConfig cfg, std::vector<ad::Tensor> params);

    // reads accumulated grads, updates values in place, zeroes grads
    void step();

private:
    AdamWConfig cfg_;
    std::vector<ad::Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

// AdamW over router logits with per-entry moments and step counts, so rows
// updated at different frequencies (step-wise or sampled-timestep training)
// get correct bias correction.
class RouterAdamW {
public:
    RouterAdamW(AdamWConfig cfg, int T, int N);

    // applies grads (length N) to row t of the router's logits; t in [1..T-1]
    void update_row(Router& router, int t, const std::vector<double>& grads);

private:
    AdamWConfig cfg_;
    int T_, N_;
    std::vector<double> m_, v_;
    std::vector<long> steps_;
};

}  // namespace ditcache
