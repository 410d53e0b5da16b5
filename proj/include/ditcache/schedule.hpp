#pragma once

#include <vector>

#include "ditcache/tensor.hpp"

namespace ditcache {

// DDPM-style linear beta schedule over the training timescale.
struct NoiseSchedule {
    int t_train = 1000;
    std::vector<double> betas;       // betas[s] is beta at training step s+1
    std::vector<double> alphas_bar;  // cumulative products of (1 - beta)

    // alpha_bar at training step t in [0, t_train]; t=0 is defined as 1 so the
    // final sampler step returns the clean estimate.
    double alpha_bar(int t) const;
};

NoiseSchedule make_schedule(int t_train = 1000, double beta_start = 1e-4, double beta_end = 0.02);

// Deterministic DDIM (eta = 0) update from training step t_hi to t_lo < t_hi:
//   x0_hat = (x - sqrt(1-abar_hi) eps) / sqrt(abar_hi)
//   x_lo   = sqrt(abar_lo) x0_hat + sqrt(1-abar_lo) eps
// Operates on detached data; the result carries no graph edges.
ad::Tensor ddim_step(const NoiseSchedule& ns, const ad::Tensor& x, int t_hi, int t_lo,
                     const ad::Tensor& eps);

// Euler update on a linear time grid sigma(t) = t / t_train:
//   x_lo = x + (sigma_lo - sigma_hi) * velocity
ad::Tensor euler_step(const ad::Tensor& x, int t_hi, int t_lo, int t_train,
                      const ad::Tensor& velocity);

}  // namespace ditcache
