#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ditcache/cache.hpp"
#include "ditcache/tensor.hpp"

namespace ditcache {

struct DiTConfig {
    int image_size = 8;
    int channels = 1;
    int patch_size = 2;
    int d_model = 64;
    int n_heads = 4;
    int depth = 4;      // transformer layers; N = 2*depth cacheable blocks
    int n_classes = 4;  // class ids [0, n_classes); id n_classes is the null class
    uint64_t param_seed = 0;

    int n_tokens() const { return (image_size / patch_size) * (image_size / patch_size); }
    int patch_dim() const { return channels * patch_size * patch_size; }
    int n_blocks() const { return 2 * depth; }
    int null_class() const { return n_classes; }
    void validate() const;  // divisibility constraints
};

// timestep is on the training scale [1, T_train]; class_id may be null_class()
struct Condition {
    int timestep = 1;
    int class_id = 0;
};

struct AttnBlock {
    ad::Tensor ln_g, ln_b;
    ad::Tensor wq, wk, wv, wo;  // (d,d) each
};

struct FfnBlock {
    ad::Tensor ln_g, ln_b;
    ad::Tensor w1;  // (d, 4d)
    ad::Tensor w2;  // (4d, d)
};

// Toy transformer noise predictor. Cacheable units are the Attention blocks
// and FFNs without their residual connections, indexed b_0..b_{N-1}: block i
// is Attention for even i and FFN for odd i, both of layer i/2.
struct DiTModel {
    DiTConfig cfg;
    ad::Tensor patch_embed;              // (patch_dim, d)
    ad::Tensor pos_embed;                // (n_tokens, d), fixed sinusoidal, not learned
    ad::Tensor time_w1, time_w2;         // (d, d) two-layer timestep MLP
    ad::Tensor class_embed;              // (n_classes+1, d), last row is the null class
    std::vector<AttnBlock> attn;         // depth entries
    std::vector<FfnBlock> ffn;           // depth entries
    ad::Tensor final_ln_g, final_ln_b;
    ad::Tensor final_proj;               // (d, patch_dim), zero-initialized

    // Weights start frozen (requires_grad = false); training paths that tune
    // them opt in via set_requires_grad(true).
    static DiTModel init(const DiTConfig& cfg);

    std::vector<ad::Tensor> parameters() const;  // pos_embed excluded
    void set_requires_grad(bool on);
    long parameter_count() const;
};

enum class CacheMode {
    none,  // every block computed fresh, no cache access
    hard,  // compute-or-load by gate > tau; computed outputs overwrite the cache
    soft,  // blend gate*fresh + (1-gate)*cached; same overwrite rule
};

// Low-level pieces, exposed for instrumentation and reference-stepped tests.
ad::Tensor embed_input(const DiTModel& m, const ad::Tensor& x, const Condition& cond);
ad::Tensor compute_block(const DiTModel& m, int block, const ad::Tensor& h);
ad::Tensor project_output(const DiTModel& m, const ad::Tensor& h);

// Full forward pass. gates must hold N scalar tensors when mode != none
// (values in (0,1]; constants are fine for hard mode). In soft mode the blend
// participates in the gradient graph and cached values enter detached.
ad::Tensor forward(const DiTModel& m, const ad::Tensor& x, const Condition& cond,
                   std::span<const ad::Tensor> gates, double tau, Cache* cache, CacheMode mode);

// Teacher path: no cache, everything computed fresh.
ad::Tensor forward_plain(const DiTModel& m, const ad::Tensor& x, const Condition& cond);

}  // namespace ditcache
