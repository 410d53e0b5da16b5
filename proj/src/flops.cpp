#include "ditcache/flops.hpp"

namespace ditcache {

namespace {

double gemm(double m, double n, double k) { return 2.0 * m * n * k; }

}  // namespace

std::vector<double> block_flops(const DiTConfig& cfg) {
    const double T = cfg.n_tokens();
    const double d = cfg.d_model;
    const double hd = static_cast<double>(cfg.d_model) / cfg.n_heads;
    const double H = cfg.n_heads;

    // layernorm: ~8 flops per element (mean, var, normalize, scale/shift)
    const double ln = 8.0 * T * d;

    double attn = ln;
    attn += 3.0 * gemm(T, d, d);        // q, k, v projections
    attn += H * gemm(T, T, hd);         // scores
    attn += 5.0 * H * T * T;            // softmax (exp, max, sum, div)
    attn += H * gemm(T, hd, T);         // attention-weighted values
    attn += gemm(T, d, d);              // output projection

    double ffn = ln;
    ffn += gemm(T, 4.0 * d, d);
    ffn += 8.0 * T * 4.0 * d;           // gelu
    ffn += gemm(T, d, 4.0 * d);

    std::vector<double> out(cfg.n_blocks());
    for (int i = 0; i < cfg.n_blocks(); i++)
        out[i] = i % 2 == 0 ? attn : ffn;
    return out;
}

double total_flops_per_forward(const DiTConfig& cfg) {
    double s = 0.0;
    for (double v : block_flops(cfg))
        s += v;
    return s;
}

}  // namespace ditcache
