#include "ditcache/dit.hpp"

#include <cmath>

#include "ditcache/errors.hpp"
#include "ditcache/ops.hpp"
#include "ditcache/rng.hpp"

namespace ditcache {

using ad::Tensor;

void DiTConfig::validate() const {
    if (image_size <= 0 || channels <= 0 || patch_size <= 0 || d_model <= 0 || n_heads <= 0 ||
        depth <= 0 || n_classes <= 0)
        throw ConfigError("model config: all dimensions must be positive");
    if (image_size % patch_size != 0)
        throw ConfigError("model config: image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    if (d_model % n_heads != 0)
        throw ConfigError("model config: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
}

namespace {

Tensor init_weight(Rng& rng, int fan_in, ad::Shape shape) {
    double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    size_t n = static_cast<size_t>(ad::numel(shape));
    return Tensor::from(std::move(shape), rng.normal_vec(n, 0.0, std));
}

// 1D sin/cos position table over token index.
Tensor make_pos_embed(int n_tokens, int d) {
    std::vector<double> v(static_cast<size_t>(n_tokens) * d);
    int half = d / 2;
    for (int t = 0; t < n_tokens; t++)
        for (int j = 0; j < half; j++) {
            double freq = std::exp(-std::log(10000.0) * j / half);
            v[static_cast<size_t>(t) * d + j] = std::sin(t * freq);
            v[static_cast<size_t>(t) * d + half + j] = std::cos(t * freq);
        }
    return Tensor::from({n_tokens, d}, std::move(v));
}

// sinusoidal timestep features, one row per batch element (t is shared)
Tensor timestep_features(int t, int batch, int d) {
    std::vector<double> row(d);
    int half = d / 2;
    for (int j = 0; j < half; j++) {
        double freq = std::exp(-std::log(10000.0) * j / half);
        row[j] = std::sin(t * freq);
        row[half + j] = std::cos(t * freq);
    }
    std::vector<double> v(static_cast<size_t>(batch) * d);
    for (int b = 0; b < batch; b++)
        std::copy(row.begin(), row.end(), v.begin() + static_cast<size_t>(b) * d);
    return Tensor::from({batch, d}, std::move(v));
}

Tensor tile_rows(const Tensor& rows, int batch) {
    const auto& s = rows.shape();
    std::vector<double> v(static_cast<size_t>(batch) * rows.size());
    for (int b = 0; b < batch; b++)
        std::copy(rows.values().begin(), rows.values().end(),
                  v.begin() + static_cast<size_t>(b) * rows.size());
    return Tensor::from({batch, s[0], s[1]}, std::move(v));
}

}  // namespace

DiTModel DiTModel::init(const DiTConfig& cfg) {
    cfg.validate();
    DiTModel m;
    m.cfg = cfg;
    Rng rng(cfg.param_seed);
    const int d = cfg.d_model;

    m.patch_embed = init_weight(rng, cfg.patch_dim(), {cfg.patch_dim(), d});
    m.pos_embed = make_pos_embed(cfg.n_tokens(), d);
    m.time_w1 = init_weight(rng, d, {d, d});
    m.time_w2 = init_weight(rng, d, {d, d});
    m.class_embed = Tensor::from({cfg.n_classes + 1, d},
                                  rng.normal_vec(static_cast<size_t>(cfg.n_classes + 1) * d,
                                                 0.0, 0.1));
    for (int l = 0; l < cfg.depth; l++) {
        AttnBlock a;
        a.ln_g = Tensor::from({d}, std::vector<double>(d, 1.0));
        a.ln_b = Tensor::from({d}, std::vector<double>(d, 0.0));
        a.wq = init_weight(rng, d, {d, d});
        a.wk = init_weight(rng, d, {d, d});
        a.wv = init_weight(rng, d, {d, d});
        a.wo = init_weight(rng, d, {d, d});
        m.attn.push_back(std::move(a));

        FfnBlock f;
        f.ln_g = Tensor::from({d}, std::vector<double>(d, 1.0));
        f.ln_b = Tensor::from({d}, std::vector<double>(d, 0.0));
        f.w1 = init_weight(rng, d, {d, 4 * d});
        f.w2 = init_weight(rng, 4 * d, {4 * d, d});
        m.ffn.push_back(std::move(f));
    }
    m.final_ln_g = Tensor::from({d}, std::vector<double>(d, 1.0));
    m.final_ln_b = Tensor::from({d}, std::vector<double>(d, 0.0));
    // zero-init: an untrained model predicts zero noise
    m.final_proj = Tensor::from({d, cfg.patch_dim()},
                                 std::vector<double>(static_cast<size_t>(d) * cfg.patch_dim(), 0.0));
    return m;
}

std::vector<Tensor> DiTModel::parameters() const {
    std::vector<Tensor> ps = {patch_embed, time_w1, time_w2, class_embed};
    for (const auto& a : attn) {
        ps.push_back(a.ln_g);
        ps.push_back(a.ln_b);
        ps.push_back(a.wq);
        ps.push_back(a.wk);
        ps.push_back(a.wv);
        ps.push_back(a.wo);
    }
    for (const auto& f : ffn) {
        ps.push_back(f.ln_g);
        ps.push_back(f.ln_b);
        ps.push_back(f.w1);
        ps.push_back(f.w2);
    }
    ps.push_back(final_ln_g);
    ps.push_back(final_ln_b);
    ps.push_back(final_proj);
    return ps;
}

void DiTModel::set_requires_grad(bool on) {
    for (auto& p : parameters())
        p.impl()->requires_grad = on;
}

long DiTModel::parameter_count() const {
    long n = 0;
    for (const auto& p : parameters())
        n += p.size();
    return n;
}

Tensor embed_input(const DiTModel& m, const Tensor& x, const Condition& cond) {
    const auto& cfg = m.cfg;
    const auto& xs = x.shape();
    if (xs.size() != 4 || xs[1] != cfg.channels || xs[2] != cfg.image_size ||
        xs[3] != cfg.image_size)
        throw ShapeError("forward: input shape " + ad::shape_str(xs) + " does not match (B," +
                         std::to_string(cfg.channels) + "," + std::to_string(cfg.image_size) +
                         "," + std::to_string(cfg.image_size) + ")");
    if (cond.class_id < 0 || cond.class_id > cfg.n_classes)
        throw ConfigError("forward: unknown class id " + std::to_string(cond.class_id));
    const int B = xs[0];

    Tensor tokens = ad::matmul(ad::patchify(x, cfg.patch_size), m.patch_embed);
    tokens = ad::add(tokens, tile_rows(m.pos_embed, B));

    Tensor t_feat = timestep_features(cond.timestep, B, cfg.d_model);
    Tensor t_emb = ad::matmul(ad::gelu(ad::matmul(t_feat, m.time_w1)), m.time_w2);
    Tensor c_emb = ad::gather_rows(m.class_embed, std::vector<int>(B, cond.class_id));
    return ad::add_rows(tokens, ad::add(t_emb, c_emb));
}

Tensor compute_block(const DiTModel& m, int block, const Tensor& h) {
    const auto& cfg = m.cfg;
    if (block < 0 || block >= cfg.n_blocks())
        throw ShapeError("block index " + std::to_string(block) + " out of range [0," +
                         std::to_string(cfg.n_blocks()) + ")");
    const int layer = block / 2;
    if (block % 2 == 0) {
        const auto& a = m.attn[layer];
        Tensor u = ad::layernorm(h, a.ln_g, a.ln_b);
        Tensor q = ad::split_heads(ad::matmul(u, a.wq), cfg.n_heads);
        Tensor k = ad::split_heads(ad::matmul(u, a.wk), cfg.n_heads);
        Tensor v = ad::split_heads(ad::matmul(u, a.wv), cfg.n_heads);
        const int hd = cfg.d_model / cfg.n_heads;
        Tensor att = ad::softmax(ad::scale(ad::matmul(q, ad::transpose_last2(k)),
                                           1.0 / std::sqrt(static_cast<double>(hd))));
        Tensor mixed = ad::merge_heads(ad::matmul(att, v), cfg.n_heads);
        return ad::matmul(mixed, a.wo);
    }
    const auto& f = m.ffn[layer];
    Tensor u = ad::layernorm(h, f.ln_g, f.ln_b);
    return ad::matmul(ad::gelu(ad::matmul(u, f.w1)), f.w2);
}

Tensor project_output(const DiTModel& m, const Tensor& h) {
    const auto& cfg = m.cfg;
    Tensor u = ad::layernorm(h, m.final_ln_g, m.final_ln_b);
    Tensor tokens = ad::matmul(u, m.final_proj);
    return ad::unpatchify(tokens, cfg.channels, cfg.image_size, cfg.image_size, cfg.patch_size);
}

Tensor forward(const DiTModel& m, const Tensor& x, const Condition& cond,
               std::span<const Tensor> gates, double tau, Cache* cache, CacheMode mode) {
    const int n_blocks = m.cfg.n_blocks();
    if (mode != CacheMode::none) {
        if (static_cast<int>(gates.size()) != n_blocks)
            throw ShapeError("forward: router row length " + std::to_string(gates.size()) +
                             " != N " + std::to_string(n_blocks));
        if (!cache)
            throw CacheError("forward: cached mode without a cache");
        if (cache->n_slots() != n_blocks)
            throw CacheError("forward: cache has " + std::to_string(cache->n_slots()) +
                             " slots, model has " + std::to_string(n_blocks) + " blocks");
    }

    Tensor h = embed_input(m, x, cond);
    for (int i = 0; i < n_blocks; i++) {
        Tensor out;
        switch (mode) {
            case CacheMode::none:
                out = compute_block(m, i, h);
                break;
            case CacheMode::hard: {
                if (gates[i].item() > tau) {
                    out = compute_block(m, i, h);
                    cache->store(i, out.detach());
                    cache->computed_count++;
                } else {
                    out = cache->load(i);
                    cache->reused_count++;
                }
                break;
            }
            case CacheMode::soft: {
                Tensor fresh = compute_block(m, i, h);
                cache->computed_count++;
                Tensor cached = cache->load(i);  // stored detached
                out = ad::add(ad::mul(fresh, gates[i]),
                              ad::mul(cached, ad::sub(Tensor::scalar(1.0), gates[i])));
                if (gates[i].item() > tau)
                    cache->store(i, fresh.detach());
                break;
            }
        }
        h = ad::add(h, out);
    }
    return project_output(m, h);
}

Tensor forward_plain(const DiTModel& m, const Tensor& x, const Condition& cond) {
    return forward(m, x, cond, {}, 0.0, nullptr, CacheMode::none);
}

}  // namespace ditcache
