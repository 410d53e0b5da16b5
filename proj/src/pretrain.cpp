#include "ditcache/pretrain.hpp"

#include <cmath>

#include "ditcache/errors.hpp"
#include "ditcache/ops.hpp"
#include "ditcache/optimizer.hpp"
#include "ditcache/rng.hpp"

namespace ditcache {

using ad::Tensor;

namespace {

Tensor noised(const NoiseSchedule& ns, const Tensor& x0, int t, const Tensor& eps) {
    const double ab = ns.alpha_bar(t);
    const double s = std::sqrt(ab), n = std::sqrt(1.0 - ab);
    const auto& xv = x0.values();
    const auto& ev = eps.values();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); i++)
        out[i] = s * xv[i] + n * ev[i];
    return Tensor::from(x0.shape(), std::move(out));
}

double denoise_loss_batch(const DiTModel& m, const NoiseSchedule& ns, SyntheticDataset& ds,
                          Rng& rng, int batch, double null_prob, bool build_graph,
                          Tensor* loss_out) {
    auto [x0, cls] = ds.next_batch(batch);
    int t = 1 + rng.uniform_int(ns.t_train);
    Tensor eps = Tensor::from(x0.shape(), rng.normal_vec(x0.values().size()));
    Tensor x_t = noised(ns, x0, t, eps);
    if (null_prob > 0.0 && rng.uniform() < null_prob)
        cls = m.cfg.null_class();
    Tensor pred = forward_plain(m, x_t, {t, cls});
    Tensor loss = ad::scale(ad::frobenius_sq(pred, eps), 1.0 / static_cast<double>(eps.size()));
    if (build_graph && loss_out)
        *loss_out = loss;
    return loss.item();
}

}  // namespace

DiTModel pretrain_teacher(const DiTConfig& model_cfg, const NoiseSchedule& ns,
                          const PretrainConfig& cfg, PretrainStats* stats) {
    DiTModel m = DiTModel::init(model_cfg);
    m.set_requires_grad(true);
    SyntheticDataset ds(model_cfg.image_size, model_cfg.channels, model_cfg.n_classes,
                        cfg.seed);
    Rng rng(Rng(cfg.seed).fork(1).next_u64());
    AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, m.parameters());

    double last_loss = 0.0;
    for (long step = 0; step < cfg.steps; step++) {
        Tensor loss;
        last_loss = denoise_loss_batch(m, ns, ds, rng, cfg.batch, cfg.null_cond_prob, true,
                                       &loss);
        if (!std::isfinite(last_loss))
            throw NumericError("pretrain: loss diverged (NaN/Inf) at step " +
                               std::to_string(step));
        ad::backward(loss);
        opt.step();
    }
    m.set_requires_grad(false);
    ad::Tape::active().clear();

    if (stats) {
        stats->final_train_loss = last_loss;
        stats->steps_run = cfg.steps;
        stats->val_loss = validation_loss(m, ns, cfg);
    }
    return m;
}

double validation_loss(const DiTModel& m, const NoiseSchedule& ns, const PretrainConfig& cfg) {
    // held-out stream: seeds disjoint from the training fork
    SyntheticDataset ds(m.cfg.image_size, m.cfg.channels, m.cfg.n_classes,
                        Rng(cfg.seed).fork(2).next_u64());
    Rng rng(Rng(cfg.seed).fork(3).next_u64());
    double total = 0.0;
    for (int b = 0; b < cfg.val_batches; b++)
        total += denoise_loss_batch(m, ns, ds, rng, cfg.batch, 0.0, false, nullptr);
    return total / cfg.val_batches;
}

}  // namespace ditcache
