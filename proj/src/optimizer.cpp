#include "ditcache/optimizer.hpp"

#include <cmath>

#include "ditcache/errors.hpp"

namespace ditcache {

AdamW::AdamW(AdamWConfig cfg, std::vector<ad::Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t p = 0; p < params_.size(); p++) {
        m_[p].assign(params_[p].size(), 0.0);
        v_[p].assign(params_[p].size(), 0.0);
    }
}

void AdamW::step() {
    t_++;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t p = 0; p < params_.size(); p++) {
        auto& vals = params_[p].mutable_values();
        auto g = params_[p].grad();
        for (size_t i = 0; i < vals.size(); i++) {
            if (!std::isfinite(g[i]))
                throw NumericError("optimizer: non-finite gradient");
            m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
            v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mh = m_[p][i] / bc1;
            double vh = v_[p][i] / bc2;
            vals[i] -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * vals[i]);
        }
        params_[p].zero_grad();
    }
}

RouterAdamW::RouterAdamW(AdamWConfig cfg, int T, int N) : cfg_(cfg), T_(T), N_(N) {
    const size_t n = static_cast<size_t>(T) * N;
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
    steps_.assign(n, 0);
}

void RouterAdamW::update_row(Router& router, int t, const std::vector<double>& grads) {
    if (router.T != T_ || router.N != N_)
        throw ShapeError("optimizer: router dims changed under the optimizer");
    if (t < 1 || t >= T_)
        throw ShapeError("optimizer: row " + std::to_string(t) + " not trainable (valid: 1.." +
                         std::to_string(T_ - 1) + ")");
    if (static_cast<int>(grads.size()) != N_)
        throw ShapeError("optimizer: grad row length mismatch");
    for (int i = 0; i < N_; i++) {
        const size_t k = static_cast<size_t>(t - 1) * N_ + i;
        const double g = grads[i];
        if (!std::isfinite(g))
            throw NumericError("optimizer: non-finite gradient at row " + std::to_string(t) +
                               ", block " + std::to_string(i));
        steps_[k]++;
        m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
        v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g * g;
        const double mh = m_[k] / (1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_[k])));
        const double vh = v_[k] / (1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_[k])));
        router.logits[k] -=
            cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * router.logits[k]);
    }
}

}  // namespace ditcache
