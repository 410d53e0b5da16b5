#include "ditcache/sampler.hpp"

#include "ditcache/errors.hpp"
#include "ditcache/ops.hpp"

namespace ditcache {

using ad::Tensor;

std::vector<int> SamplerConfig::timesteps(int t_train) const {
    std::vector<int> ts(steps);
    for (int j = 0; j < steps; j++) {
        int t = steps - j;  // paper-scale step, descending
        ts[j] = static_cast<int>(static_cast<long>(t) * t_train / steps);
    }
    return ts;
}

void SamplerConfig::validate() const {
    if (steps < 1)
        throw ConfigError("sampler: steps must be positive");
    if (cfg_scale < 1.0)
        throw ConfigError("sampler: cfg_scale must be >= 1");
}

const Tensor& Trajectory::x_at(int t) const {
    const int T = static_cast<int>(steps.size());
    if (t == T)
        return x_start;
    if (t < 0 || t > T)
        throw ShapeError("trajectory: no state x_" + std::to_string(t));
    return steps[T - 1 - t].x;  // steps[j] produced x at paper step (T - j - 1)
}

namespace {

Tensor guided_eps(const Tensor& eps_cond, const Tensor& eps_null, double w) {
    const auto& c = eps_cond.values();
    const auto& n = eps_null.values();
    std::vector<double> out(c.size());
    for (size_t i = 0; i < c.size(); i++)
        out[i] = n[i] + w * (c[i] - n[i]);
    return Tensor::from(eps_cond.shape(), std::move(out));
}

std::vector<Tensor> gate_tensors(std::span<const double> row) {
    std::vector<Tensor> g;
    g.reserve(row.size());
    for (double v : row)
        g.push_back(Tensor::scalar(v));
    return g;
}

}  // namespace

Trajectory sample(const DiTModel& m, const GateMatrix* gates, const NoiseSchedule& ns,
                  const SamplerConfig& sc, const Tensor& x_T, int class_id) {
    sc.validate();
    if (gates && gates->N != m.cfg.n_blocks())
        throw ShapeError("sample: router has N=" + std::to_string(gates->N) + ", model has " +
                         std::to_string(m.cfg.n_blocks()) + " blocks");
    if (gates && gates->T != sc.steps)
        throw ShapeError("sample: router has T=" + std::to_string(gates->T) +
                         ", sampler runs " + std::to_string(sc.steps) + " steps");
    if (sc.steps > ns.t_train)
        throw ConfigError("sample: inference steps " + std::to_string(sc.steps) +
                          " exceed training steps " + std::to_string(ns.t_train));

    const bool use_cfg = sc.cfg_scale != 1.0;
    const int T = sc.steps;
    const auto ts = sc.timesteps(ns.t_train);

    // one cache per cfg branch
    Cache cache_cond(m.cfg.n_blocks());
    Cache cache_null(m.cfg.n_blocks());

    Trajectory traj;
    traj.x_start = x_T;
    Tensor x = x_T;
    for (int j = 0; j < T; j++) {
        const int t = T - j;
        const int t_hi = ts[j];
        const int t_lo = j + 1 < T ? ts[j + 1] : 0;
        Condition cond{t_hi, class_id};
        Condition null_cond{t_hi, m.cfg.null_class()};

        long computed0 = cache_cond.computed_count + cache_null.computed_count;
        long reused0 = cache_cond.reused_count + cache_null.reused_count;
        Tensor eps;
        if (gates) {
            auto row = gate_tensors(gates->row(t));
            Tensor eps_c = forward(m, x, cond, row, gates->tau, &cache_cond, CacheMode::hard);
            if (use_cfg) {
                Tensor eps_n =
                    forward(m, x, null_cond, row, gates->tau, &cache_null, CacheMode::hard);
                eps = guided_eps(eps_c, eps_n, sc.cfg_scale);
            } else {
                eps = eps_c;
            }
        } else {
            Tensor eps_c = forward_plain(m, x, cond);
            eps = use_cfg ? guided_eps(eps_c, forward_plain(m, x, null_cond), sc.cfg_scale)
                          : eps_c;
        }

        x = sc.kind == SolverKind::ddim ? ddim_step(ns, x, t_hi, t_lo, eps)
                                        : euler_step(x, t_hi, t_lo, ns.t_train, eps);

        StepRecord rec;
        rec.t = t;
        rec.t_train_hi = t_hi;
        rec.x = x;
        rec.eps = eps;
        rec.blocks_computed =
            cache_cond.computed_count + cache_null.computed_count - computed0;
        rec.blocks_reused = cache_cond.reused_count + cache_null.reused_count - reused0;
        traj.steps.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace ditcache
