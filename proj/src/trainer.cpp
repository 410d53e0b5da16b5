#include "ditcache/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "ditcache/dataset.hpp"
#include "ditcache/errors.hpp"
#include "ditcache/ops.hpp"
#include "ditcache/optimizer.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/util.hpp"

namespace ditcache {

using ad::Tensor;

void TrainConfig::validate(int T) const {
    std::string problems;
    auto bad = [&](const std::string& msg) {
        if (!problems.empty())
            problems += "; ";
        problems += msg;
    };
    if (T < 2)
        bad("sampler steps T must be at least 2, got " + std::to_string(T));
    if (iters < T)
        bad("iters " + std::to_string(iters) + " below one outer loop (T = " +
            std::to_string(T) + ")");
    if (interval_c <= 0 || (T >= 2 && interval_c % T != 0))
        bad("interval C " + std::to_string(interval_c) + " must be a positive multiple of T = " +
            std::to_string(T));
    if (beta < 0.0)
        bad("beta must be >= 0");
    if (lr <= 0.0)
        bad("learning rate must be > 0");
    if (batch < 1)
        bad("batch must be >= 1");
    if (tau < 0.0 || tau >= 1.0)
        bad("tau must be in [0,1)");
    if (!problems.empty())
        throw ConfigError("train config: " + problems);
}

double proxy_metric_value(const Tensor& a, const Tensor& b, ProxyMetric kind) {
    if (a.shape() != b.shape())
        throw ShapeError("proxy metric: shapes differ: " + ad::shape_str(a.shape()) + " vs " +
                         ad::shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    switch (kind) {
        case ProxyMetric::fro: {
            double s = 0.0;
            for (size_t i = 0; i < av.size(); i++) {
                double d = av[i] - bv[i];
                s += d * d;
            }
            return s;
        }
        case ProxyMetric::l1: {
            double s = 0.0;
            for (size_t i = 0; i < av.size(); i++)
                s += std::fabs(av[i] - bv[i]);
            return s;
        }
        case ProxyMetric::kl: {
            // signed images: shift each to nonnegative by its own min, then
            // normalize to unit mass; 1e-12 floor inside the log
            auto normalize = [](const std::vector<double>& v) {
                double mn = *std::min_element(v.begin(), v.end());
                std::vector<double> p(v.size());
                double sum = 0.0;
                for (size_t i = 0; i < v.size(); i++) {
                    p[i] = v[i] - mn;
                    sum += p[i];
                }
                if (sum <= 0.0)
                    throw NumericError("proxy metric: KL input normalizes to zero mass");
                for (auto& x : p)
                    x /= sum;
                return p;
            };
            auto p = normalize(av);
            auto q = normalize(bv);
            double s = 0.0;
            for (size_t i = 0; i < p.size(); i++)
                if (p[i] > 0.0)
                    s += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
            return s;
        }
    }
    throw ConfigError("proxy metric: unknown kind");
}

namespace {

bool row_fully_above_tau(const Router& r, int t) {
    for (int i = 0; i < r.N; i++)
        if (r.gate(t, i) <= r.tau)
            return false;
    return true;
}

Tensor gaussian_like(Rng& rng, const DiTConfig& cfg, int batch) {
    return Tensor::from({batch, cfg.channels, cfg.image_size, cfg.image_size},
                        rng.normal_vec(static_cast<size_t>(batch) * cfg.channels *
                                       cfg.image_size * cfg.image_size));
}

Tensor solver_step(const NoiseSchedule& ns, const SamplerConfig& sc, const Tensor& x, int t_hi,
                   int t_lo, const Tensor& eps) {
    return sc.kind == SolverKind::ddim ? ddim_step(ns, x, t_hi, t_lo, eps)
                                       : euler_step(x, t_hi, t_lo, ns.t_train, eps);
}

// One trainable step at row t: soft-cached student vs plain teacher on the
// same input, loss lambda*(|eps' - eps|_F^2) + beta*sum(gates), gradients into
// row t only. Returns the student prediction (detached) for the trajectory.
struct StepOutcome {
    Tensor eps_student;
    Tensor eps_teacher;
    double l_mse = 0.0;
    double reg = 0.0;
    double loss = 0.0;
};

StepOutcome train_row_step(const DiTModel& teacher, Router& router, RouterAdamW& opt,
                           const Tensor& x_t, const Condition& cond, int t, double lambda,
                           const TrainConfig& cfg, Cache& cache) {
    const int N = router.N;
    std::vector<Tensor> leaves;
    std::vector<Tensor> gates;
    leaves.reserve(N);
    gates.reserve(N);
    for (int i = 0; i < N; i++) {
        leaves.push_back(Tensor::param({1}, {router.logits[(t - 1) * N + i]}));
        gates.push_back(ad::sigmoid(leaves.back()));
    }

    Tensor eps_student =
        forward(teacher, x_t, cond, gates, cfg.tau, &cache, CacheMode::soft);
    Tensor eps_teacher = forward_plain(teacher, x_t, cond);

    Tensor l_mse = ad::frobenius_sq(eps_student, eps_teacher);
    Tensor reg = gates[0];
    for (int i = 1; i < N; i++)
        reg = ad::add(reg, gates[i]);
    Tensor loss = ad::add(ad::scale(l_mse, lambda), ad::scale(reg, cfg.beta));

    StepOutcome out;
    out.l_mse = l_mse.item();
    out.reg = reg.item();
    out.loss = loss.item();
    if (!std::isfinite(out.loss))
        throw NumericError("train: loss diverged at row t=" + std::to_string(t) +
                           " (l_mse=" + std::to_string(out.l_mse) +
                           ", lambda=" + std::to_string(lambda) +
                           ", reg=" + std::to_string(out.reg) + ")");
    ad::backward(loss);

    std::vector<double> grads(N);
    for (int i = 0; i < N; i++)
        grads[i] = leaves[i].grad()[0];
    opt.update_row(router, t, grads);

    out.eps_student = eps_student.detach();
    out.eps_teacher = eps_teacher.detach();
    return out;
}

std::vector<Tensor> ones_row(int n) {
    return std::vector<Tensor>(n, Tensor::scalar(1.0));
}

}  // namespace

ProxyVector gen_proxy(const DiTModel& m, const NoiseSchedule& ns, const SamplerConfig& sc,
                      const Tensor& x_T, int class_id, const Router& router,
                      ProxyMetric metric) {
    const int T = router.T;
    ProxyVector pv;
    pv.lambda.assign(T + 1, 0.0);

    GateMatrix gm = router.gates();
    Tensor x0 = sample(m, &gm, ns, sc, x_T, class_id).x0();
    for (int t = T - 1; t >= 1; t--) {
        if (row_fully_above_tau(router, t))
            continue;  // mask changes nothing; the two generations coincide
        GateMatrix masked = apply_mask(router, t);
        Tensor x0_t = sample(m, &masked, ns, sc, x_T, class_id).x0();
        pv.lambda[t] = proxy_metric_value(x0, x0_t, metric);
    }
    return pv;
}

TrainLog::TrainLog(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_)
        throw ConfigError("train log: cannot open " + path);
    out_ << "iter,t,l_mse,lambda,reg,cur\n";
}

void TrainLog::add(long iter, int t, double l_mse, double lambda, double reg, double cur) {
    out_ << iter << ',' << t << ',' << format_double(l_mse) << ',' << format_double(lambda)
         << ',' << format_double(reg) << ',' << format_double(cur) << '\n';
}

Router sdt_train(const DiTModel& teacher, const NoiseSchedule& ns, const SamplerConfig& sc,
                 const TrainConfig& cfg, TrainLog* log, TrainStats* stats) {
    sc.validate();
    cfg.validate(sc.steps);
    const int T = sc.steps;
    const int N = teacher.cfg.n_blocks();
    const auto ts = sc.timesteps(ns.t_train);

    Router router = Router::init_normal(T, N, cfg.tau, cfg.router_init_mean,
                                        cfg.router_init_sigma, Rng(cfg.seed).fork(0).next_u64());
    RouterAdamW opt({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay}, T, N);
    Rng noise_rng(Rng(cfg.seed).fork(1).next_u64());

    ProxyVector proxy;
    proxy.lambda.assign(T + 1, 1.0);

    const long outer = cfg.iters / T;
    long global_step = 0;
    for (long it = 0; it < outer; it++) {
        const int class_id = static_cast<int>(it % teacher.cfg.n_classes);
        Tensor x_T = gaussian_like(noise_rng, teacher.cfg, cfg.batch);

        if (cfg.objective == Objective::iepo && it % (cfg.interval_c / T) == 0) {
            proxy = gen_proxy(teacher, ns, sc, x_T, class_id, router, cfg.proxy_metric);
            proxy.refreshed_at = it * T;
            if (stats)
                stats->proxy_refreshes++;
        }

        // pre-fill at t = T: every block computed, no loss
        Cache cache(N);
        auto prefill_gates = ones_row(N);
        Tensor eps_T = forward(teacher, x_T, {ts[0], class_id}, prefill_gates, cfg.tau, &cache,
                               CacheMode::hard);
        Tensor x = solver_step(ns, sc, x_T, ts[0], T > 1 ? ts[1] : 0, eps_T);
        global_step++;

        for (int t = T - 1; t >= 1; t--) {
            const int j = T - t;
            const int t_hi = ts[j];
            const int t_lo = j + 1 < T ? ts[j + 1] : 0;
            const double lambda = cfg.objective == Objective::iepo ? proxy.at(t) : 1.0;

            StepOutcome so = train_row_step(teacher, router, opt, x, {t_hi, class_id}, t,
                                            lambda, cfg, cache);
            if (stats)
                stats->row_updates++;
            if (log)
                log->add(global_step, t, so.l_mse, lambda, so.reg, router.cur());

            const Tensor& eps_next = cfg.teacher_forcing ? so.eps_teacher : so.eps_student;
            x = solver_step(ns, sc, x, t_hi, t_lo, eps_next);
            global_step++;
        }
    }
    return router;
}

Router ltc_train(const DiTModel& teacher, const NoiseSchedule& ns, const SamplerConfig& sc,
                 const TrainConfig& cfg, TrainLog* log, TrainStats* stats) {
    sc.validate();
    cfg.validate(sc.steps);
    const int T = sc.steps;
    const int N = teacher.cfg.n_blocks();
    const auto ts = sc.timesteps(ns.t_train);

    Router router = Router::init_normal(T, N, cfg.tau, cfg.router_init_mean,
                                        cfg.router_init_sigma, Rng(cfg.seed).fork(0).next_u64());
    RouterAdamW opt({cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay}, T, N);
    Rng rng(Rng(cfg.seed).fork(1).next_u64());
    SyntheticDataset ds(teacher.cfg.image_size, teacher.cfg.channels, teacher.cfg.n_classes,
                        Rng(cfg.seed).fork(2).next_u64());

    ProxyVector proxy;
    proxy.lambda.assign(T + 1, 1.0);

    for (long it = 0; it < cfg.iters; it++) {
        // sampled pre-fill timestep; row t-1 is the one trained
        int t;
        if (cfg.ltc_sampling == LtcSampling::even_only) {
            if (T < 2)
                throw ConfigError("ltc: even-only sampling needs T >= 2");
            t = 2 * (1 + rng.uniform_int(T / 2));
        } else {
            t = 2 + rng.uniform_int(T - 1);
        }

        auto [x0_img, class_id] = ds.next_batch(cfg.batch);
        const int j_hi = T - t;
        const int t_hi = ts[j_hi];
        const int t_lo = j_hi + 1 < T ? ts[j_hi + 1] : 0;

        if (cfg.objective == Objective::iepo && it % cfg.interval_c == 0) {
            Tensor x_T = gaussian_like(rng, teacher.cfg, cfg.batch);
            proxy = gen_proxy(teacher, ns, sc, x_T, class_id, router, cfg.proxy_metric);
            proxy.refreshed_at = it;
            if (stats)
                stats->proxy_refreshes++;
        }

        // forward-noise the dataset image to x_t
        Tensor eps_noise = gaussian_like(rng, teacher.cfg, cfg.batch);
        const double ab = ns.alpha_bar(t_hi);
        std::vector<double> xtv(x0_img.values().size());
        for (size_t i = 0; i < xtv.size(); i++)
            xtv[i] = std::sqrt(ab) * x0_img.values()[i] +
                     std::sqrt(1.0 - ab) * eps_noise.values()[i];
        Tensor x_t = Tensor::from(x0_img.shape(), std::move(xtv));

        // pre-fill an empty cache at t, then advance to x_{t-1}
        Cache cache(N);
        auto prefill_gates = ones_row(N);
        Tensor eps_t = forward(teacher, x_t, {t_hi, class_id}, prefill_gates, cfg.tau, &cache,
                               CacheMode::hard);
        Tensor x_prev = solver_step(ns, sc, x_t, t_hi, t_lo, eps_t);

        const int row = t - 1;
        const int j_row = T - row;
        const int row_t_hi = ts[j_row];
        const double lambda = cfg.objective == Objective::iepo ? proxy.at(row) : 1.0;
        StepOutcome so = train_row_step(teacher, router, opt, x_prev, {row_t_hi, class_id},
                                        row, lambda, cfg, cache);
        if (stats)
            stats->row_updates++;
        if (log)
            log->add(it, row, so.l_mse, lambda, so.reg, router.cur());
    }
    return router;
}

Router train_router(const DiTModel& teacher, const NoiseSchedule& ns, const SamplerConfig& sc,
                    const TrainConfig& cfg, TrainLog* log, TrainStats* stats) {
    return cfg.paradigm == Paradigm::sdt ? sdt_train(teacher, ns, sc, cfg, log, stats)
                                         : ltc_train(teacher, ns, sc, cfg, log, stats);
}

}  // namespace ditcache
