#include "ditcache/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>

#include "ditcache/errors.hpp"
#include "ditcache/flops.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/util.hpp"

namespace ditcache {

using ad::Tensor;

namespace {

constexpr double kComputeLogit = 8.0;  // gate ~0.99966, strictly above any tau < 1
constexpr double kCachedLogit = -8.0;  // gate ~0.000335, strictly below tau >= 0.001

Router uniform_router(int T, int N, double tau) {
    Router r;
    r.T = T;
    r.N = N;
    r.tau = tau;
    r.logits.assign(static_cast<size_t>(T) * N, kComputeLogit);
    return r;
}

double fro2(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.values().size(); i++) {
        double d = a.values()[i] - b.values()[i];
        s += d * d;
    }
    return s;
}

}  // namespace

Router make_fora(int k, int T, int N, double tau) {
    if (k < 1)
        throw ConfigError("fora schedule: k must be >= 1, got " + std::to_string(k));
    Router r = uniform_router(T, N, tau);
    for (int t = 1; t <= T; t++)
        if ((T - t) % k != 0)
            for (int i = 0; i < N; i++)
                r.logits[static_cast<size_t>(t - 1) * N + i] = kCachedLogit;
    return r;
}

Router make_alternating(int T, int N, double tau) { return make_fora(2, T, N, tau); }

Router make_random_cur(double target_cur, int T, int N, double tau, uint64_t seed) {
    if (target_cur < 0.0 || target_cur >= 1.0)
        throw ConfigError("random schedule: target CUR must be in [0,1)");
    Router r = uniform_router(T, N, tau);
    long want = std::lround(target_cur * T * N);
    long available = static_cast<long>(T - 1) * N;  // row T is never cacheable
    want = std::min(want, available);

    // uniform sample of `want` cells among rows 1..T-1
    std::vector<long> cells(available);
    for (long i = 0; i < available; i++)
        cells[i] = i;
    Rng rng(seed);
    for (long i = 0; i < want; i++) {
        long j = i + rng.uniform_int(static_cast<int>(available - i));
        std::swap(cells[i], cells[j]);
        r.logits[cells[i]] = kCachedLogit;
    }
    return r;
}

std::vector<double> trajectory_mse(const DiTModel& m, const GateMatrix& gates,
                                   const NoiseSchedule& ns, const SamplerConfig& sc,
                                   int n_seeds, uint64_t base_seed, int class_id) {
    if (n_seeds < 1)
        throw ConfigError("trajectory_mse: seed count must be >= 1");
    const int T = sc.steps;
    std::vector<double> acc(T, 0.0);
    for (int s = 0; s < n_seeds; s++) {
        Rng rng(Rng(base_seed).fork(s).next_u64());
        Tensor x_T = Tensor::from({1, m.cfg.channels, m.cfg.image_size, m.cfg.image_size},
                                  rng.normal_vec(static_cast<size_t>(m.cfg.channels) *
                                                 m.cfg.image_size * m.cfg.image_size));
        Trajectory cached = sample(m, &gates, ns, sc, x_T, class_id);
        Trajectory plain = sample(m, nullptr, ns, sc, x_T, class_id);
        for (int t = 0; t < T; t++)
            acc[t] += fro2(cached.x_at(t), plain.x_at(t));
    }
    for (auto& v : acc)
        v /= n_seeds;
    return acc;
}

EvalReport evaluate_router(const std::string& name, const DiTModel& m, const Router& router,
                           const NoiseSchedule& ns, const SamplerConfig& sc, int n_seeds,
                           uint64_t base_seed, int class_id) {
    if (router.N != m.cfg.n_blocks())
        throw ShapeError("evaluate: router N=" + std::to_string(router.N) + " vs model blocks " +
                         std::to_string(m.cfg.n_blocks()));
    EvalReport rep;
    rep.name = name;
    rep.cur = router.cur();  // single source of truth for reported CUR
    rep.speedup = theoretical_speedup(router, block_flops(m.cfg));

    GateMatrix gm = router.gates();
    auto t0 = std::chrono::steady_clock::now();
    rep.curve = trajectory_mse(m, gm, ns, sc, n_seeds, base_seed, class_id);
    auto t1 = std::chrono::steady_clock::now();
    rep.wallclock_per_sample_s =
        std::chrono::duration<double>(t1 - t0).count() / (2.0 * n_seeds);

    // final-sample stats from per-seed values
    std::vector<double> finals(n_seeds);
    for (int s = 0; s < n_seeds; s++) {
        Rng rng(Rng(base_seed).fork(s).next_u64());
        Tensor x_T = Tensor::from({1, m.cfg.channels, m.cfg.image_size, m.cfg.image_size},
                                  rng.normal_vec(static_cast<size_t>(m.cfg.channels) *
                                                 m.cfg.image_size * m.cfg.image_size));
        finals[s] = fro2(sample(m, &gm, ns, sc, x_T, class_id).x0(),
                         sample(m, nullptr, ns, sc, x_T, class_id).x0());
    }
    double mean = 0.0;
    for (double v : finals)
        mean += v;
    mean /= n_seeds;
    double var = 0.0;
    for (double v : finals)
        var += (v - mean) * (v - mean);
    rep.final_mse_mean = mean;
    rep.final_mse_sd = n_seeds > 1 ? std::sqrt(var / (n_seeds - 1)) : 0.0;
    return rep;
}

std::vector<EvalReport> rank_reports(std::vector<EvalReport> reports) {
    std::stable_sort(reports.begin(), reports.end(),
                     [](const EvalReport& a, const EvalReport& b) {
                         return a.final_mse_mean < b.final_mse_mean;
                     });
    return reports;
}

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
    std::string out = "method,cur,speedup,wallclock_per_sample_s,final_mse_mean,final_mse_sd\n";
    for (const auto& r : reports) {
        out += r.name + ',' + format_double(r.cur) + ',' + format_double(r.speedup) + ',' +
               format_double(r.wallclock_per_sample_s) + ',' + format_double(r.final_mse_mean) +
               ',' + format_double(r.final_mse_sd) + '\n';
    }
    return out;
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json j;
        j["method"] = r.name;
        j["cur"] = r.cur;
        j["speedup"] = r.speedup;
        j["wallclock_per_sample_s"] = r.wallclock_per_sample_s;
        j["final_mse_mean"] = r.final_mse_mean;
        j["final_mse_sd"] = r.final_mse_sd;
        j["curve"] = r.curve;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

std::string curve_to_csv(const std::vector<double>& curve) {
    std::string out = "t,mse\n";
    for (size_t t = 0; t < curve.size(); t++)
        out += std::to_string(t) + ',' + format_double(curve[t]) + '\n';
    return out;
}

}  // namespace ditcache
