#include "ditcache/commands.hpp"

#include <cmath>
#include <functional>
#include <iostream>

#include "ditcache/checkpoint.hpp"
#include "ditcache/errors.hpp"
#include "ditcache/evaluate.hpp"
#include "ditcache/flops.hpp"
#include "ditcache/manifest.hpp"
#include "ditcache/ops.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/trainer.hpp"
#include "ditcache/util.hpp"

namespace ditcache {

using ad::Tensor;

namespace {

int run_command(const RunConfig& cfg, const std::string& name,
                const std::function<void(RunManifest&)>& body) {
    RunManifest manifest(cfg.out_dir, name, cfg.seed, cfg.serialize());
    try {
        body(manifest);
        manifest.finish_ok();
        return kExitOk;
    } catch (const ConfigError& e) {
        manifest.finish_failed(e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        manifest.finish_failed(e.what());
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericError;
    }
}

Tensor seeded_noise(const DiTConfig& c, uint64_t seed, int batch = 1) {
    Rng rng(seed);
    return Tensor::from({batch, c.channels, c.image_size, c.image_size},
                        rng.normal_vec(static_cast<size_t>(batch) * c.channels * c.image_size *
                                       c.image_size));
}

std::string image_csv(const Tensor& x0) {
    // first batch element, first channel as rows x cols
    const auto& s = x0.shape();
    const int h = s[2], w = s[3];
    std::string out;
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++) {
            out += format_double(x0.values()[static_cast<size_t>(y) * w + x]);
            out += x + 1 < w ? ',' : '\n';
        }
    return out;
}

DiTModel load_teacher(RunManifest& manifest, const std::filesystem::path& path) {
    manifest.add_input(path);
    return load_model(path);
}

Router load_router_checked(RunManifest& manifest, const std::filesystem::path& path,
                           const DiTModel& m, const RunConfig& cfg) {
    manifest.add_input(path);
    Router r = Router::load(path);
    if (r.N != m.cfg.n_blocks())
        throw ConfigError("router " + path.string() + " has N=" + std::to_string(r.N) +
                          ", model expects " + std::to_string(m.cfg.n_blocks()));
    if (r.T != cfg.sampler.steps)
        throw ConfigError("router " + path.string() + " has T=" + std::to_string(r.T) +
                          ", sampler runs " + std::to_string(cfg.sampler.steps) + " steps");
    return r;
}

}  // namespace

int cmd_pretrain(const RunConfig& cfg) {
    return run_command(cfg, "pretrain", [&](RunManifest& manifest) {
        NoiseSchedule ns = cfg.schedule();
        PretrainStats stats;
        DiTModel m = pretrain_teacher(cfg.model, ns, cfg.pretrain, &stats);
        if (stats.val_loss > cfg.pretrain.val_threshold)
            throw NumericError("pretrain: held-out loss " + std::to_string(stats.val_loss) +
                               " above threshold " + std::to_string(cfg.pretrain.val_threshold));
        manifest.write_output("teacher.ckpt", model_to_bytes(m));
        std::string report = "steps," + std::to_string(stats.steps_run) + "\n" +
                             "final_train_loss," + format_double(stats.final_train_loss) + "\n" +
                             "val_loss," + format_double(stats.val_loss) + "\n";
        manifest.write_output("pretrain_stats.csv", report);
        std::cout << "pretrain: val_loss " << stats.val_loss << " (threshold "
                  << cfg.pretrain.val_threshold << ")\n";
    });
}

int cmd_train_router(const RunConfig& cfg, const std::filesystem::path& teacher) {
    return run_command(cfg, "train-router", [&](RunManifest& manifest) {
        DiTModel m = load_teacher(manifest, teacher);
        NoiseSchedule ns = cfg.schedule();
        auto log_path = manifest.path_of("train_log.csv");
        Router router;
        {
            TrainLog log(log_path.string());
            TrainStats stats;
            router = train_router(m, ns, cfg.sampler, cfg.train, &log, &stats);
            std::cout << "train-router: " << stats.row_updates << " row updates, "
                      << stats.proxy_refreshes << " proxy refreshes\n";
        }
        // re-register the streamed log so the manifest carries its content id
        manifest.write_output("train_log.csv", read_file(log_path));
        manifest.write_output("router.json", router.to_json());
        manifest.write_output("router_grid.csv", router.grid_csv());
        std::cout << "train-router: CUR " << router.cur() << ", speedup "
                  << theoretical_speedup(router, block_flops(m.cfg)) << "\n";
    });
}

int cmd_sample(const RunConfig& cfg, const std::filesystem::path& teacher,
               const std::optional<std::filesystem::path>& router_path) {
    return run_command(cfg, "sample", [&](RunManifest& manifest) {
        DiTModel m = load_teacher(manifest, teacher);
        NoiseSchedule ns = cfg.schedule();
        std::optional<Router> router;
        std::optional<GateMatrix> gates;
        if (router_path) {
            router = load_router_checked(manifest, *router_path, m, cfg);
            gates = router->gates();
        }
        for (int s = 0; s < cfg.sample.n_samples; s++) {
            uint64_t sample_seed = Rng(cfg.seed).fork(s).next_u64();
            Tensor x_T = seeded_noise(m.cfg, sample_seed);
            Trajectory traj = sample(m, gates ? &*gates : nullptr, ns, cfg.sampler, x_T,
                                     cfg.sample.class_id);
            manifest.write_output("x0_seed" + std::to_string(s) + ".csv",
                                  image_csv(traj.x0()));

            if (cfg.sample.dump_trajectory || cfg.sample.dump_lambda) {
                std::optional<Trajectory> plain;
                if (cfg.sample.dump_trajectory)
                    plain = sample(m, nullptr, ns, cfg.sampler, x_T, cfg.sample.class_id);
                std::optional<ProxyVector> pv;
                if (cfg.sample.dump_lambda && router)
                    pv = gen_proxy(m, ns, cfg.sampler, x_T, cfg.sample.class_id, *router,
                                   cfg.train.proxy_metric);
                std::string csv = "t";
                if (plain)
                    csv += ",mse_vs_teacher";
                if (pv)
                    csv += ",lambda";
                csv += "\n";
                for (int t = cfg.sampler.steps - 1; t >= 0; t--) {
                    csv += std::to_string(t);
                    if (plain) {
                        double d = 0.0;
                        const auto& a = traj.x_at(t).values();
                        const auto& b = plain->x_at(t).values();
                        for (size_t i = 0; i < a.size(); i++)
                            d += (a[i] - b[i]) * (a[i] - b[i]);
                        csv += "," + format_double(d);
                    }
                    if (pv)
                        csv += "," + format_double(t >= 1 ? pv->at(t) : 0.0);
                    csv += "\n";
                }
                manifest.write_output("trajectory_seed" + std::to_string(s) + ".csv", csv);
            }
        }
    });
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& teacher,
             const std::vector<std::filesystem::path>& routers) {
    return run_command(cfg, "eval", [&](RunManifest& manifest) {
        if (routers.empty())
            throw ConfigError("eval: need at least one --router");
        DiTModel m = load_teacher(manifest, teacher);
        NoiseSchedule ns = cfg.schedule();
        std::vector<EvalReport> reports;
        for (const auto& path : routers) {
            Router r = load_router_checked(manifest, path, m, cfg);
            std::string name = path.stem().string();
            EvalReport rep = evaluate_router(name, m, r, ns, cfg.sampler, cfg.eval.n_seeds,
                                             cfg.seed, cfg.eval.class_id);
            manifest.write_output("curve_" + name + ".csv", curve_to_csv(rep.curve));
            manifest.write_output("grid_" + name + ".csv", r.grid_csv());
            reports.push_back(std::move(rep));
        }
        auto ranked = rank_reports(std::move(reports));
        manifest.write_output("report.csv", reports_to_csv(ranked));
        manifest.write_output("report.json", reports_to_json(ranked));
        std::cout << reports_to_csv(ranked);
    });
}

int cmd_proxy_trace(const RunConfig& cfg, const std::filesystem::path& teacher,
                    const std::filesystem::path& router_path) {
    return run_command(cfg, "proxy-trace", [&](RunManifest& manifest) {
        DiTModel m = load_teacher(manifest, teacher);
        NoiseSchedule ns = cfg.schedule();
        Router router = load_router_checked(manifest, router_path, m, cfg);

        Tensor x_T = seeded_noise(m.cfg, Rng(cfg.seed).fork(0).next_u64());
        ProxyVector pv = gen_proxy(m, ns, cfg.sampler, x_T, cfg.eval.class_id, router,
                                   cfg.train.proxy_metric);

        // per-step output error along the hard-mode cached trajectory
        const int T = cfg.sampler.steps;
        const auto ts = cfg.sampler.timesteps(ns.t_train);
        GateMatrix gm = router.gates();
        Trajectory cached = sample(m, &gm, ns, cfg.sampler, x_T, cfg.eval.class_id);
        auto teacher_eps = [&](const Tensor& x, int t_hi) {
            Tensor c = forward_plain(m, x, {t_hi, cfg.eval.class_id});
            if (cfg.sampler.cfg_scale == 1.0)
                return c;
            Tensor n = forward_plain(m, x, {t_hi, m.cfg.null_class()});
            std::vector<double> out(c.values().size());
            for (size_t i = 0; i < out.size(); i++)
                out[i] = n.values()[i] + cfg.sampler.cfg_scale * (c.values()[i] - n.values()[i]);
            return Tensor::from(c.shape(), std::move(out));
        };

        std::string csv = "t,l_mse,lambda\n";
        Tensor x = x_T;
        for (int j = 0; j < T; j++) {
            const int t = T - j;
            Tensor eps_teacher = teacher_eps(x, ts[j]);
            const auto& eps_student = cached.steps[j].eps;
            double l_mse = 0.0;
            for (size_t i = 0; i < eps_teacher.values().size(); i++) {
                double d = eps_student.values()[i] - eps_teacher.values()[i];
                l_mse += d * d;
            }
            csv += std::to_string(t) + ',' + format_double(l_mse) + ',' +
                   format_double(pv.at(t)) + '\n';
            x = cached.steps[j].x;
        }
        manifest.write_output("proxy_trace.csv", csv);
        std::cout << csv;
    });
}

}  // namespace ditcache
