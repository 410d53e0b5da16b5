#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "ditcache/commands.hpp"
#include "ditcache/errors.hpp"

using namespace ditcache;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> beta;
    std::optional<long> interval_c;
    std::optional<double> tau;
    std::optional<std::string> objective;
    std::optional<std::string> paradigm;
    std::optional<bool> teacher_forcing;
    std::optional<std::string> proxy_metric;
    std::optional<std::string> ltc_sampling;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "run config file (key = value with [sections])");
    cmd->add_option("--seed", a.seed, "global seed (overrides run.seed)");
    cmd->add_option("--out", a.out, "run output directory (overrides run.out)");
    cmd->add_option("--beta", a.beta, "regularization coefficient (overrides train.beta)");
    cmd->add_option("--interval-c", a.interval_c, "proxy refresh interval C");
    cmd->add_option("--tau", a.tau, "caching threshold");
    cmd->add_option("--objective", a.objective, "iepo|ltc")
        ->check(CLI::IsMember({"iepo", "ltc"}));
    cmd->add_option("--paradigm", a.paradigm, "sdt|ltc")->check(CLI::IsMember({"sdt", "ltc"}));
    cmd->add_option("--teacher-forcing", a.teacher_forcing, "true|false");
    cmd->add_option("--proxy-metric", a.proxy_metric, "fro|l1|kl")
        ->check(CLI::IsMember({"fro", "l1", "kl"}));
    cmd->add_option("--ltc-sampling", a.ltc_sampling, "even|any")
        ->check(CLI::IsMember({"even", "any"}));
}

// config file first, CLI flags override, then validate everything at once
RunConfig build_config(const CommonArgs& a) {
    RunConfig cfg;
    if (!a.config_path.empty())
        cfg = RunConfig::from_file(a.config_path);
    if (a.seed)
        cfg.seed = *a.seed;
    if (a.out)
        cfg.out_dir = *a.out;
    if (a.beta)
        cfg.train.beta = *a.beta;
    if (a.interval_c)
        cfg.train.interval_c = *a.interval_c;
    if (a.tau)
        cfg.train.tau = *a.tau;
    if (a.objective)
        cfg.set("train.objective", *a.objective);
    if (a.paradigm)
        cfg.set("train.paradigm", *a.paradigm);
    if (a.teacher_forcing)
        cfg.set("train.teacher_forcing", *a.teacher_forcing ? "true" : "false");
    if (a.proxy_metric)
        cfg.set("train.proxy_metric", *a.proxy_metric);
    if (a.ltc_sampling)
        cfg.set("train.ltc_sampling", *a.ltc_sampling);
    cfg.finalize();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy diffusion-transformer feature caching: teacher pretraining, router "
                 "training, sampling and evaluation"};
    app.require_subcommand(1);

    CommonArgs pretrain_args;
    auto* pretrain = app.add_subcommand("pretrain", "train the teacher on synthetic data");
    add_common(pretrain, pretrain_args);

    CommonArgs train_args;
    std::string train_teacher;
    auto* train = app.add_subcommand("train-router", "learn a caching router for a teacher");
    add_common(train, train_args);
    train->add_option("--teacher", train_teacher, "teacher checkpoint")->required();

    CommonArgs sample_args;
    std::string sample_teacher, sample_router;
    auto* smp = app.add_subcommand("sample", "generate images, optionally with caching");
    add_common(smp, sample_args);
    smp->add_option("--teacher", sample_teacher, "teacher checkpoint")->required();
    smp->add_option("--router", sample_router, "router file (omit for plain sampling)");

    CommonArgs eval_args;
    std::string eval_teacher;
    std::vector<std::string> eval_routers;
    auto* evl = app.add_subcommand("eval", "compare routers against plain sampling");
    add_common(evl, eval_args);
    evl->add_option("--teacher", eval_teacher, "teacher checkpoint")->required();
    evl->add_option("--router", eval_routers, "router file (repeatable)")
        ->required()
        ->take_all();

    CommonArgs trace_args;
    std::string trace_teacher, trace_router;
    auto* trace = app.add_subcommand("proxy-trace", "per-step lambda and output error");
    add_common(trace, trace_args);
    trace->add_option("--teacher", trace_teacher, "teacher checkpoint")->required();
    trace->add_option("--router", trace_router, "router file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pretrain->parsed())
            return cmd_pretrain(build_config(pretrain_args));
        if (train->parsed())
            return cmd_train_router(build_config(train_args), train_teacher);
        if (smp->parsed()) {
            std::optional<std::filesystem::path> router;
            if (!sample_router.empty())
                router = sample_router;
            return cmd_sample(build_config(sample_args), sample_teacher, router);
        }
        if (evl->parsed()) {
            std::vector<std::filesystem::path> routers(eval_routers.begin(),
                                                       eval_routers.end());
            return cmd_eval(build_config(eval_args), eval_teacher, routers);
        }
        if (trace->parsed())
            return cmd_proxy_trace(build_config(trace_args), trace_teacher, trace_router);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericError;
    }
    return kExitOk;
}
