#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "ditcache/dit.hpp"
#include "ditcache/pretrain.hpp"
#include "ditcache/sampler.hpp"
#include "ditcache/trainer.hpp"

namespace ditcache {

// Aggregate run configuration. Flat key = value text with [section] headers;
// unknown keys are errors, validation reports every violated constraint at
// once, and re-serializing a loaded config yields the effective values with
// all defaults explicit.
struct RunConfig {
    DiTConfig model;

    int t_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    SamplerConfig sampler;
    PretrainConfig pretrain;
    TrainConfig train;

    struct EvalOptions {
        int n_seeds = 5;
        int class_id = 0;
    } eval;

    struct SampleOptions {
        int n_samples = 4;
        int class_id = 0;
        bool dump_trajectory = false;
        bool dump_lambda = false;
    } sample;

    uint64_t seed = 0;
    std::string out_dir = "runs/out";

    // sets one "section.key" (throws ConfigError on unknown key / bad value)
    void set(const std::string& key, const std::string& value);

    // seeds derived fields from the global seed, then checks every constraint;
    // throws ConfigError listing all violations
    void finalize();

    std::string serialize() const;  // effective config text

    static RunConfig from_text(const std::string& text);
    static RunConfig from_file(const std::filesystem::path& path);

    NoiseSchedule schedule() const { return make_schedule(t_train, beta_start, beta_end); }
};

// parses "[section]" + "key = value" lines; '#' and ';' start comments
void parse_kv_text(const std::string& text,
                   const std::function<void(const std::string&, const std::string&)>& on_kv);

}  // namespace ditcache
