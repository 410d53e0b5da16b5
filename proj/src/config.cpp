#include "ditcache/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include "ditcache/errors.hpp"
#include "ditcache/util.hpp"

namespace ditcache {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long to_long(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        long x = std::stol(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config: " + key + ": expected integer, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        unsigned long long x = std::stoull(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config: " + key + ": expected unsigned integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config: " + key + ": expected number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw ConfigError("config: " + key + ": expected bool, got '" + v + "'");
}

int to_int(const std::string& key, const std::string& v) {
    return static_cast<int>(to_long(key, v));
}

}  // namespace

void parse_kv_text(const std::string& text,
                   const std::function<void(const std::string&, const std::string&)>& on_kv) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config: line " + std::to_string(lineno) +
                                  ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config: line " + std::to_string(lineno) +
                              ": empty key or value");
        on_kv(section.empty() ? key : section + "." + key, value);
    }
}

void RunConfig::set(const std::string& key, const std::string& v) {
    // model
    if (key == "model.image_size") model.image_size = to_int(key, v);
    else if (key == "model.channels") model.channels = to_int(key, v);
    else if (key == "model.patch_size") model.patch_size = to_int(key, v);
    else if (key == "model.d_model") model.d_model = to_int(key, v);
    else if (key == "model.n_heads") model.n_heads = to_int(key, v);
    else if (key == "model.depth") model.depth = to_int(key, v);
    else if (key == "model.n_classes") model.n_classes = to_int(key, v);
    // schedule
    else if (key == "schedule.t_train") t_train = to_int(key, v);
    else if (key == "schedule.beta_start") beta_start = to_double(key, v);
    else if (key == "schedule.beta_end") beta_end = to_double(key, v);
    // sampler
    else if (key == "sampler.kind") {
        if (v == "ddim") sampler.kind = SolverKind::ddim;
        else if (v == "euler") sampler.kind = SolverKind::euler;
        else throw ConfigError("config: sampler.kind must be ddim|euler, got '" + v + "'");
    }
    else if (key == "sampler.steps") sampler.steps = to_int(key, v);
    else if (key == "sampler.cfg_scale") sampler.cfg_scale = to_double(key, v);
    // pretrain
    else if (key == "pretrain.steps") pretrain.steps = to_long(key, v);
    else if (key == "pretrain.batch") pretrain.batch = to_int(key, v);
    else if (key == "pretrain.lr") pretrain.lr = to_double(key, v);
    else if (key == "pretrain.weight_decay") pretrain.weight_decay = to_double(key, v);
    else if (key == "pretrain.null_cond_prob") pretrain.null_cond_prob = to_double(key, v);
    else if (key == "pretrain.val_threshold") pretrain.val_threshold = to_double(key, v);
    else if (key == "pretrain.val_batches") pretrain.val_batches = to_int(key, v);
    // train
    else if (key == "train.iters") train.iters = to_long(key, v);
    else if (key == "train.beta") train.beta = to_double(key, v);
    else if (key == "train.interval_c") train.interval_c = to_long(key, v);
    else if (key == "train.lr") train.lr = to_double(key, v);
    else if (key == "train.adam_beta1") train.adam_beta1 = to_double(key, v);
    else if (key == "train.adam_beta2") train.adam_beta2 = to_double(key, v);
    else if (key == "train.weight_decay") train.weight_decay = to_double(key, v);
    else if (key == "train.objective") {
        if (v == "iepo") train.objective = Objective::iepo;
        else if (v == "ltc") train.objective = Objective::ltc;
        else throw ConfigError("config: train.objective must be iepo|ltc, got '" + v + "'");
    }
    else if (key == "train.paradigm") {
        if (v == "sdt") train.paradigm = Paradigm::sdt;
        else if (v == "ltc") train.paradigm = Paradigm::ltc;
        else throw ConfigError("config: train.paradigm must be sdt|ltc, got '" + v + "'");
    }
    else if (key == "train.teacher_forcing") train.teacher_forcing = to_bool(key, v);
    else if (key == "train.proxy_metric") {
        if (v == "fro") train.proxy_metric = ProxyMetric::fro;
        else if (v == "l1") train.proxy_metric = ProxyMetric::l1;
        else if (v == "kl") train.proxy_metric = ProxyMetric::kl;
        else throw ConfigError("config: train.proxy_metric must be fro|l1|kl, got '" + v + "'");
    }
    else if (key == "train.ltc_sampling") {
        if (v == "even") train.ltc_sampling = LtcSampling::even_only;
        else if (v == "any") train.ltc_sampling = LtcSampling::unconstrained;
        else throw ConfigError("config: train.ltc_sampling must be even|any, got '" + v + "'");
    }
    else if (key == "train.batch") train.batch = to_int(key, v);
    else if (key == "train.tau") train.tau = to_double(key, v);
    else if (key == "train.router_init_mean") train.router_init_mean = to_double(key, v);
    else if (key == "train.router_init_sigma") train.router_init_sigma = to_double(key, v);
    // eval
    else if (key == "eval.n_seeds") eval.n_seeds = to_int(key, v);
    else if (key == "eval.class_id") eval.class_id = to_int(key, v);
    // sample
    else if (key == "sample.n_samples") sample.n_samples = to_int(key, v);
    else if (key == "sample.class_id") sample.class_id = to_int(key, v);
    else if (key == "sample.dump_trajectory") sample.dump_trajectory = to_bool(key, v);
    else if (key == "sample.dump_lambda") sample.dump_lambda = to_bool(key, v);
    // run
    else if (key == "run.seed") seed = to_u64(key, v);
    else if (key == "run.out") out_dir = v;
    else
        throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::finalize() {
    // one global seed drives every stage
    model.param_seed = seed;
    pretrain.seed = seed;
    train.seed = seed;

    std::vector<std::string> problems;
    auto collect = [&](const std::function<void()>& check) {
        try {
            check();
        } catch (const ConfigError& e) {
            problems.push_back(e.what());
        }
    };
    collect([&] { model.validate(); });
    collect([&] { sampler.validate(); });
    collect([&] { (void)make_schedule(t_train, beta_start, beta_end); });
    collect([&] { train.validate(sampler.steps); });
    collect([&] {
        if (sampler.steps > t_train)
            throw ConfigError("sampler.steps exceeds schedule.t_train");
    });
    collect([&] {
        if (pretrain.steps < 0 || pretrain.batch < 1 || pretrain.lr <= 0.0)
            throw ConfigError("pretrain: steps >= 0, batch >= 1, lr > 0 required");
    });
    collect([&] {
        if (eval.n_seeds < 1)
            throw ConfigError("eval.n_seeds must be >= 1");
        if (eval.class_id < 0 || eval.class_id > model.n_classes)
            throw ConfigError("eval.class_id out of range");
    });
    collect([&] {
        if (sample.n_samples < 1)
            throw ConfigError("sample.n_samples must be >= 1");
        if (sample.class_id < 0 || sample.class_id > model.n_classes)
            throw ConfigError("sample.class_id out of range");
    });
    if (!problems.empty()) {
        std::string all = "config validation failed with " +
                          std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems)
            all += "\n  - " + p;
        throw ConfigError(all);
    }
}

std::string RunConfig::serialize() const {
    std::ostringstream o;
    o << "[model]\n";
    o << "image_size = " << model.image_size << "\n";
    o << "channels = " << model.channels << "\n";
    o << "patch_size = " << model.patch_size << "\n";
    o << "d_model = " << model.d_model << "\n";
    o << "n_heads = " << model.n_heads << "\n";
    o << "depth = " << model.depth << "\n";
    o << "n_classes = " << model.n_classes << "\n";
    o << "\n[schedule]\n";
    o << "t_train = " << t_train << "\n";
    o << "beta_start = " << format_double(beta_start) << "\n";
    o << "beta_end = " << format_double(beta_end) << "\n";
    o << "\n[sampler]\n";
    o << "kind = " << (sampler.kind == SolverKind::ddim ? "ddim" : "euler") << "\n";
    o << "steps = " << sampler.steps << "\n";
    o << "cfg_scale = " << format_double(sampler.cfg_scale) << "\n";
    o << "\n[pretrain]\n";
    o << "steps = " << pretrain.steps << "\n";
    o << "batch = " << pretrain.batch << "\n";
    o << "lr = " << format_double(pretrain.lr) << "\n";
    o << "weight_decay = " << format_double(pretrain.weight_decay) << "\n";
    o << "null_cond_prob = " << format_double(pretrain.null_cond_prob) << "\n";
    o << "val_threshold = " << format_double(pretrain.val_threshold) << "\n";
    o << "val_batches = " << pretrain.val_batches << "\n";
    o << "\n[train]\n";
    o << "iters = " << train.iters << "\n";
    o << "beta = " << format_double(train.beta) << "\n";
    o << "interval_c = " << train.interval_c << "\n";
    o << "lr = " << format_double(train.lr) << "\n";
    o << "adam_beta1 = " << format_double(train.adam_beta1) << "\n";
    o << "adam_beta2 = " << format_double(train.adam_beta2) << "\n";
    o << "weight_decay = " << format_double(train.weight_decay) << "\n";
    o << "objective = " << (train.objective == Objective::iepo ? "iepo" : "ltc") << "\n";
    o << "paradigm = " << (train.paradigm == Paradigm::sdt ? "sdt" : "ltc") << "\n";
    o << "teacher_forcing = " << (train.teacher_forcing ? "true" : "false") << "\n";
    o << "proxy_metric = "
      << (train.proxy_metric == ProxyMetric::fro ? "fro"
          : train.proxy_metric == ProxyMetric::l1 ? "l1" : "kl") << "\n";
    o << "ltc_sampling = "
      << (train.ltc_sampling == LtcSampling::even_only ? "even" : "any") << "\n";
    o << "batch = " << train.batch << "\n";
    o << "tau = " << format_double(train.tau) << "\n";
    o << "router_init_mean = " << format_double(train.router_init_mean) << "\n";
    o << "router_init_sigma = " << format_double(train.router_init_sigma) << "\n";
    o << "\n[eval]\n";
    o << "n_seeds = " << eval.n_seeds << "\n";
    o << "class_id = " << eval.class_id << "\n";
    o << "\n[sample]\n";
    o << "n_samples = " << sample.n_samples << "\n";
    o << "class_id = " << sample.class_id << "\n";
    o << "dump_trajectory = " << (sample.dump_trajectory ? "true" : "false") << "\n";
    o << "dump_lambda = " << (sample.dump_lambda ? "true" : "false") << "\n";
    o << "\n[run]\n";
    o << "seed = " << seed << "\n";
    o << "out = " << out_dir << "\n";
    return o.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    parse_kv_text(text, [&](const std::string& key, const std::string& value) {
        cfg.set(key, value);
    });
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    return from_text(read_file(path));
}

}  // namespace ditcache
