#include "ditcache/router.hpp"

#include <json.hpp>

#include "ditcache/errors.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/util.hpp"

namespace ditcache {

namespace {

constexpr int kRouterFileVersion = 1;

void check_index(const Router& r, int t, int i) {
    if (t < 1 || t > r.T)
        throw ShapeError("router: timestep " + std::to_string(t) + " out of range [1," +
                         std::to_string(r.T) + "]");
    if (i < 0 || i >= r.N)
        throw ShapeError("router: block index " + std::to_string(i) + " out of range [0," +
                         std::to_string(r.N) + ")");
}

}  // namespace

std::span<const double> GateMatrix::row(int t) const {
    if (t < 1 || t > T)
        throw ShapeError("gate matrix: timestep " + std::to_string(t) + " out of range [1," +
                         std::to_string(T) + "]");
    return {g.data() + static_cast<size_t>(t - 1) * N, static_cast<size_t>(N)};
}

Router Router::init_normal(int T, int N, double tau, double mean, double sigma, uint64_t seed) {
    if (T < 1 || N < 1)
        throw ConfigError("router: T and N must be positive");
    if (tau < 0.0 || tau >= 1.0)
        throw ConfigError("router: tau must be in [0,1)");
    Router r;
    r.T = T;
    r.N = N;
    r.tau = tau;
    Rng rng(seed);
    r.logits = rng.normal_vec(static_cast<size_t>(T) * N, mean, sigma);
    return r;
}

double Router::gate(int t, int i) const {
    check_index(*this, t, i);
    if (t == T)
        return 1.0;  // pre-fill row
    return sigmoid(logits[static_cast<size_t>(t - 1) * N + i]);
}

std::vector<double> Router::gate_row(int t) const {
    check_index(*this, t, 0);
    std::vector<double> row(N);
    for (int i = 0; i < N; i++)
        row[i] = gate(t, i);
    return row;
}

GateMatrix Router::gates() const {
    GateMatrix m;
    m.T = T;
    m.N = N;
    m.tau = tau;
    m.g.resize(static_cast<size_t>(T) * N);
    for (int t = 1; t <= T; t++) {
        auto row = gate_row(t);
        std::copy(row.begin(), row.end(), m.g.begin() + static_cast<size_t>(t - 1) * N);
    }
    return m;
}

double Router::cur() const {
    long cached = 0;
    for (int t = 1; t <= T; t++)
        for (int i = 0; i < N; i++)
            if (gate(t, i) <= tau)
                cached++;
    return static_cast<double>(cached) / (static_cast<double>(N) * T);
}

GateMatrix apply_mask(const Router& router, int t) {
    check_index(router, t, 0);
    GateMatrix m = router.gates();
    // row t becomes exactly ones (the r * 1/r cancellation, done exactly)
    for (int i = 0; i < router.N; i++)
        m.g[static_cast<size_t>(t - 1) * router.N + i] = 1.0;
    return m;
}

double theoretical_speedup(const Router& router, const std::vector<double>& block_cost) {
    if (block_cost.empty())
        throw ConfigError("theoretical_speedup: empty cost vector");
    if (static_cast<int>(block_cost.size()) != router.N)
        throw ShapeError("theoretical_speedup: cost vector length " +
                         std::to_string(block_cost.size()) + " != N " + std::to_string(router.N));
    double total = 0.0;
    for (double c : block_cost) {
        if (c <= 0.0)
            throw ConfigError("theoretical_speedup: block costs must be positive");
        total += c;
    }
    double executed = 0.0;
    for (int t = 1; t <= router.T; t++)
        for (int i = 0; i < router.N; i++)
            if (router.gate(t, i) > router.tau)
                executed += block_cost[i];
    return router.T * total / executed;
}

std::string Router::to_json() const {
    nlohmann::json j;
    j["version"] = kRouterFileVersion;
    j["T"] = T;
    j["N"] = N;
    j["tau"] = tau;
    j["logits"] = logits;
    return j.dump(2) + "\n";
}

Router Router::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("router file: invalid JSON: ") + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != kRouterFileVersion)
        throw ConfigError("router file: unsupported version");
    Router r;
    r.T = j.at("T").get<int>();
    r.N = j.at("N").get<int>();
    r.tau = j.at("tau").get<double>();
    r.logits = j.at("logits").get<std::vector<double>>();
    if (r.T < 1 || r.N < 1)
        throw ConfigError("router file: T and N must be positive");
    if (static_cast<long>(r.logits.size()) != static_cast<long>(r.T) * r.N)
        throw ConfigError("router file: logits length " + std::to_string(r.logits.size()) +
                          " does not match T*N = " + std::to_string(r.T * r.N));
    if (!all_finite(r.logits))
        throw NumericError("router file: logits contain NaN/Inf");
    return r;
}

void Router::save(const std::filesystem::path& path) const {
    write_file_atomic(path, to_json());
}

Router Router::load(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

std::string Router::grid_csv() const {
    std::string out;
    for (int t = 1; t <= T; t++) {
        for (int i = 0; i < N; i++) {
            out += gate(t, i) <= tau ? '1' : '0';
            out += i + 1 < N ? ',' : '\n';
        }
    }
    return out;
}

}  // namespace ditcache
