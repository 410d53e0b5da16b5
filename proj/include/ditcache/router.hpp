#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ditcache {

// Materialized per-(timestep, block) gate values. Row t of a masked matrix is
// exactly 1.0; values otherwise live in (0,1]. tau travels with the gates so
// samplers can branch without a Router reference.
struct GateMatrix {
    int T = 0;
    int N = 0;
    double tau = 0.0;
    std::vector<double> g;  // row-major, row index 0 corresponds to t=1

    std::span<const double> row(int t) const;  // t in [1..T]
};

// Learned caching policy: unconstrained logits, gate = sigmoid(logit).
// Row T reads as all-ones regardless of its logits (cache pre-fill).
struct Router {
    int T = 0;
    int N = 0;
    double tau = 0.1;
    std::vector<double> logits;  // row-major T x N

    static Router init_normal(int T, int N, double tau, double mean, double sigma,
                              uint64_t seed);

    // gate value; t in [1..T], i in [0..N)
    double gate(int t, int i) const;
    std::vector<double> gate_row(int t) const;

    GateMatrix gates() const;

    // Fraction of (t, i) cells served from cache: gate <= tau, over N*T cells.
    // Row T contributes none (its gates are 1).
    double cur() const;

    std::string to_json() const;
    static Router from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static Router load(const std::filesystem::path& path);

    // CSV grid of 0/1 cache indicators (1 = served from cache), T rows x N cols,
    // row k holding timestep t = k+1.
    std::string grid_csv() const;
};

// Effective gates with caching disabled at step t: row t forced to exactly 1,
// all other rows equal the unmasked gates. Pure function; the router is not
// mutated.
GateMatrix apply_mask(const Router& router, int t);

// (T * sum(cost)) / (sum of cost over computed cells). Cached cells cost zero.
double theoretical_speedup(const Router& router, const std::vector<double>& block_cost);

}  // namespace ditcache
