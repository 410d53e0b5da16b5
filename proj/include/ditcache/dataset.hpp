#pragma once

#include <cstdint>
#include <utility>

#include "ditcache/rng.hpp"
#include "ditcache/tensor.hpp"

namespace ditcache {

// Deterministic class-conditional image stream: geometric patterns (disk,
// stripes, gradient, cross, ...) with per-sample position/intensity jitter,
// values in [-1, 1]. Class k beyond the base patterns reuses pattern k % 4
// with a sign flip.
class SyntheticDataset {
public:
    SyntheticDataset(int image_size, int channels, int n_classes, uint64_t seed);

    struct Sample {
        ad::Tensor image;  // (1, channels, H, W)
        int class_id;
    };

    Sample next();

    // one shared class id, B jittered renders stacked to (B, channels, H, W)
    std::pair<ad::Tensor, int> next_batch(int batch);

private:
    int image_size_;
    int channels_;
    int n_classes_;
    Rng rng_;

    std::vector<double> render(int class_id);
};

}  // namespace ditcache
