#pragma once

#include <optional>
#include <vector>

#include "ditcache/tensor.hpp"

namespace ditcache {

// N slots holding the most recently computed output of each cacheable block.
// Stored tensors are detached; a slot read requires the slot to be filled.
// Single-owner: one cache per sampling/training run (and per cfg branch).
class Cache {
public:
    Cache() = default;
    explicit Cache(int n_slots) : slots_(n_slots) {}

    int n_slots() const { return static_cast<int>(slots_.size()); }
    bool filled(int i) const;
    bool fully_filled() const;

    void store(int i, ad::Tensor value);      // value must be detached by caller
    const ad::Tensor& load(int i) const;      // errors on empty slot

    void reset();

    // Instrumentation: block computations vs cache reads observed through the
    // cached forward pass.
    long computed_count = 0;
    long reused_count = 0;

private:
    std::vector<std::optional<ad::Tensor>> slots_;
};

}  // namespace ditcache
