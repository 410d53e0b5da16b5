#include "ditcache/cache.hpp"

#include "ditcache/errors.hpp"

namespace ditcache {

bool Cache::filled(int i) const {
    return i >= 0 && i < n_slots() && slots_[i].has_value();
}

bool Cache::fully_filled() const {
    for (const auto& s : slots_)
        if (!s.has_value())
            return false;
    return !slots_.empty();
}

void Cache::store(int i, ad::Tensor value) {
    if (i < 0 || i >= n_slots())
        throw CacheError("cache: slot " + std::to_string(i) + " out of range [0," +
                         std::to_string(n_slots()) + ")");
    if (slots_[i].has_value() && slots_[i]->shape() != value.shape())
        throw CacheError("cache: slot " + std::to_string(i) +
                         " shape changed between writes (batch mismatch?)");
    slots_[i] = std::move(value);
}

const ad::Tensor& Cache::load(int i) const {
    if (i < 0 || i >= n_slots())
        throw CacheError("cache: slot " + std::to_string(i) + " out of range [0," +
                         std::to_string(n_slots()) + ")");
    if (!slots_[i].has_value())
        throw CacheError("cache: slot " + std::to_string(i) + " read while empty (pre-fill missing)");
    return *slots_[i];
}

void Cache::reset() {
    for (auto& s : slots_)
        s.reset();
    computed_count = 0;
    reused_count = 0;
}

}  // namespace ditcache
