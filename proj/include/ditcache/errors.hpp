#pragma once

#include <stdexcept>
#include <string>

namespace ditcache {

// Configuration / validation problems. CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor / router / model dimension mismatches.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf or other numeric failures. CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cache misuse: reading an unfilled slot, batch mismatch between write and read.
struct CacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ditcache
