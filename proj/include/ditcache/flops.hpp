#pragma once

#include <vector>

#include "ditcache/dit.hpp"

namespace ditcache {

// Per-block forward FLOPs (mul + add counted separately, GEMMs as 2*m*n*k).
// Block i follows the model's indexing: even = attention, odd = FFN.
std::vector<double> block_flops(const DiTConfig& cfg);

double total_flops_per_forward(const DiTConfig& cfg);  // blocks only

}  // namespace ditcache
