#pragma once

#include <cstddef>
#include <vector>

namespace profl {

// Data-size-weighted mean of client updates: weights are |D_n| over the
// participants' total, so they form a convex combination. A single client
// passes through bitwise.
std::vector<double> aggregate(const std::vector<std::vector<double>>& updates,
                              const std::vector<std::size_t>& shard_sizes);

}  // namespace profl
