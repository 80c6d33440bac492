#include "profl/aggregate.hpp"

#include <string>

#include "profl/errors.hpp"

namespace profl {

std::vector<double> aggregate(const std::vector<std::vector<double>>& updates,
                              const std::vector<std::size_t>& shard_sizes) {
    if (updates.empty()) throw ValueError("aggregate: no updates");
    if (updates.size() != shard_sizes.size()) {
        throw ShapeError("aggregate: " + std::to_string(updates.size()) + " updates but " +
                         std::to_string(shard_sizes.size()) + " shard sizes");
    }
    const std::size_t dims = updates.front().size();
    std::size_t total = 0;
    for (std::size_t n = 0; n < updates.size(); ++n) {
        if (updates[n].size() != dims) {
            throw LayoutError("aggregate: update " + std::to_string(n) + " has " +
                              std::to_string(updates[n].size()) + " values, expected " +
                              std::to_string(dims));
        }
        total += shard_sizes[n];
    }
    if (total == 0) throw ValueError("aggregate: zero total data size");

    std::vector<double> out(dims, 0.0);
    for (std::size_t n = 0; n < updates.size(); ++n) {
        const double w = static_cast<double>(shard_sizes[n]) / static_cast<double>(total);
        for (std::size_t i = 0; i < dims; ++i) out[i] += w * updates[n][i];
    }
    return out;
}

}  // namespace profl
