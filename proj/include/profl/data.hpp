#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "profl/tensor.hpp"

namespace profl {

struct Dataset {
    Tensor2 features;         // samples x dims
    std::vector<int> labels;  // class indices
    std::size_t class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dims() const { return features.cols; }
};

// Synthetic classification data: one isotropic Gaussian per class around a
// randomly placed center, `spread` being the per-coordinate noise scale.
// Samples come out grouped by class; callers shuffle via partitioning.
Dataset gen_gaussian_mixture(std::size_t classes, std::size_t dims,
                             std::size_t samples_per_class, double spread,
                             std::uint64_t seed);

// Reads an IDX image/label file pair (the MNIST container format):
// big-endian headers, magic 0x00000803 for images and 0x00000801 for labels,
// pixel bytes scaled to [0, 1], images flattened row-major.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

enum class PartitionKind : std::uint8_t { Iid = 0, Dirichlet = 1 };

struct PartitionSpec {
    PartitionKind kind = PartitionKind::Iid;
    double alpha = 1.0;  // Dirichlet concentration, smaller = more skew
};

// Splits sample indices into `shards` disjoint, exhaustive, non-empty parts.
// IID deals a shuffle round-robin; Dirichlet draws per-class shard
// proportions. Shards that come out empty are topped up with one sample
// stolen from the largest shard (reported on stderr).
std::vector<std::vector<std::size_t>> partition(const Dataset& ds, std::size_t shards,
                                                const PartitionSpec& spec, std::uint64_t seed);

}  // namespace profl
