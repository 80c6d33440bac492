#include "profl/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "profl/errors.hpp"
#include "profl/rng.hpp"

namespace profl {

Dataset gen_gaussian_mixture(std::size_t classes, std::size_t dims,
                             std::size_t samples_per_class, double spread,
                             std::uint64_t seed) {
    if (classes < 2) throw ValueError("gen_gaussian_mixture: need at least 2 classes");
    if (dims == 0 || samples_per_class == 0) {
        throw ValueError("gen_gaussian_mixture: dims and samples_per_class must be positive");
    }
    if (spread < 0.0) throw ValueError("gen_gaussian_mixture: spread must be non-negative");

    std::mt19937_64 rng = make_rng(seed, "gaussian-mixture");
    std::normal_distribution<double> unit(0.0, 1.0);

    Tensor2 centers(classes, dims);
    for (double& v : centers.data) v = unit(rng);

    Dataset ds;
    ds.class_count = classes;
    ds.features = Tensor2(classes * samples_per_class, dims);
    ds.labels.resize(classes * samples_per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t k = 0; k < samples_per_class; ++k, ++row) {
            double* out = &ds.features.data[row * dims];
            const double* center = &centers.data[c * dims];
            for (std::size_t d = 0; d < dims; ++d) out[d] = center[d] + spread * unit(rng);
            ds.labels[row] = static_cast<int>(c);
        }
    }
    return ds;
}

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4)) {
        throw IoError("load_idx: " + path + " is truncated (short header)");
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("load_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("load_idx: cannot open " + labels_path);

    const std::uint32_t img_magic = read_be32(img, images_path);
    if (img_magic != 0x00000803u) {
        char buf[11];
        std::snprintf(buf, sizeof buf, "0x%08x", img_magic);
        throw FormatError("load_idx: bad image magic " + std::string(buf) + " in " +
                          images_path);
    }
    const std::uint32_t n_images = read_be32(img, images_path);
    const std::uint32_t rows = read_be32(img, images_path);
    const std::uint32_t cols = read_be32(img, images_path);

    const std::uint32_t lab_magic = read_be32(lab, labels_path);
    if (lab_magic != 0x00000801u) {
        char buf[11];
        std::snprintf(buf, sizeof buf, "0x%08x", lab_magic);
        throw FormatError("load_idx: bad label magic " + std::string(buf) + " in " +
                          labels_path);
    }
    const std::uint32_t n_labels = read_be32(lab, labels_path);
    if (n_images != n_labels) {
        throw FormatError("load_idx: count mismatch, " + std::to_string(n_images) +
                          " images vs " + std::to_string(n_labels) + " labels");
    }
    if (n_images == 0 || rows == 0 || cols == 0) {
        throw FormatError("load_idx: empty dimensions in " + images_path);
    }

    const std::size_t dims = std::size_t(rows) * cols;
    Dataset ds;
    ds.features = Tensor2(n_images, dims);
    ds.labels.resize(n_images);

    std::vector<unsigned char> pixel_row(dims);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(pixel_row.data()),
                      static_cast<std::streamsize>(dims))) {
            throw IoError("load_idx: " + images_path + " is truncated at image " +
                          std::to_string(i));
        }
        double* out = &ds.features.data[std::size_t(i) * dims];
        for (std::size_t d = 0; d < dims; ++d) out[d] = pixel_row[d] / 255.0;
    }
    std::vector<unsigned char> raw_labels(n_labels);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()),
                  static_cast<std::streamsize>(n_labels))) {
        throw IoError("load_idx: " + labels_path + " is truncated");
    }
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        ds.labels[i] = raw_labels[i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

namespace {

// Largest-remainder allocation of `count` samples to `props` shares.
std::vector<std::size_t> apportion(const std::vector<double>& props, std::size_t count) {
    const std::size_t n = props.size();
    std::vector<std::size_t> out(n, 0);
    std::vector<std::pair<double, std::size_t>> rema(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double want = props[i] * static_cast<double>(count);
        out[i] = static_cast<std::size_t>(want);
        assigned += out[i];
        rema[i] = {want - static_cast<double>(out[i]), i};
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < count; ++k, ++assigned) {
        out[rema[k % n].second] += 1;
    }
    return out;
}

void repair_empty_shards(std::vector<std::vector<std::size_t>>& shards) {
    for (std::size_t i = 0; i < shards.size(); ++i) {
        if (!shards[i].empty()) continue;
        std::size_t largest = 0;
        for (std::size_t j = 1; j < shards.size(); ++j) {
            if (shards[j].size() > shards[largest].size()) largest = j;
        }
        if (shards[largest].size() <= 1) {
            throw ValueError("partition: not enough samples to give every shard one");
        }
        shards[i].push_back(shards[largest].back());
        shards[largest].pop_back();
        std::cerr << "partition: shard " << i << " was empty, moved one sample from shard "
                  << largest << "\n";
    }
}

}  // namespace

std::vector<std::vector<std::size_t>> partition(const Dataset& ds, std::size_t shards,
                                                const PartitionSpec& spec, std::uint64_t seed) {
    if (shards == 0) throw ValueError("partition: shard count must be positive");
    if (ds.size() < shards) {
        throw ValueError("partition: " + std::to_string(ds.size()) + " samples for " +
                         std::to_string(shards) + " shards");
    }
    std::mt19937_64 rng = make_rng(seed, "partition");
    std::vector<std::vector<std::size_t>> out(shards);

    if (spec.kind == PartitionKind::Iid) {
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i) out[i % shards].push_back(idx[i]);
    } else {
        if (spec.alpha <= 0.0) throw ValueError("partition: alpha must be positive");
        std::gamma_distribution<double> gamma(spec.alpha, 1.0);
        for (std::size_t c = 0; c < ds.class_count; ++c) {
            std::vector<std::size_t> class_idx;
            for (std::size_t i = 0; i < ds.size(); ++i) {
                if (ds.labels[i] == static_cast<int>(c)) class_idx.push_back(i);
            }
            if (class_idx.empty()) continue;
            std::shuffle(class_idx.begin(), class_idx.end(), rng);
            std::vector<double> props(shards);
            double total = 0.0;
            for (double& p : props) {
                p = gamma(rng);
                total += p;
            }
            if (total == 0.0) {
                std::fill(props.begin(), props.end(), 1.0 / static_cast<double>(shards));
            } else {
                for (double& p : props) p /= total;
            }
            const std::vector<std::size_t> counts = apportion(props, class_idx.size());
            std::size_t pos = 0;
            for (std::size_t s = 0; s < shards; ++s) {
                for (std::size_t k = 0; k < counts[s]; ++k) out[s].push_back(class_idx[pos++]);
            }
        }
    }
    repair_empty_shards(out);
    for (auto& shard : out) std::sort(shard.begin(), shard.end());
    return out;
}

}  // namespace profl
