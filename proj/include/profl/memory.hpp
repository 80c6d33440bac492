#pragma once

#include <cstdint>
#include <vector>

#include "profl/blocks.hpp"

namespace profl {

// Peak training footprint of a sub-model on one device, in 32-bit scalar
// slots. Parameters and gradients count once each; trainable layers store
// their input and output activations for the backward pass; frozen layers
// are streamed, so only the widest one's in+out buffer is held at a time.
struct MemoryEstimate {
    std::uint64_t param_scalars = 0;
    std::uint64_t grad_scalars = 0;
    std::uint64_t stored_activation_scalars = 0;
    std::uint64_t transient_scalars = 0;

    std::uint64_t total_scalars() const {
        return param_scalars + grad_scalars + stored_activation_scalars + transient_scalars;
    }
    std::uint64_t bytes() const { return 4 * total_scalars(); }
};

// With cache_frozen the device keeps the frozen prefix's activations on disk
// between rounds: the prefix parameters leave memory and its streaming
// buffer disappears. Frozen layers behind the active block still count.
MemoryEstimate estimate(const SubModel& sub, std::size_t batch, bool cache_frozen);

struct DeviceBudget {
    int id = 0;
    std::uint64_t capacity_bytes = 0;
};

// Devices whose budget covers the estimate, ids in ascending order.
std::vector<int> eligible(const std::vector<DeviceBudget>& pool, const SubModel& sub,
                          std::size_t batch, bool cache_frozen);

// Footprint of a distillation task: frozen prefix and teacher streamed, the
// student trained. Layout mirrors estimate() but the teacher and student
// branch off the same prefix output rather than chaining.
MemoryEstimate estimate_distill(const std::vector<DenseLayer>& prefix,
                                const std::vector<DenseLayer>& teacher,
                                const DenseLayer& student, std::size_t batch,
                                bool cache_frozen);

}  // namespace profl
