#include "profl/memory.hpp"

#include <algorithm>

#include "profl/errors.hpp"

namespace profl {

MemoryEstimate estimate(const SubModel& sub, std::size_t batch, bool cache_frozen) {
    if (batch == 0) throw ValueError("estimate: batch must be positive");
    if (sub.layers.empty()) throw ValueError("estimate: empty sub-model");

    const std::size_t prefix = sub.prefix_len();
    MemoryEstimate e;
    for (std::size_t i = 0; i < sub.layers.size(); ++i) {
        const DenseLayer& l = sub.layers[i];
        const std::uint64_t params = l.param_count();
        const std::uint64_t io = static_cast<std::uint64_t>(batch) * (l.fan_in() + l.fan_out());
        const bool in_prefix = i < prefix;
        if (!(cache_frozen && in_prefix)) e.param_scalars += params;
        if (sub.trainable[i]) {
            e.grad_scalars += params;
            e.stored_activation_scalars += io;
        } else if (!(cache_frozen && in_prefix)) {
            e.transient_scalars = std::max(e.transient_scalars, io);
        }
    }
    return e;
}

std::vector<int> eligible(const std::vector<DeviceBudget>& pool, const SubModel& sub,
                          std::size_t batch, bool cache_frozen) {
    const std::uint64_t need = estimate(sub, batch, cache_frozen).bytes();
    std::vector<int> ids;
    for (const DeviceBudget& d : pool) {
        if (d.capacity_bytes >= need) ids.push_back(d.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

MemoryEstimate estimate_distill(const std::vector<DenseLayer>& prefix,
                                const std::vector<DenseLayer>& teacher,
                                const DenseLayer& student, std::size_t batch,
                                bool cache_frozen) {
    if (batch == 0) throw ValueError("estimate_distill: batch must be positive");
    if (teacher.empty()) throw ValueError("estimate_distill: empty teacher block");
    MemoryEstimate e;
    if (!cache_frozen) {
        for (const DenseLayer& l : prefix) {
            e.param_scalars += l.param_count();
            const std::uint64_t io =
                static_cast<std::uint64_t>(batch) * (l.fan_in() + l.fan_out());
            e.transient_scalars = std::max(e.transient_scalars, io);
        }
    }
    for (const DenseLayer& l : teacher) {
        e.param_scalars += l.param_count();
        const std::uint64_t io = static_cast<std::uint64_t>(batch) * (l.fan_in() + l.fan_out());
        e.transient_scalars = std::max(e.transient_scalars, io);
    }
    e.param_scalars += student.param_count();
    e.grad_scalars += student.param_count();
    e.stored_activation_scalars +=
        static_cast<std::uint64_t>(batch) * (student.fan_in() + student.fan_out());
    return e;
}

}  // namespace profl
