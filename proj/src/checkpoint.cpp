#include "profl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "profl/errors.hpp"

namespace profl {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("checkpoint '" + path + "' is truncated");
    }
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError("checkpoint '" + path + "' is truncated");
    }
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double get_f64(std::ifstream& in, const std::string& path) {
    std::uint64_t bits = get_u64(in, path);
    double v = 0.0;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const GlobalModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");

    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, model.layout.input_dim);
    put_u64(out, model.layout.class_count);
    put_u64(out, model.layout.hidden.size());
    for (std::size_t w : model.layout.hidden) put_u64(out, w);
    put_u64(out, model.plan.block_count);
    for (BlockState s : model.states) out.put(static_cast<char>(s));
    for (const DenseLayer& l : model.hidden) out.put(static_cast<char>(l.act));
    out.put(static_cast<char>(model.head.act));

    ParamVector pv = pack(model.full_layers());
    put_u64(out, pv.values.size());
    for (double v : pv.values) put_f64(out, v);
    if (!out) throw IoError("short write to checkpoint '" + path + "'");
}

GlobalModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("'" + path + "' is not a checkpoint file");
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion) {
        throw FormatError("checkpoint '" + path + "' has unsupported version " +
                          std::to_string(version));
    }

    GlobalModel model;
    model.layout.input_dim = get_u64(in, path);
    model.layout.class_count = get_u64(in, path);
    if (model.layout.input_dim == 0 || model.layout.input_dim > 1u << 20 ||
        model.layout.class_count == 0 || model.layout.class_count > 1u << 20) {
        throw FormatError("checkpoint '" + path + "' has implausible dimensions");
    }
    const std::uint64_t depth = get_u64(in, path);
    if (depth == 0 || depth > 1u << 20) {
        throw FormatError("checkpoint '" + path + "' has an implausible layer count");
    }
    model.layout.hidden.resize(depth);
    for (std::uint64_t i = 0; i < depth; ++i) {
        model.layout.hidden[i] = get_u64(in, path);
        if (model.layout.hidden[i] == 0 || model.layout.hidden[i] > 1u << 20) {
            throw FormatError("checkpoint '" + path + "' has an implausible layer width");
        }
    }
    const std::uint64_t blocks = get_u64(in, path);
    try {
        model.plan = BlockPlan::partition(depth, blocks);
    } catch (const ValueError& e) {
        throw FormatError("checkpoint '" + path + "': " + e.what());
    }

    auto read_state = [&]() {
        int c = in.get();
        if (c == EOF) throw FormatError("checkpoint '" + path + "' is truncated");
        if (c > static_cast<int>(BlockState::WellTrained)) {
            throw FormatError("checkpoint '" + path + "' has a bad block state");
        }
        return static_cast<BlockState>(c);
    };
    model.states.resize(blocks);
    for (std::uint64_t i = 0; i < blocks; ++i) model.states[i] = read_state();

    auto read_act = [&]() {
        int c = in.get();
        if (c == EOF) throw FormatError("checkpoint '" + path + "' is truncated");
        if (c > static_cast<int>(Activation::SoftmaxXent)) {
            throw FormatError("checkpoint '" + path + "' has a bad activation");
        }
        return static_cast<Activation>(c);
    };

    std::size_t fan_in = model.layout.input_dim;
    for (std::uint64_t i = 0; i < depth; ++i) {
        model.hidden.emplace_back(fan_in, model.layout.hidden[i], Activation::ReLU);
        fan_in = model.layout.hidden[i];
    }
    model.head = DenseLayer(fan_in, model.layout.class_count, Activation::SoftmaxXent);
    for (DenseLayer& l : model.hidden) l.act = read_act();
    model.head.act = read_act();
    model.snapshots.resize(blocks);
    model.basics.resize(blocks);

    std::vector<DenseLayer> layers = model.full_layers();
    ParamVector pv = pack(layers);
    const std::uint64_t count = get_u64(in, path);
    if (count != pv.values.size()) {
        throw FormatError("checkpoint '" + path + "' parameter count does not match its layout");
    }
    for (std::uint64_t i = 0; i < count; ++i) pv.values[i] = get_f64(in, path);
    unpack(pv, layers);
    for (std::uint64_t i = 0; i < depth; ++i) model.hidden[i] = layers[i];
    model.head = layers[depth];
    return model;
}

}  // namespace profl
