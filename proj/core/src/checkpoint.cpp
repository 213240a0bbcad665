// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: versioned header, config snapshot, RNG state, then
// length-prefixed named float32 parameter blobs (store segments + optimizer
// moments).
#include <cstring>
#include <fstream>

#include "qdr/errors.hpp"
#include "qdr/trainer.hpp"

namespace qdr {

namespace {

constexpr char kMagic[4] = {'Q', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ofstream& f, std::uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), 8);
}
void write_string(std::ofstream& f, const std::string& s) {
    write_u32(f, static_cast<std::uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_blob(std::ofstream& f, const std::string& name, const float* data, std::size_t count) {
    write_string(f, name);
    write_u64(f, count);
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

std::uint32_t read_u32(std::ifstream& f, const char* field) {
    std::uint32_t v = 0;
    if (!f.read(reinterpret_cast<char*>(&v), 4))
        throw FormatError(std::string("checkpoint: truncated ") + field);
    return v;
}
std::uint64_t read_u64(std::ifstream& f, const char* field) {
    std::uint64_t v = 0;
    if (!f.read(reinterpret_cast<char*>(&v), 8))
        throw FormatError(std::string("checkpoint: truncated ") + field);
    return v;
}
std::string read_string(std::ifstream& f, const char* field) {
    const std::uint32_t len = read_u32(f, field);
    std::string s(len, '\0');
    if (!f.read(s.data(), len)) throw FormatError(std::string("checkpoint: truncated ") + field);
    return s;
}

} // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("save_checkpoint: cannot open " + path);

    f.write(kMagic, 4);
    write_u32(f, kVersion);
    write_string(f, train_config_to_json(state.config));
    write_u64(f, state.step);
    write_u64(f, state.optim.t());
    write_string(f, state.rng.serialize());

    const auto& segments = state.store->segments();
    write_u32(f, static_cast<std::uint32_t>(segments.size() + 2));
    const std::vector<float>& values = state.store->values_vec();
    for (const auto& seg : segments)
        write_blob(f, seg.name, values.data() + seg.offset, seg.count);
    auto& optim = const_cast<AdamOptimizer&>(state.optim);
    write_blob(f, "optim.m", optim.m().data(), optim.m().size());
    write_blob(f, "optim.v", optim.v().data(), optim.v().size());
    if (!f) throw FormatError("save_checkpoint: short write to " + path);
}

std::unique_ptr<TrainState> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("load_checkpoint: cannot open " + path);

    char magic[4];
    if (!f.read(magic, 4)) throw FormatError("checkpoint: truncated magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
    const std::uint32_t version = read_u32(f, "version");
    if (version != kVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                          " (expected " + std::to_string(kVersion) + ")");

    const std::string config_json = read_string(f, "config");
    auto state = init_train_state(train_config_from_json(config_json));
    state->step = read_u64(f, "step");
    const std::uint64_t adam_t = read_u64(f, "adam_t");
    state->rng = Rng::deserialize(read_string(f, "rng_state"));
    state->optim.set_t(adam_t);

    const std::uint32_t n_blobs = read_u32(f, "blob count");
    std::vector<float>& values = state->store->values_vec();
    for (std::uint32_t b = 0; b < n_blobs; ++b) {
        const std::string name = read_string(f, "blob name");
        const std::uint64_t count = read_u64(f, "blob length");
        float* dst = nullptr;
        if (name == "optim.m") {
            if (count != state->optim.m().size())
                throw FormatError("checkpoint: size mismatch for optim.m");
            dst = state->optim.m().data();
        } else if (name == "optim.v") {
            if (count != state->optim.v().size())
                throw FormatError("checkpoint: size mismatch for optim.v");
            dst = state->optim.v().data();
        } else {
            const nn::ParamStore::Segment* seg = state->store->find_segment(name);
            if (!seg) throw FormatError("checkpoint: unknown blob '" + name + "'");
            if (seg->count != count)
                throw FormatError("checkpoint: size mismatch for blob '" + name + "'");
            dst = values.data() + seg->offset;
        }
        if (!f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * 4)))
            throw FormatError("checkpoint: truncated blob '" + name + "'");
    }
    return state;
}

} // namespace qdr
