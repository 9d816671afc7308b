#pragma once

// Binary checkpoint: little-endian header (magic "SBCK", version, config
// digest, record count) followed by named records
//   u32 name length | name bytes | u8 dtype | u32 rank | u64 dims[rank] | raw data
// dtype 1 = float64, 2 = uint8 (text), 3 = uint64.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace spatialbeam {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'S', 'B', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ModelCheckpoint {
    ExperimentConfig config;
    ModelSpec spec;
    ModelParams params;
    OptimizerState optimizer;
    std::uint64_t epoch = 0;
    std::uint64_t rng_state = 0;
    double previous_val_loss = 0.0;
    std::uint64_t plateau_bad = 0;
    std::uint64_t non_decreasing = 0;

    std::uint64_t digest() const { return model_digest(config); }
};

namespace detail {

enum : std::uint8_t { kF64 = 1, kU8 = 2, kU64 = 3 };

class ByteWriter {
public:
    template <class T>
    void pod(const T& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf.insert(buf.end(), p, p + sizeof(T));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf.insert(buf.end(), c, c + n);
    }
    void record(const std::string& name, std::uint8_t dtype, const std::vector<std::uint64_t>& dims, const void* data,
                std::size_t nbytes) {
        pod(static_cast<std::uint32_t>(name.size()));
        bytes(name.data(), name.size());
        pod(dtype);
        pod(static_cast<std::uint32_t>(dims.size()));
        for (auto d : dims) pod(d);
        bytes(data, nbytes);
        ++records;
    }
    void tensor(const Tensor& t) {
        std::vector<std::uint64_t> d(t.dims.begin(), t.dims.end());
        record(t.name, kF64, d, t.data.data(), t.data.size() * sizeof(double));
    }
    void f64(const std::string& name, double v) { record(name, kF64, {}, &v, sizeof v); }
    void u64(const std::string& name, std::uint64_t v) { record(name, kU64, {}, &v, sizeof v); }
    void text(const std::string& name, const std::string& s) { record(name, kU8, {s.size()}, s.data(), s.size()); }

    std::vector<char> buf;
    std::uint32_t records = 0;
};

struct RawRecord {
    std::uint8_t dtype = 0;
    std::vector<std::uint64_t> dims;
    std::vector<char> data;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const ModelCheckpoint& ck) {
    detail::ByteWriter body;
    body.text("meta.config", config_to_json(ck.config).dump());
    body.text("meta.pooling", to_string(ck.spec.pooling));
    body.u64("meta.epoch", ck.epoch);
    body.u64("meta.rng_state", ck.rng_state);
    body.u64("meta.adam_step", ck.optimizer.step);
    body.f64("meta.lr", ck.optimizer.lr);
    body.f64("meta.previous_val_loss", ck.previous_val_loss);
    body.u64("meta.plateau_bad", ck.plateau_bad);
    body.u64("meta.non_decreasing", ck.non_decreasing);
    for (const auto* t : ck.params.tensors()) body.tensor(*t);
    for (const auto& t : ck.optimizer.m) body.tensor(t);
    for (const auto& t : ck.optimizer.v) body.tensor(t);

    detail::ByteWriter out;
    out.bytes(kCheckpointMagic, 4);
    out.pod(kCheckpointVersion);
    out.pod(ck.digest());
    out.pod(body.records);
    out.buf.insert(out.buf.end(), body.buf.begin(), body.buf.end());
    return out.buf;
}

inline ModelCheckpoint decode_checkpoint(const std::vector<char>& bytes) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw Error("checkpoint truncated");
    };
    auto read = [&](void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes.data() + pos, n);
        pos += n;
    };
    char magic[4];
    read(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw Error("not a checkpoint file (bad magic)");
    std::uint32_t version = 0, count = 0;
    std::uint64_t digest = 0;
    read(&version, 4);
    if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
    read(&digest, 8);
    read(&count, 4);
    std::map<std::string, detail::RawRecord> recs;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t nlen = 0, rank = 0;
        read(&nlen, 4);
        std::string name(nlen, '\0');
        read(name.data(), nlen);
        detail::RawRecord r;
        read(&r.dtype, 1);
        read(&rank, 4);
        r.dims.resize(rank);
        std::uint64_t elems = 1;
        for (auto& d : r.dims) {
            read(&d, 8);
            elems *= d;
        }
        const std::size_t width = r.dtype == detail::kU8 ? 1 : 8;
        r.data.resize(elems * width);
        read(r.data.data(), r.data.size());
        recs.emplace(std::move(name), std::move(r));
    }
    auto get = [&](const std::string& name) -> const detail::RawRecord& {
        auto it = recs.find(name);
        if (it == recs.end()) throw Error("checkpoint missing record '" + name + "'");
        return it->second;
    };
    auto text = [&](const std::string& name) {
        const auto& r = get(name);
        return std::string(r.data.begin(), r.data.end());
    };
    auto u64 = [&](const std::string& name) {
        std::uint64_t v;
        std::memcpy(&v, get(name).data.data(), 8);
        return v;
    };
    auto f64 = [&](const std::string& name) {
        double v;
        std::memcpy(&v, get(name).data.data(), 8);
        return v;
    };
    auto fill = [&](Tensor& t) {
        const auto& r = get(t.name);
        if (r.dtype != detail::kF64 || std::vector<std::size_t>(r.dims.begin(), r.dims.end()) != t.dims)
            throw Error("checkpoint tensor '" + t.name + "' has shape " +
                        dims_to_string(std::vector<std::size_t>(r.dims.begin(), r.dims.end())) + ", expected " +
                        dims_to_string(t.dims));
        std::memcpy(t.data.data(), r.data.data(), r.data.size());
    };

    ModelCheckpoint ck;
    ck.config = config_from_json(nlohmann::json::parse(text("meta.config")));
    ck.spec = ModelSpec::from_config(ck.config, parse_pooling(text("meta.pooling")));
    if (ck.digest() != digest) throw Error("checkpoint config digest does not match its embedded config");
    ck.params = ModelParams(ck.spec);
    for (auto* t : ck.params.tensors()) fill(*t);
    ck.optimizer = OptimizerState::for_params(std::as_const(ck.params).tensors(), f64("meta.lr"));
    for (auto& t : ck.optimizer.m) fill(t);
    for (auto& t : ck.optimizer.v) fill(t);
    ck.optimizer.step = u64("meta.adam_step");
    ck.epoch = u64("meta.epoch");
    ck.rng_state = u64("meta.rng_state");
    ck.previous_val_loss = f64("meta.previous_val_loss");
    ck.plateau_bad = u64("meta.plateau_bad");
    ck.non_decreasing = u64("meta.non_decreasing");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write checkpoint " + path.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("failed writing checkpoint " + path.string());
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

/// Loads a checkpoint and checks it was produced under a compatible model configuration.
inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path, const ExperimentConfig& expected) {
    auto ck = load_checkpoint(path);
    ExperimentConfig probe = expected;
    probe.training.pooling = ck.spec.pooling;
    if (model_digest(probe) != ck.digest())
        throw Error("checkpoint " + path.string() + " was trained with a different model configuration");
    return ck;
}

}  // namespace spatialbeam
