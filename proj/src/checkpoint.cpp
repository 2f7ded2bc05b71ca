#include "fan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fan/error.hpp"

namespace fan {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated checkpoint: " + path);
    return v;
}

void get_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw DataError("truncated checkpoint: " + path);
}

}  // namespace

Checkpoint snapshot(const Model& model, int epoch, const OptimizerState* opt) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.epoch = epoch;
    for (const auto& e : model.params().entries()) {
        ckpt.params.push_back({e.name, e.backbone, e.tensor.shape(), e.tensor.vec()});
    }
    if (opt) ckpt.optimizer = *opt;
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);

    put_bytes(out, kMagic, sizeof(kMagic));
    put<uint32_t>(out, kVersion);
    put<uint64_t>(out, ckpt.config.model_hash());
    const std::string cfg = ckpt.config.to_json_string();
    put<uint32_t>(out, static_cast<uint32_t>(cfg.size()));
    put_bytes(out, cfg.data(), cfg.size());
    put<uint32_t>(out, static_cast<uint32_t>(ckpt.epoch));
    put<uint32_t>(out, static_cast<uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) {
        put<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
        put_bytes(out, p.name.data(), p.name.size());
        put<uint8_t>(out, p.backbone ? 1 : 0);
        put<uint32_t>(out, static_cast<uint32_t>(p.shape.size()));
        for (int d : p.shape) put<int32_t>(out, d);
        put_bytes(out, p.data.data(), p.data.size() * sizeof(double));
    }
    put<uint8_t>(out, ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
        put<int64_t>(out, ckpt.optimizer->step_count);
        if (ckpt.optimizer->moments.size() != ckpt.params.size()) {
            throw ContractError("optimizer state does not align with parameters");
        }
        for (size_t i = 0; i < ckpt.params.size(); ++i) {
            const auto& mom = ckpt.optimizer->moments[i];
            put_bytes(out, mom.m.data(), mom.m.size() * sizeof(double));
            put_bytes(out, mom.v.data(), mom.v.size() * sizeof(double));
        }
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[8];
    get_bytes(in, magic, sizeof(magic), path);
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    const auto version = get<uint32_t>(in, path);
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " +
                        path);
    }
    const auto stored_hash = get<uint64_t>(in, path);
    const auto cfg_len = get<uint32_t>(in, path);
    std::string cfg_text(cfg_len, '\0');
    get_bytes(in, cfg_text.data(), cfg_len, path);

    Checkpoint ckpt;
    ckpt.config = ModelConfig::from_json_string(cfg_text);
    if (ckpt.config.model_hash() != stored_hash) {
        throw CompatibilityError("checkpoint config hash mismatch (corrupt or tampered): " +
                                 path);
    }
    ckpt.epoch = static_cast<int>(get<uint32_t>(in, path));
    const auto n_params = get<uint32_t>(in, path);
    ckpt.params.resize(n_params);
    for (auto& p : ckpt.params) {
        const auto name_len = get<uint32_t>(in, path);
        p.name.resize(name_len);
        get_bytes(in, p.name.data(), name_len, path);
        p.backbone = get<uint8_t>(in, path) != 0;
        const auto ndim = get<uint32_t>(in, path);
        p.shape.resize(ndim);
        int64_t numel = 1;
        for (auto& d : p.shape) {
            d = get<int32_t>(in, path);
            numel *= d;
        }
        if (numel <= 0) throw DataError("checkpoint parameter with invalid shape: " + p.name);
        p.data.resize(static_cast<size_t>(numel));
        get_bytes(in, p.data.data(), p.data.size() * sizeof(double), path);
    }
    if (get<uint8_t>(in, path)) {
        OptimizerState opt;
        opt.step_count = get<int64_t>(in, path);
        opt.moments.resize(n_params);
        for (size_t i = 0; i < n_params; ++i) {
            const size_t n = ckpt.params[i].data.size();
            opt.moments[i].m.resize(n);
            opt.moments[i].v.resize(n);
            get_bytes(in, opt.moments[i].m.data(), n * sizeof(double), path);
            get_bytes(in, opt.moments[i].v.data(), n * sizeof(double), path);
        }
        ckpt.optimizer = std::move(opt);
    }
    return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
    Model model(ckpt.config, ckpt.config.seed);
    auto& entries = model.params().entries();
    if (entries.size() != ckpt.params.size()) {
        throw CompatibilityError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                                 " parameters but the model defines " +
                                 std::to_string(entries.size()));
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& stored = ckpt.params[i];
        auto& live = entries[i];
        if (stored.name != live.name) {
            throw CompatibilityError("checkpoint parameter '" + stored.name +
                                     "' does not match model parameter '" + live.name + "'");
        }
        if (stored.shape != live.tensor.shape()) {
            throw CompatibilityError("checkpoint parameter '" + stored.name + "' has shape " +
                                     shape_str(stored.shape) + " but the model expects " +
                                     shape_str(live.tensor.shape()));
        }
        live.tensor.vec() = stored.data;
    }
    return model;
}

}  // namespace fan
