#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fan/config.hpp"
#include "fan/model.hpp"

namespace fan {

// Per-parameter Adam moments, kept in parameter-store order.
struct AdamMoments {
    std::vector<double> m, v;
};

struct OptimizerState {
    int64_t step_count = 0;
    std::vector<AdamMoments> moments;  // aligned with ParamStore entries
};

// On-disk checkpoint: versioned little-endian binary with the full config
// embedded as canonical JSON plus name-keyed float64 parameter blobs and
// optional optimizer moments. save -> load -> save is byte-identical.
struct Checkpoint {
    ModelConfig config;
    int epoch = 0;
    struct Entry {
        std::string name;
        bool backbone = false;
        Shape shape;
        std::vector<double> data;
    };
    std::vector<Entry> params;
    std::optional<OptimizerState> optimizer;
};

Checkpoint snapshot(const Model& model, int epoch, const OptimizerState* opt = nullptr);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Builds a model from the embedded config and installs the stored parameter
// values; any name or shape mismatch is a compatibility error.
Model restore_model(const Checkpoint& ckpt);

}  // namespace fan
