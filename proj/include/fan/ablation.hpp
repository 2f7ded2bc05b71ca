#pragma once

#include <string>
#include <vector>

#include "fan/config.hpp"
#include "fan/trainer.hpp"

namespace fan {

struct AblationRow {
    std::string name;
    ModelConfig config;
};

// The interaction-principle sweep (baseline through the full model and the
// sentence-only variant) followed by the structural variants of the L2V
// decoder and the VPM.
std::vector<AblationRow> ablation_matrix(const ModelConfig& base);

struct AblationResult {
    std::string name;
    double final_train_loss = 0.0;
    EvalReport val;
    int steps_run = 0;
};

// Trains each row for a fixed short step budget and evaluates on the val
// split; one metrics row per configuration, written as JSONL under out_dir.
std::vector<AblationResult> run_ablations(const ModelConfig& base, const std::string& data_dir,
                                          const std::string& out_dir, int steps = 50,
                                          bool verbose = false);

}  // namespace fan
