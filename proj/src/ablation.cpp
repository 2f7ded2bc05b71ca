#include "fan/ablation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fan/error.hpp"
#include "fan/synthetic_data.hpp"

namespace fan {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<AblationRow> ablation_matrix(const ModelConfig& base) {
    std::vector<AblationRow> rows;
    auto push = [&](const std::string& name, auto mutate) {
        ModelConfig c = base;
        mutate(c);
        rows.push_back({name, c});
    };

    // interaction-principle sweep
    push("Simple Baseline", [](ModelConfig& c) {
        c.use_activation = false;
        c.vpm_mode = "none";
        c.use_l2v = false;
        c.sentence_only = false;
    });
    push("+ Language-to-Vision Decoder", [](ModelConfig& c) {
        c.use_activation = false;
        c.vpm_mode = "none";
        c.use_l2v = true;
    });
    push("+ Single-Scale Vision Projection Module", [](ModelConfig& c) {
        c.use_activation = false;
        c.vpm_mode = "single";
        c.use_l2v = true;
    });
    push("+ Multi-Scale Vision Projection Module", [](ModelConfig& c) {
        c.use_activation = false;
        c.vpm_mode = "multi";
        c.use_l2v = true;
    });
    push("+ Activation Module", [](ModelConfig& c) {
        c.use_activation = true;
        c.vpm_mode = "multi";
        c.use_l2v = true;
    });
    push("Only utilize sentence embedding", [](ModelConfig& c) { c.sentence_only = true; });

    // structure of the L2V decoder
    push("1 Decoder Layer", [](ModelConfig& c) { c.l2v_layers = 1; });
    push("3 Decoder Layers", [](ModelConfig& c) { c.l2v_layers = 3; });
    push("6 Decoder Layers", [](ModelConfig& c) { c.l2v_layers = 6; });
    push("+ Encoder Layers", [](ModelConfig& c) {
        c.l2v_layers = 6;
        c.l2v_encoder_layers = 1;
    });

    // structure of the VPM
    push("Only Cross-Attention Fusion", [](ModelConfig& c) { c.vpm_self_attention = false; });

    return rows;
}

namespace {

std::string slug(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

}  // namespace

std::vector<AblationResult> run_ablations(const ModelConfig& base, const std::string& data_dir,
                                          const std::string& out_dir, int steps, bool verbose) {
    if (steps < 1) throw ConfigError("ablation step budget must be positive");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir);

    const int n_train = static_cast<int>(read_split(data_dir, "train").size());
    std::vector<AblationResult> results;
    std::ofstream table((fs::path(out_dir) / "ablation_results.jsonl").string());
    if (!table) throw IoError("cannot write ablation results in " + out_dir);

    for (const auto& row : ablation_matrix(base)) {
        ModelConfig cfg = row.config;
        cfg.max_steps = steps;
        // enough epochs to reach the step budget
        const int steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
        cfg.epochs = std::max(1, (steps + steps_per_epoch - 1) / steps_per_epoch);
        if (cfg.lr_milestone >= cfg.epochs) cfg.lr_milestone = std::max(0, cfg.epochs - 1);

        if (verbose) std::fprintf(stderr, "[ablate] %s\n", row.name.c_str());
        TrainResult tr =
            train(cfg, data_dir, (fs::path(out_dir) / slug(row.name)).string(), verbose);
        EvalReport val = evaluate_checkpoint(tr.last_checkpoint, data_dir, "val");

        AblationResult res{row.name, tr.final_train_loss, val, tr.steps_run};
        results.push_back(res);
        table << json{{"name", row.name},
                      {"train_loss", res.final_train_loss},
                      {"val_mean_iou", val.mean_iou},
                      {"val_precision_at_50", val.precision_at_50},
                      {"val_precision_at_90", val.precision_at_90},
                      {"steps", res.steps_run}}
                     .dump()
              << "\n";
        table.flush();
    }
    return results;
}

}  // namespace fan
