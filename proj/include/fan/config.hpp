#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fan {

// Every dimension, layer count, ablation toggle, and training hyperparameter
// in one flat structure, mirrored one-to-one by the JSON config files.
struct ModelConfig {
    // dims and depths
    int image_size = 64;
    int text_dim = 64;    // C_t
    int fusion_dim = 64;  // D, shared across all cross-modal modules
    int text_layers = 2;
    int text_heads = 4;
    int text_ffn_hidden = 128;
    int attn_heads = 4;  // activation module and VPM
    int vpm_ffn_hidden = 128;
    int l2v_layers = 2;
    int l2v_heads = 4;
    int l2v_ffn_hidden = 128;
    int l2v_encoder_layers = 0;
    std::vector<int> vision_channels = {32, 64, 128, 256};  // levels 2..5
    int max_len = 17;
    int vocab_size = 0;  // filled from the dataset vocabulary
    double mask_threshold = 0.35;

    // ablation toggles
    bool use_activation = true;
    std::string vpm_mode = "multi";  // none | single | multi
    bool vpm_self_attention = true;
    bool use_l2v = true;
    bool sentence_only = false;

    // training
    int epochs = 30;
    int batch_size = 8;
    int max_steps = 0;  // 0 = no cap
    double base_lr = 1e-3;
    double lr_decay = 0.1;
    int lr_milestone = 20;
    double backbone_lr_scale = 0.1;
    double bce_weight = 1.0;
    double dice_weight = 1.0;
    double grad_clip_norm = 5.0;
    uint64_t seed = 0;

    void validate() const;

    // Hash over the fields that determine the parameter set and inference
    // behavior; checkpoints carry it for compatibility checks.
    uint64_t model_hash() const;

    // Canonical JSON (sorted keys); from_json rejects unknown keys.
    std::string to_json_string() const;
    static ModelConfig from_json_string(const std::string& text);
    static ModelConfig from_json_file(const std::string& path);

    // The training recipe at publication scale, kept as a named preset.
    static ModelConfig paper_scale();
    // Small fixed-step run that must memorize a handful of samples.
    static ModelConfig overfit_preset();
};

}  // namespace fan
