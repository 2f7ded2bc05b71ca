#include "fan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fan/error.hpp"
#include "fan/v2l_decoder.hpp"

namespace fan {

using nlohmann::json;

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    require(image_size > 0 && image_size % 32 == 0,
            "image_size must be a positive multiple of 32, got " + std::to_string(image_size));
    require(text_dim > 0 && fusion_dim > 0, "dims must be positive");
    require(fusion_dim % 4 == 0, "fusion_dim must be divisible by 4 for 2D positions");
    require(text_heads > 0 && text_dim % text_heads == 0,
            "text_dim must be divisible by text_heads");
    require(attn_heads > 0 && fusion_dim % attn_heads == 0,
            "fusion_dim must be divisible by attn_heads");
    require(l2v_heads > 0 && fusion_dim % l2v_heads == 0,
            "fusion_dim must be divisible by l2v_heads");
    require(text_layers >= 1, "text_layers must be at least 1");
    require(text_ffn_hidden > 0 && vpm_ffn_hidden > 0 && l2v_ffn_hidden > 0,
            "ffn hidden dims must be positive");
    require(vision_channels.size() == 4, "vision_channels needs exactly 4 entries");
    for (int c : vision_channels) require(c > 0, "vision_channels must be positive");
    require(max_len >= 3, "max_len must be at least 3");
    require(mask_threshold > 0.0 && mask_threshold < 1.0, "mask_threshold must lie in (0,1)");
    vpm_mode_from_string(vpm_mode);  // throws on invalid
    require(!use_l2v || l2v_layers >= 1, "l2v_layers must be at least 1 when use_l2v is on");
    require(l2v_encoder_layers >= 0, "l2v_encoder_layers must be non-negative");
    require(epochs >= 1, "epochs must be at least 1");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(max_steps >= 0, "max_steps must be non-negative");
    require(base_lr > 0.0, "base lr must be positive");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must lie in (0,1]");
    require(lr_milestone >= 0 && lr_milestone < epochs, "lr_milestone must be below epochs");
    require(backbone_lr_scale > 0.0, "backbone_lr_scale must be positive");
    require(bce_weight >= 0.0 && dice_weight >= 0.0, "loss weights must be non-negative");
    require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
}

uint64_t ModelConfig::model_hash() const {
    std::ostringstream ss;
    ss << "image_size=" << image_size << ";text_dim=" << text_dim
       << ";fusion_dim=" << fusion_dim << ";text_layers=" << text_layers
       << ";text_heads=" << text_heads << ";text_ffn_hidden=" << text_ffn_hidden
       << ";attn_heads=" << attn_heads << ";vpm_ffn_hidden=" << vpm_ffn_hidden
       << ";l2v_layers=" << l2v_layers << ";l2v_heads=" << l2v_heads
       << ";l2v_ffn_hidden=" << l2v_ffn_hidden << ";l2v_encoder_layers=" << l2v_encoder_layers
       << ";vision_channels=";
    for (int c : vision_channels) ss << c << ",";
    ss << ";max_len=" << max_len << ";vocab_size=" << vocab_size
       << ";mask_threshold=" << mask_threshold << ";use_activation=" << use_activation
       << ";vpm_mode=" << vpm_mode << ";vpm_self_attention=" << vpm_self_attention
       << ";use_l2v=" << use_l2v << ";sentence_only=" << sentence_only;
    const std::string s = ss.str();
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

json to_json(const ModelConfig& c) {
    return json{{"image_size", c.image_size},
                {"text_dim", c.text_dim},
                {"fusion_dim", c.fusion_dim},
                {"text_layers", c.text_layers},
                {"text_heads", c.text_heads},
                {"text_ffn_hidden", c.text_ffn_hidden},
                {"attn_heads", c.attn_heads},
                {"vpm_ffn_hidden", c.vpm_ffn_hidden},
                {"l2v_layers", c.l2v_layers},
                {"l2v_heads", c.l2v_heads},
                {"l2v_ffn_hidden", c.l2v_ffn_hidden},
                {"l2v_encoder_layers", c.l2v_encoder_layers},
                {"vision_channels", c.vision_channels},
                {"max_len", c.max_len},
                {"vocab_size", c.vocab_size},
                {"mask_threshold", c.mask_threshold},
                {"use_activation", c.use_activation},
                {"vpm_mode", c.vpm_mode},
                {"vpm_self_attention", c.vpm_self_attention},
                {"use_l2v", c.use_l2v},
                {"sentence_only", c.sentence_only},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"max_steps", c.max_steps},
                {"base_lr", c.base_lr},
                {"lr_decay", c.lr_decay},
                {"lr_milestone", c.lr_milestone},
                {"backbone_lr_scale", c.backbone_lr_scale},
                {"bce_weight", c.bce_weight},
                {"dice_weight", c.dice_weight},
                {"grad_clip_norm", c.grad_clip_norm},
                {"seed", c.seed}};
}

}  // namespace

std::string ModelConfig::to_json_string() const { return to_json(*this).dump(2); }

ModelConfig ModelConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    ModelConfig c;
    const json defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
        (void)value;
    }
    json merged = defaults;
    merged.update(j);
    try {
        merged.at("image_size").get_to(c.image_size);
        merged.at("text_dim").get_to(c.text_dim);
        merged.at("fusion_dim").get_to(c.fusion_dim);
        merged.at("text_layers").get_to(c.text_layers);
        merged.at("text_heads").get_to(c.text_heads);
        merged.at("text_ffn_hidden").get_to(c.text_ffn_hidden);
        merged.at("attn_heads").get_to(c.attn_heads);
        merged.at("vpm_ffn_hidden").get_to(c.vpm_ffn_hidden);
        merged.at("l2v_layers").get_to(c.l2v_layers);
        merged.at("l2v_heads").get_to(c.l2v_heads);
        merged.at("l2v_ffn_hidden").get_to(c.l2v_ffn_hidden);
        merged.at("l2v_encoder_layers").get_to(c.l2v_encoder_layers);
        merged.at("vision_channels").get_to(c.vision_channels);
        merged.at("max_len").get_to(c.max_len);
        merged.at("vocab_size").get_to(c.vocab_size);
        merged.at("mask_threshold").get_to(c.mask_threshold);
        merged.at("use_activation").get_to(c.use_activation);
        merged.at("vpm_mode").get_to(c.vpm_mode);
        merged.at("vpm_self_attention").get_to(c.vpm_self_attention);
        merged.at("use_l2v").get_to(c.use_l2v);
        merged.at("sentence_only").get_to(c.sentence_only);
        merged.at("epochs").get_to(c.epochs);
        merged.at("batch_size").get_to(c.batch_size);
        merged.at("max_steps").get_to(c.max_steps);
        merged.at("base_lr").get_to(c.base_lr);
        merged.at("lr_decay").get_to(c.lr_decay);
        merged.at("lr_milestone").get_to(c.lr_milestone);
        merged.at("backbone_lr_scale").get_to(c.backbone_lr_scale);
        merged.at("bce_weight").get_to(c.bce_weight);
        merged.at("dice_weight").get_to(c.dice_weight);
        merged.at("grad_clip_norm").get_to(c.grad_clip_norm);
        merged.at("seed").get_to(c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: type error: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str());
}

ModelConfig ModelConfig::paper_scale() {
    ModelConfig c;
    c.image_size = 416;
    c.l2v_layers = 6;
    c.l2v_heads = 8;
    c.l2v_ffn_hidden = 2048;
    c.max_len = 17;
    c.epochs = 50;
    c.batch_size = 64;
    c.base_lr = 1e-4;
    c.lr_decay = 0.1;
    c.lr_milestone = 35;
    c.backbone_lr_scale = 0.1;
    return c;
}

ModelConfig ModelConfig::overfit_preset() {
    ModelConfig c;
    c.epochs = 75;  // 32 samples / batch 8 -> 4 steps per epoch -> 300 steps
    c.batch_size = 8;
    c.base_lr = 1e-3;
    c.lr_decay = 1.0;
    c.lr_milestone = 0;
    c.seed = 0;
    return c;
}

}  // namespace fan
