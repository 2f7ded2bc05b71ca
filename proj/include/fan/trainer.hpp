#pragma once

#include <string>
#include <vector>

#include "fan/checkpoint.hpp"
#include "fan/config.hpp"
#include "fan/model.hpp"
#include "fan/synthetic_data.hpp"

namespace fan {

// Adam with bias correction. Parameters whose gradient buffer is empty (no
// path to the loss) are left untouched.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params, double head_lr, double backbone_lr);

    int64_t step_count() const { return state_.step_count; }
    const OptimizerState& state() const { return state_; }
    void restore(const OptimizerState& s) { state_ = s; }

private:
    double beta1_, beta2_, eps_;
    OptimizerState state_;
};

// Piecewise-constant schedule: base lr before the milestone epoch, decayed at
// and after it; backbone parameters are additionally scaled down.
double lr_at(int epoch, const ModelConfig& cfg, bool is_backbone);

// Global-norm gradient clipping; returns the pre-clip norm.
double clip_grad_norm(ParamStore& params, double max_norm);

struct EvalReport {
    double mean_iou = 0.0;
    double precision_at_50 = 0.0;
    double precision_at_70 = 0.0;
    double precision_at_90 = 0.0;
    int num_samples = 0;
};

EvalReport aggregate_eval(const std::vector<double>& ious);
EvalReport evaluate_model(const Model& model, const std::vector<ImageSample>& samples);
EvalReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir,
                               const std::string& split);

struct TrainResult {
    std::string last_checkpoint;
    std::string best_checkpoint;
    std::string metrics_path;
    double best_val_iou = 0.0;
    double final_train_loss = 0.0;
    int steps_run = 0;
    std::vector<double> step_losses;  // per optimizer step, mean batch loss
};

// Full training run: deterministic in (config, data); writes per-epoch JSONL
// metrics, per-step losses, and best/last checkpoints into out_dir.
TrainResult train(const ModelConfig& cfg, const std::string& data_dir,
                  const std::string& out_dir, bool verbose = false);

}  // namespace fan
