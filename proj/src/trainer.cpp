#include "fan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fan/error.hpp"
#include "fan/mask_head.hpp"
#include "fan/metrics.hpp"
#include "fan/ops.hpp"

namespace fan {

namespace fs = std::filesystem;
using nlohmann::json;

void AdamOptimizer::step(ParamStore& params, double head_lr, double backbone_lr) {
    auto& entries = params.entries();
    if (state_.moments.empty()) {
        state_.moments.resize(entries.size());
        for (size_t i = 0; i < entries.size(); ++i) {
            const size_t n = entries[i].tensor.vec().size();
            state_.moments[i].m.assign(n, 0.0);
            state_.moments[i].v.assign(n, 0.0);
        }
    }
    if (state_.moments.size() != entries.size()) {
        throw ContractError("optimizer state does not match parameter count");
    }

    state_.step_count += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step_count));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step_count));

    for (size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        if (!e.tensor.has_grad()) continue;
        const auto& g = e.tensor.grad_view();
        auto& data = e.tensor.vec();
        auto& mom = state_.moments[i];
        const double lr = e.backbone ? backbone_lr : head_lr;
        for (size_t j = 0; j < data.size(); ++j) {
            const double gj = g[j];
            if (!std::isfinite(gj)) {
                throw NumericError("NaN/Inf gradient in parameter '" + e.name + "' at index " +
                                   std::to_string(j));
            }
            mom.m[j] = beta1_ * mom.m[j] + (1.0 - beta1_) * gj;
            mom.v[j] = beta2_ * mom.v[j] + (1.0 - beta2_) * gj * gj;
            const double mhat = mom.m[j] / bc1;
            const double vhat = mom.v[j] / bc2;
            data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

double lr_at(int epoch, const ModelConfig& cfg, bool is_backbone) {
    if (epoch < 0 || epoch >= cfg.epochs) {
        throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.epochs) + ")");
    }
    double lr = cfg.base_lr;
    if (epoch >= cfg.lr_milestone) lr *= cfg.lr_decay;
    if (is_backbone) lr *= cfg.backbone_lr_scale;
    return lr;
}

double clip_grad_norm(ParamStore& params, double max_norm) {
    double sq = 0.0;
    for (auto& e : params.entries()) {
        if (!e.tensor.has_grad()) continue;
        for (double g : e.tensor.grad_view()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& e : params.entries()) {
            if (!e.tensor.has_grad()) continue;
            for (double& g : e.tensor.grad()) g *= s;
        }
    }
    return norm;
}

EvalReport aggregate_eval(const std::vector<double>& ious) {
    EvalReport r;
    r.num_samples = static_cast<int>(ious.size());
    if (ious.empty()) return r;
    r.mean_iou = std::accumulate(ious.begin(), ious.end(), 0.0) / static_cast<double>(ious.size());
    r.precision_at_50 = precision_at(ious, 0.5);
    r.precision_at_70 = precision_at(ious, 0.7);
    r.precision_at_90 = precision_at(ious, 0.9);
    return r;
}

EvalReport evaluate_model(const Model& model, const std::vector<ImageSample>& samples) {
    NoGradGuard ng;
    std::vector<double> ious;
    ious.reserve(samples.size());
    for (const auto& s : samples) {
        BinaryMask pred = model.predict(s.image, s.tokens);
        ious.push_back(iou(pred, s.gt_mask));
    }
    return aggregate_eval(ious);
}

namespace {

// Config max_len wins over whatever length the dataset was tokenized at.
void retokenize_if_needed(std::vector<ImageSample>& samples, const Vocabulary& vocab,
                          int max_len) {
    for (auto& s : samples) {
        if (s.tokens.max_len() != max_len) s.tokens = tokenize(s.expression, vocab, max_len);
    }
}

}  // namespace

EvalReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& data_dir,
                               const std::string& split) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Model model = restore_model(ckpt);
    Vocabulary vocab = load_dataset_vocab(data_dir);
    if (vocab.size() != model.config().vocab_size) {
        throw CompatibilityError("checkpoint was trained with vocab_size " +
                                 std::to_string(model.config().vocab_size) +
                                 " but the dataset vocabulary has " +
                                 std::to_string(vocab.size()) + " entries");
    }
    std::vector<ImageSample> samples = read_split(data_dir, split);
    retokenize_if_needed(samples, vocab, model.config().max_len);
    return evaluate_model(model, samples);
}

TrainResult train(const ModelConfig& cfg_in, const std::string& data_dir,
                  const std::string& out_dir, bool verbose) {
    Vocabulary vocab = load_dataset_vocab(data_dir);
    std::vector<ImageSample> train_samples = read_split(data_dir, "train");
    if (train_samples.empty()) throw DataError("train split is empty: " + data_dir);
    std::vector<ImageSample> val_samples;
    try {
        val_samples = read_split(data_dir, "val");
    } catch (const DataError&) {
        // no val split: validation metrics are reported on the train split
    }

    ModelConfig cfg = cfg_in;
    cfg.vocab_size = vocab.size();
    cfg.validate();
    retokenize_if_needed(train_samples, vocab, cfg.max_len);
    retokenize_if_needed(val_samples, vocab, cfg.max_len);
    for (const auto& s : train_samples) {
        if (s.image.dim(0) % 32 != 0 || s.image.dim(1) % 32 != 0) {
            throw DataError("sample " + s.id + " dims are not divisible by 32");
        }
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir);
    const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
    const std::string steps_path = (fs::path(out_dir) / "step_losses.jsonl").string();
    const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
    const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
    std::ofstream metrics(metrics_path);
    if (!metrics) throw IoError("cannot write metrics log " + metrics_path);
    std::ofstream steps_log(steps_path);
    if (!steps_log) throw IoError("cannot write step log " + steps_path);

    vocab.save((fs::path(out_dir) / "vocab.txt").string());

    Model model(cfg, cfg.seed);
    AdamOptimizer adam;

    TrainResult result;
    result.metrics_path = metrics_path;
    result.last_checkpoint = last_path;
    result.best_val_iou = -1.0;

    const int n = static_cast<int>(train_samples.size());
    std::vector<Tensor> targets;
    targets.reserve(static_cast<size_t>(n));
    for (const auto& s : train_samples) targets.push_back(downsample_mask_nearest(s.gt_mask, 4));

    int step = 0;
    bool stop = false;
    int last_epoch = 0;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        last_epoch = epoch;
        const auto epoch_start = std::chrono::steady_clock::now();
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = Rng(cfg.seed).stream("shuffle").stream(static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        int epoch_loss_count = 0;
        const double head_lr = lr_at(epoch, cfg, false);
        const double backbone_lr = lr_at(epoch, cfg, true);

        for (int start = 0; start < n && !stop; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            const int bsz = end - start;
            model.params().zero_grads();
            double batch_loss = 0.0;
            for (int bi = start; bi < end; ++bi) {
                const ImageSample& s = train_samples[static_cast<size_t>(order[static_cast<size_t>(bi)])];
                Tensor logits = model.forward_logits(s.image, s.tokens);
                Tensor loss = model.loss(logits, targets[static_cast<size_t>(order[static_cast<size_t>(bi)])]);
                const double lv = loss.item();
                if (!std::isfinite(lv)) {
                    throw NumericError("loss became non-finite at step " + std::to_string(step) +
                                       " (sample " + s.id + "); last saved checkpoint: " +
                                       (fs::exists(last_path) ? last_path : "<none>"));
                }
                batch_loss += lv;
                scale(loss, 1.0 / bsz).backward();
            }
            batch_loss /= bsz;
            clip_grad_norm(model.params(), cfg.grad_clip_norm);
            adam.step(model.params(), head_lr, backbone_lr);

            result.step_losses.push_back(batch_loss);
            steps_log << json{{"step", step}, {"loss", batch_loss}}.dump() << "\n";
            epoch_loss_sum += batch_loss;
            epoch_loss_count += 1;
            ++step;
            if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
        }

        const double train_loss =
            epoch_loss_count > 0 ? epoch_loss_sum / epoch_loss_count : 0.0;
        result.final_train_loss = train_loss;

        EvalReport val = evaluate_model(model, val_samples.empty() ? train_samples : val_samples);
        const auto epoch_end = std::chrono::steady_clock::now();
        const double seconds =
            std::chrono::duration<double>(epoch_end - epoch_start).count();

        metrics << json{{"epoch", epoch},
                        {"train_loss", train_loss},
                        {"val_mean_iou", val.mean_iou},
                        {"val_precision_at_50", val.precision_at_50},
                        {"val_precision_at_70", val.precision_at_70},
                        {"val_precision_at_90", val.precision_at_90},
                        {"lr", head_lr},
                        {"steps", step},
                        {"seconds", seconds}}
                    .dump()
                << "\n";
        metrics.flush();
        if (verbose) {
            std::fprintf(stderr, "epoch %3d  loss %.4f  val IoU %.4f  (%.1fs)\n", epoch,
                         train_loss, val.mean_iou, seconds);
        }

        Checkpoint ckpt = snapshot(model, epoch, &adam.state());
        save_checkpoint(last_path, ckpt);
        if (val.mean_iou > result.best_val_iou) {
            result.best_val_iou = val.mean_iou;
            save_checkpoint(best_path, ckpt);
            result.best_checkpoint = best_path;
        }
    }
    (void)last_epoch;
    result.steps_run = step;
    return result;
}

}  // namespace fan
