#pragma once

#include <deque>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fan/ops.hpp"
#include "fan/rng.hpp"
#include "fan/tensor.hpp"

namespace fan {

// Name-keyed registry of trainable tensors. Names are stable across runs and
// define the checkpoint layout. Backbone parameters carry a flag so the
// optimizer can scale their learning rate.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool backbone = false;
    };

    Tensor add(const std::string& name, Tensor t, bool backbone = false);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor get(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    int64_t total_elements() const;
    void zero_grads();

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Attention weights observed at named sites during one forward pass.
// Deque storage: probe pointers stay valid while later sites are added.
struct ForwardTrace {
    std::deque<std::pair<std::string, AttentionProbe>> attention;
};

// Returns a probe slot inside the trace, or nullptr when tracing is off.
AttentionProbe* trace_probe(ForwardTrace* trace, const std::string& site);

// ---- initializers ----
// Fan-in scaled normal for weights feeding a ReLU.
Tensor init_kaiming(const Shape& shape, int fan_in, Rng& rng);
// Fan-in scaled normal for plain linear maps.
Tensor init_scaled(const Shape& shape, int fan_in, Rng& rng);

// ---- layers ----
struct LinearLayer {
    Tensor w, b;
    LinearLayer() = default;
    LinearLayer(int in, int out, const std::string& name, ParamStore& ps, Rng& rng,
                bool backbone = false);
    Tensor forward(const Tensor& x) const { return linear(x, w, b); }
};

struct LayerNormLayer {
    Tensor gamma, beta;
    LayerNormLayer() = default;
    LayerNormLayer(int dim, const std::string& name, ParamStore& ps, bool backbone = false);
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct MhaLayer {
    MhaWeights w;
    int heads = 1;
    MhaLayer() = default;
    MhaLayer(int dim, int heads, const std::string& name, ParamStore& ps, Rng& rng);
    Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v,
                   const std::vector<bool>* key_mask = nullptr,
                   AttentionProbe* probe = nullptr) const {
        return multi_head_attention(q, k, v, w, heads, key_mask, probe);
    }
};

struct FfnLayer {
    LinearLayer fc1, fc2;
    FfnLayer() = default;
    FfnLayer(int dim, int hidden, const std::string& name, ParamStore& ps, Rng& rng);
    Tensor forward(const Tensor& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

// Pre-norm transformer encoder layer.
struct EncoderLayer {
    LayerNormLayer ln_attn, ln_ffn;
    MhaLayer attn;
    FfnLayer ffn;
    EncoderLayer() = default;
    EncoderLayer(int dim, int heads, int ffn_hidden, const std::string& name, ParamStore& ps,
                 Rng& rng);
    Tensor forward(const Tensor& x, const std::vector<bool>* key_mask = nullptr,
                   AttentionProbe* probe = nullptr) const;
};

// Pre-norm transformer decoder layer (self-attention, cross-attention, FFN).
struct DecoderLayer {
    LayerNormLayer ln_self, ln_cross, ln_ffn;
    MhaLayer self_attn, cross_attn;
    FfnLayer ffn;
    DecoderLayer() = default;
    DecoderLayer(int dim, int heads, int ffn_hidden, const std::string& name, ParamStore& ps,
                 Rng& rng);
    Tensor forward(const Tensor& x, const Tensor& memory,
                   AttentionProbe* self_probe = nullptr,
                   AttentionProbe* cross_probe = nullptr) const;
};

}  // namespace fan
