#include "fan/nn.hpp"

#include <cmath>

#include "fan/error.hpp"

namespace fan {

Tensor ParamStore::add(const std::string& name, Tensor t, bool backbone) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back({name, t, backbone});
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second].tensor;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

AttentionProbe* trace_probe(ForwardTrace* trace, const std::string& site) {
    if (!trace) return nullptr;
    trace->attention.emplace_back(site, AttentionProbe{});
    return &trace->attention.back().second;
}

Tensor init_kaiming(const Shape& shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : t.vec()) v = rng.normal(0.0, sd);
    return t;
}

Tensor init_scaled(const Shape& shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.vec()) v = rng.normal(0.0, sd);
    return t;
}

LinearLayer::LinearLayer(int in, int out, const std::string& name, ParamStore& ps, Rng& rng,
                         bool backbone) {
    w = ps.add(name + ".w", init_scaled({in, out}, in, rng), backbone);
    b = ps.add(name + ".b", Tensor::zeros({out}), backbone);
}

LayerNormLayer::LayerNormLayer(int dim, const std::string& name, ParamStore& ps, bool backbone) {
    gamma = ps.add(name + ".gamma", Tensor::full({dim}, 1.0), backbone);
    beta = ps.add(name + ".beta", Tensor::zeros({dim}), backbone);
}

MhaLayer::MhaLayer(int dim, int heads_, const std::string& name, ParamStore& ps, Rng& rng)
    : heads(heads_) {
    w.wq = ps.add(name + ".wq", init_scaled({dim, dim}, dim, rng));
    w.bq = ps.add(name + ".bq", Tensor::zeros({dim}));
    w.wk = ps.add(name + ".wk", init_scaled({dim, dim}, dim, rng));
    w.bk = ps.add(name + ".bk", Tensor::zeros({dim}));
    w.wv = ps.add(name + ".wv", init_scaled({dim, dim}, dim, rng));
    w.bv = ps.add(name + ".bv", Tensor::zeros({dim}));
    w.wo = ps.add(name + ".wo", init_scaled({dim, dim}, dim, rng));
    w.bo = ps.add(name + ".bo", Tensor::zeros({dim}));
}

FfnLayer::FfnLayer(int dim, int hidden, const std::string& name, ParamStore& ps, Rng& rng) {
    fc1 = LinearLayer(dim, hidden, name + ".fc1", ps, rng);
    fc2 = LinearLayer(hidden, dim, name + ".fc2", ps, rng);
}

EncoderLayer::EncoderLayer(int dim, int heads, int ffn_hidden, const std::string& name,
                           ParamStore& ps, Rng& rng)
    : ln_attn(dim, name + ".ln_attn", ps),
      ln_ffn(dim, name + ".ln_ffn", ps),
      attn(dim, heads, name + ".attn", ps, rng),
      ffn(dim, ffn_hidden, name + ".ffn", ps, rng) {}

Tensor EncoderLayer::forward(const Tensor& x, const std::vector<bool>* key_mask,
                             AttentionProbe* probe) const {
    Tensor n = ln_attn.forward(x);
    Tensor h = add(x, attn.forward(n, n, n, key_mask, probe));
    return add(h, ffn.forward(ln_ffn.forward(h)));
}

DecoderLayer::DecoderLayer(int dim, int heads, int ffn_hidden, const std::string& name,
                           ParamStore& ps, Rng& rng)
    : ln_self(dim, name + ".ln_self", ps),
      ln_cross(dim, name + ".ln_cross", ps),
      ln_ffn(dim, name + ".ln_ffn", ps),
      self_attn(dim, heads, name + ".self_attn", ps, rng),
      cross_attn(dim, heads, name + ".cross_attn", ps, rng),
      ffn(dim, ffn_hidden, name + ".ffn", ps, rng) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory, AttentionProbe* self_probe,
                             AttentionProbe* cross_probe) const {
    Tensor n = ln_self.forward(x);
    Tensor h = add(x, self_attn.forward(n, n, n, nullptr, self_probe));
    Tensor q = ln_cross.forward(h);
    h = add(h, cross_attn.forward(q, memory, memory, nullptr, cross_probe));
    return add(h, ffn.forward(ln_ffn.forward(h)));
}

}  // namespace fan
