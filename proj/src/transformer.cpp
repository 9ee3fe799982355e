#include "vlt/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace vlt {

MultiHeadAttention::MultiHeadAttention(Rng& rng, int dim_, int heads_) : heads(heads_), dim(dim_) {
    if (dim % heads != 0) {
        throw std::invalid_argument("MultiHeadAttention: dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(heads));
    }
    wq = Linear(rng, dim, dim);
    wk = Linear(rng, dim, dim);
    wv = Linear(rng, dim, dim);
    wo = Linear(rng, dim, dim);
}

MhaResult MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v) const {
    const int dk = dim / heads;
    const int nq = q.dim(0), nk = k.dim(0);
    Tensor qp = wq.forward(q);
    Tensor kp = wk.forward(k);
    Tensor vp = wv.forward(v);

    std::vector<Tensor> head_outs, head_attn;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice(qp, 1, h * dk, dk);
        Tensor kh = slice(kp, 1, h * dk, dk);
        Tensor vh = slice(vp, 1, h * dk, dk);
        Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dk)));
        Tensor probs = softmax(scores, 1);  // [nq, nk]
        head_outs.push_back(matmul(probs, vh));
        head_attn.push_back(reshape(probs, {1, nq, nk}));
    }
    MhaResult res;
    res.out = wo.forward(concat(head_outs, 1));
    res.attn = concat(head_attn, 0);  // [heads, nq, nk]
    return res;
}

void MultiHeadAttention::register_params(ParamRegistry& reg, const std::string& prefix) const {
    wq.register_params(reg, prefix + ".wq");
    wk.register_params(reg, prefix + ".wk");
    wv.register_params(reg, prefix + ".wv");
    wo.register_params(reg, prefix + ".wo");
}

FeedForward::FeedForward(Rng& rng, int dim) : lift(rng, dim, 4 * dim), drop(rng, 4 * dim, dim) {}

Tensor FeedForward::forward(const Tensor& x) const { return drop.forward(relu(lift.forward(x))); }

void FeedForward::register_params(ParamRegistry& reg, const std::string& prefix) const {
    lift.register_params(reg, prefix + ".lift");
    drop.register_params(reg, prefix + ".drop");
}

EncoderLayer::EncoderLayer(Rng& rng, int dim, int heads)
    : self_attn(rng, dim, heads), ffn(rng, dim), norm1(dim), norm2(dim) {}

Tensor EncoderLayer::forward(const Tensor& x) const {
    Tensor h = norm1.forward(add(x, self_attn.forward(x, x, x).out));
    return norm2.forward(add(h, ffn.forward(h)));
}

void EncoderLayer::register_params(ParamRegistry& reg, const std::string& prefix) const {
    self_attn.register_params(reg, prefix + ".self");
    ffn.register_params(reg, prefix + ".ffn");
    norm1.register_params(reg, prefix + ".norm1");
    norm2.register_params(reg, prefix + ".norm2");
}

DecoderLayer::DecoderLayer(Rng& rng, int dim, int heads)
    : self_attn(rng, dim, heads), cross_attn(rng, dim, heads), ffn(rng, dim), norm1(dim), norm2(dim), norm3(dim) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory) const {
    Tensor h = norm1.forward(add(x, self_attn.forward(x, x, x).out));
    h = norm2.forward(add(h, cross_attn.forward(h, memory, memory).out));
    return norm3.forward(add(h, ffn.forward(h)));
}

void DecoderLayer::register_params(ParamRegistry& reg, const std::string& prefix) const {
    self_attn.register_params(reg, prefix + ".self");
    cross_attn.register_params(reg, prefix + ".cross");
    ffn.register_params(reg, prefix + ".ffn");
    norm1.register_params(reg, prefix + ".norm1");
    norm2.register_params(reg, prefix + ".norm2");
    norm3.register_params(reg, prefix + ".norm3");
}

TransformerEncoder::TransformerEncoder(Rng& rng, const Config& cfg) : pos_per_layer_(cfg.pos_per_layer) {
    for (int i = 0; i < cfg.layers_enc; ++i) layers_.emplace_back(rng, cfg.dim, cfg.heads);
}

Tensor TransformerEncoder::forward(const Tensor& x, const Tensor& pos) const {
    Tensor h = x;
    bool first = true;
    for (const auto& layer : layers_) {
        if (pos.defined() && (first || pos_per_layer_)) h = add(h, pos);
        h = layer.forward(h);
        first = false;
    }
    return h;
}

void TransformerEncoder::register_params(ParamRegistry& reg, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].register_params(reg, prefix + ".layer" + std::to_string(i));
    }
}

TransformerDecoder::TransformerDecoder(Rng& rng, const Config& cfg) {
    for (int i = 0; i < cfg.layers_dec; ++i) layers_.emplace_back(rng, cfg.dim, cfg.heads);
}

Tensor TransformerDecoder::forward(const Tensor& queries, const Tensor& memory) const {
    Tensor h = queries;
    for (const auto& layer : layers_) h = layer.forward(h, memory);
    return h;
}

void TransformerDecoder::register_params(ParamRegistry& reg, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].register_params(reg, prefix + ".layer" + std::to_string(i));
    }
}

}  // namespace vlt
