#pragma once

#include "vlt/config.hpp"
#include "vlt/nn.hpp"

namespace vlt {

struct MhaResult {
    Tensor out;   // [n_q, C]
    Tensor attn;  // [heads, n_q, n_k] softmax rows
};

/// Scaled dot-product attention with per-head projections, head concatenation
/// and output projection.
struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int heads = 1;
    int dim = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(Rng& rng, int dim_, int heads_);

    MhaResult forward(const Tensor& q, const Tensor& k, const Tensor& v) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct FeedForward {
    Linear lift, drop;  // C -> 4C -> C

    FeedForward() = default;
    FeedForward(Rng& rng, int dim);
    Tensor forward(const Tensor& x) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct EncoderLayer {
    MultiHeadAttention self_attn;
    FeedForward ffn;
    LayerNorm norm1, norm2;

    EncoderLayer() = default;
    EncoderLayer(Rng& rng, int dim, int heads);
    Tensor forward(const Tensor& x) const;  // post-norm residual blocks
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct DecoderLayer {
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;
    LayerNorm norm1, norm2, norm3;

    DecoderLayer() = default;
    DecoderLayer(Rng& rng, int dim, int heads);
    Tensor forward(const Tensor& x, const Tensor& memory) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

/// Encoder stack. The positional table is added to the input once, or to
/// every layer input when pos_per_layer is set.
class TransformerEncoder {
public:
    TransformerEncoder() = default;
    TransformerEncoder(Rng& rng, const Config& cfg);

    // x: [HW, C]; pos: [HW, C] or undefined to run without positions.
    Tensor forward(const Tensor& x, const Tensor& pos) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    std::vector<EncoderLayer> layers_;
    bool pos_per_layer_ = false;
};

class TransformerDecoder {
public:
    TransformerDecoder() = default;
    TransformerDecoder(Rng& rng, const Config& cfg);

    // queries: [nq, C], memory: [HW, C] -> responses [nq, C]
    Tensor forward(const Tensor& queries, const Tensor& memory) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    std::vector<DecoderLayer> layers_;
};

}  // namespace vlt
