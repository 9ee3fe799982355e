#pragma once

#include "vlt/config.hpp"
#include "vlt/encoders.hpp"
#include "vlt/nn.hpp"

namespace vlt {

struct FusionResult {
    Tensor f_fused;  // [H, W, C]
    Tensor a_sd;     // [H, W, nt]; undefined for the tile variants
};

/// Multi-modal fusion of F_t and F_vr. The spatial-dynamic variant derives a
/// per-pixel attention over words; the tile variants copy the sentence
/// feature to every position. All projections are pointwise (1x1), which
/// keeps the module equivariant to spatial permutation.
class Fusion {
public:
    Fusion() = default;
    Fusion(Rng& rng, const Config& cfg);

    FusionResult forward(const Tensor& f_vr, const LanguageFeatures& lang) const;

    // A_sd = softmax_{words}(Conv(F_vr) Conv(F_t)^T / sqrt(C)); padded words
    // carry exactly zero weight.
    Tensor sdf_attention(const Tensor& f_vr, const Tensor& f_t,
                         const std::vector<unsigned char>& pad_mask) const;
    // F_sdl = A_sd Conv(F_t); F_fused = Conv(F_sdl (++) F_vr)
    Tensor sdf_fuse(const Tensor& a_sd, const Tensor& f_t, const Tensor& f_vr) const;
    // Baseline: sentence feature tiled across HxW, concatenated, projected.
    Tensor tile_fuse(const Tensor& sentence, const Tensor& f_vr) const;

    FusionKind kind() const { return kind_; }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    FusionKind kind_ = FusionKind::Sdf;
    int dim_ = 0;
    Linear attn_vision_;   // Conv(F_vr) in the attention logits
    Linear attn_text_;     // Conv(F_t) in the attention logits
    Linear value_text_;    // Conv(F_t) producing the weighted language values
    Linear out_proj_;      // 2C -> C after concatenation
    std::vector<Conv> extra_convs_;  // tile_conv4 only
};

}  // namespace vlt
