#include "vlt/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace vlt {

Fusion::Fusion(Rng& rng, const Config& cfg) : kind_(cfg.fusion), dim_(cfg.dim) {
    const int c = cfg.dim;
    if (kind_ == FusionKind::Sdf) {
        attn_vision_ = Linear(rng, c, c);
        attn_text_ = Linear(rng, c, c);
        value_text_ = Linear(rng, c, c);
    }
    out_proj_ = Linear(rng, 2 * c, c);
    if (kind_ == FusionKind::TileConv4) {
        for (int i = 0; i < 4; ++i) extra_convs_.emplace_back(rng, 3, c, c, 1);
    }
}

Tensor Fusion::sdf_attention(const Tensor& f_vr, const Tensor& f_t,
                             const std::vector<unsigned char>& pad_mask) const {
    if (kind_ != FusionKind::Sdf) throw std::logic_error("Fusion: sdf_attention on non-sdf fusion");
    bool any_valid = false;
    for (unsigned char m : pad_mask) any_valid = any_valid || m;
    if (!any_valid) throw std::invalid_argument("sdf_attention: all words padded");

    const int h = f_vr.dim(0), w = f_vr.dim(1);
    Tensor vision = attn_vision_.forward(reshape(f_vr, {h * w, f_vr.dim(2)}));  // [HW, C]
    Tensor text = attn_text_.forward(f_t);                                      // [nt, C]
    Tensor logits = scale(matmul(vision, transpose(text)), 1.0 / std::sqrt(static_cast<double>(dim_)));
    Tensor a = softmax_masked(logits, 1, pad_mask);  // [HW, nt]
    return reshape(a, {h, w, f_t.dim(0)});
}

Tensor Fusion::sdf_fuse(const Tensor& a_sd, const Tensor& f_t, const Tensor& f_vr) const {
    if (kind_ != FusionKind::Sdf) throw std::logic_error("Fusion: sdf_fuse on non-sdf fusion");
    const int h = f_vr.dim(0), w = f_vr.dim(1);
    if (a_sd.dim(0) != h || a_sd.dim(1) != w || a_sd.dim(2) != f_t.dim(0)) {
        throw std::invalid_argument("sdf_fuse: attention shape " + shape_str(a_sd.shape()) +
                                    " does not match vision " + shape_str(f_vr.shape()) + " and text " +
                                    shape_str(f_t.shape()));
    }
    Tensor values = value_text_.forward(f_t);                       // [nt, C]
    Tensor f_sdl = matmul(reshape(a_sd, {h * w, f_t.dim(0)}), values);  // [HW, C]
    Tensor joint = concat({f_sdl, reshape(f_vr, {h * w, f_vr.dim(2)})}, 1);
    return reshape(out_proj_.forward(joint), {h, w, dim_});
}

Tensor Fusion::tile_fuse(const Tensor& sentence, const Tensor& f_vr) const {
    const int h = f_vr.dim(0), w = f_vr.dim(1);
    Tensor tiled = broadcast_to(sentence, {h * w, sentence.dim(1)});
    Tensor joint = concat({tiled, reshape(f_vr, {h * w, f_vr.dim(2)})}, 1);
    Tensor fused = reshape(out_proj_.forward(joint), {h, w, dim_});
    for (const Conv& conv : extra_convs_) fused = relu(conv.forward(fused));
    return fused;
}

FusionResult Fusion::forward(const Tensor& f_vr, const LanguageFeatures& lang) const {
    FusionResult out;
    if (kind_ == FusionKind::Sdf) {
        out.a_sd = sdf_attention(f_vr, lang.f_t, lang.pad_mask);
        out.f_fused = sdf_fuse(out.a_sd, lang.f_t, f_vr);
    } else {
        out.f_fused = tile_fuse(lang.sentence, f_vr);
    }
    return out;
}

void Fusion::register_params(ParamRegistry& reg, const std::string& prefix) const {
    if (kind_ == FusionKind::Sdf) {
        attn_vision_.register_params(reg, prefix + ".attn_vision");
        attn_text_.register_params(reg, prefix + ".attn_text");
        value_text_.register_params(reg, prefix + ".value_text");
    }
    out_proj_.register_params(reg, prefix + ".out_proj");
    for (std::size_t i = 0; i < extra_convs_.size(); ++i) {
        extra_convs_[i].register_params(reg, prefix + ".conv" + std::to_string(i));
    }
}

}  // namespace vlt
