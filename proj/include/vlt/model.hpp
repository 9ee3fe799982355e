#pragma once

#include "vlt/balance_decode.hpp"
#include "vlt/config.hpp"
#include "vlt/encoders.hpp"
#include "vlt/fusion.hpp"
#include "vlt/query_gen.hpp"
#include "vlt/transformer.hpp"

namespace vlt {

struct ModelOutput {
    Tensor logits;           // [H_img, W_img]
    Tensor f_m;              // [HW, nq]
    Tensor f_q, f_r, f_b;    // [nq, C]
    Tensor c_q;              // [nq, 1]
    Tensor a_qd;             // [nq, nt] (qgm only)
    Tensor a_sd;             // [H, W, nt] (sdf only)
    Tensor f_vq;             // [nq, HW] (qgm only)
    Tensor word_importance;  // [nt] (qgm only)
};

/// Full referring-segmentation model: text/image encoders, multi-modal
/// fusion, query generation, transformer encoder/decoder, query balancing and
/// mask decoding. Image spatial dims are fixed at construction.
class Model {
public:
    Model(const Config& cfg, int vocab_size, int image_h, int image_w);

    // image: [H_img, W_img, 3]; token_ids non-empty, truncated to nt.
    ModelOutput forward(const Tensor& image, const std::vector<int>& token_ids) const;

    // Contrastive feature of a forward pass: spatial mean (or flattening) of F_m.
    Tensor contrastive_feature(const ModelOutput& out) const;

    const ParamRegistry& params() const { return params_; }
    ParamRegistry& params() { return params_; }
    std::size_t parameter_count() const { return params_.total_elements(); }
    const Config& config() const { return cfg_; }
    int feature_h() const { return fh_; }
    int feature_w() const { return fw_; }

    const TextEncoder& text_encoder() const { return text_; }
    const ImageEncoder& image_encoder() const { return image_; }
    const Fusion& fusion() const { return fusion_; }
    const QueryGenerator& query_generator() const { return qgen_; }
    const TransformerEncoder& encoder() const { return encoder_; }
    const TransformerDecoder& decoder() const { return decoder_; }
    const QueryBalance& balance() const { return balance_; }
    const MaskDecoder& mask_decoder() const { return mask_decoder_; }

private:
    Config cfg_;
    int fh_ = 0, fw_ = 0;  // feature grid = image dims / encoder stride
    TextEncoder text_;
    ImageEncoder image_;
    Fusion fusion_;
    QueryGenerator qgen_;
    TransformerEncoder encoder_;
    TransformerDecoder decoder_;
    QueryBalance balance_;
    MaskDecoder mask_decoder_;
    Tensor pos_;  // fixed sine table [HW, C]
    ParamRegistry params_;
};

}  // namespace vlt
