#include "vlt/model.hpp"

#include <stdexcept>

namespace vlt {

Model::Model(const Config& cfg, int vocab_size, int image_h, int image_w) : cfg_(cfg) {
    if (image_h % ImageEncoder::kTotalStride != 0 || image_w % ImageEncoder::kTotalStride != 0) {
        throw std::invalid_argument("Model: image dims must be divisible by " +
                                    std::to_string(ImageEncoder::kTotalStride));
    }
    fh_ = image_h / ImageEncoder::kTotalStride;
    fw_ = image_w / ImageEncoder::kTotalStride;

    Rng rng(Rng::mix(cfg.seed, 0x5eedf00dULL));
    text_ = TextEncoder(rng, vocab_size, cfg.dim, cfg.nt);
    image_ = ImageEncoder(rng, cfg.dim);
    fusion_ = Fusion(rng, cfg);
    qgen_ = QueryGenerator(rng, cfg, fh_ * fw_);
    encoder_ = TransformerEncoder(rng, cfg);
    decoder_ = TransformerDecoder(rng, cfg);
    balance_ = QueryBalance(rng, cfg.dim);
    mask_decoder_ = MaskDecoder(rng, QueryGenerator::effective_nq(cfg));
    pos_ = sine_positional_2d(fh_, fw_, cfg.dim);

    text_.register_params(params_, "text");
    image_.register_params(params_, "image");
    fusion_.register_params(params_, "fusion");
    qgen_.register_params(params_, "qgen");
    encoder_.register_params(params_, "encoder");
    decoder_.register_params(params_, "decoder");
    balance_.register_params(params_, "balance");
    mask_decoder_.register_params(params_, "mask_decoder");
}

ModelOutput Model::forward(const Tensor& image, const std::vector<int>& token_ids) const {
    LanguageFeatures lang = text_.encode(token_ids);
    Tensor f_vr = image_.encode(image);  // [fh, fw, C]

    FusionResult fused = fusion_.forward(f_vr, lang);
    Tensor flat = reshape(fused.f_fused, {fh_ * fw_, cfg_.dim});
    Tensor memory = encoder_.forward(flat, pos_);

    QuerySet queries = qgen_.forward(f_vr, lang);
    Tensor responses = decoder_.forward(queries.f_q, memory);
    BalanceResult balanced = balance_.forward(queries.f_q, responses);
    MaskPrediction pred = mask_decoder_.forward(balanced.f_b, memory, fh_, fw_);

    ModelOutput out;
    out.logits = pred.logits;
    out.f_m = pred.f_m;
    out.f_q = queries.f_q;
    out.f_r = responses;
    out.f_b = balanced.f_b;
    out.c_q = balanced.c_q;
    out.a_qd = queries.a_qd;
    out.a_sd = fused.a_sd;
    out.f_vq = queries.f_vq;
    if (queries.a_qd.defined()) out.word_importance = global_word_importance(queries.a_qd);
    return out;
}

Tensor Model::contrastive_feature(const ModelOutput& out) const {
    if (cfg_.mcl_feature == MclFeature::Pooled) return mean(out.f_m, 0);  // [nq]
    return reshape(out.f_m, {static_cast<int>(out.f_m.numel())});
}

}  // namespace vlt
