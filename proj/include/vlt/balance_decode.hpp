#pragma once

#include "vlt/config.hpp"
#include "vlt/nn.hpp"

namespace vlt {

struct BalanceResult {
    Tensor c_q;  // [nq, 1], sigmoid confidences in (0, 1)
    Tensor f_b;  // [nq, C], responses scaled row-wise by confidence
};

/// Assigns each decoder response a confidence and scales it before mask
/// decoding: concat(linear(F_q), F_r) -> two linear layers -> sigmoid.
class QueryBalance {
public:
    QueryBalance() = default;
    QueryBalance(Rng& rng, int dim);

    BalanceResult forward(const Tensor& f_q, const Tensor& f_r) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    Linear query_proj_;  // C -> C
    Linear hidden_;      // 2C -> C
    Linear out_;         // C -> 1
};

struct MaskPrediction {
    Tensor f_m;     // [HW, nq], retained for contrastive learning
    Tensor logits;  // [8H, 8W]
};

/// F_m = F_ve F_b^T used as mask generation kernels, then three 3x3 convs
/// each followed by 2x nearest upsampling and a final 1x1 projection. The
/// decoder consumes only F_b and the encoder output, never CNN features.
class MaskDecoder {
public:
    MaskDecoder() = default;
    MaskDecoder(Rng& rng, int nq);

    // f_b: [nq, C], f_ve: [HW, C] with HW == h*w.
    MaskPrediction forward(const Tensor& f_b, const Tensor& f_ve, int h, int w) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    Conv conv1_, conv2_, conv3_;  // nq -> nq -> nq/2 -> nq/2
    Conv final_;                  // 1x1, nq/2 -> 1
    int nq_ = 0;
};

// probabilities > threshold; byte mask matching MaskPrediction resolution.
std::vector<unsigned char> binarize_logits(const Tensor& logits, double threshold);

}  // namespace vlt
