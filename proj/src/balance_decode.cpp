#include "vlt/balance_decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vlt {

QueryBalance::QueryBalance(Rng& rng, int dim)
    : query_proj_(rng, dim, dim), hidden_(rng, 2 * dim, dim), out_(rng, dim, 1) {}

BalanceResult QueryBalance::forward(const Tensor& f_q, const Tensor& f_r) const {
    if (f_q.shape() != f_r.shape()) {
        throw std::invalid_argument("QueryBalance: query shape " + shape_str(f_q.shape()) +
                                    " does not match response shape " + shape_str(f_r.shape()));
    }
    Tensor joint = concat({query_proj_.forward(f_q), f_r}, 1);  // [nq, 2C]
    BalanceResult res;
    res.c_q = sigmoid(out_.forward(hidden_.forward(joint)));  // [nq, 1]
    res.f_b = mul(f_r, res.c_q);                              // row-wise scaling
    return res;
}

void QueryBalance::register_params(ParamRegistry& reg, const std::string& prefix) const {
    query_proj_.register_params(reg, prefix + ".query_proj");
    hidden_.register_params(reg, prefix + ".hidden");
    out_.register_params(reg, prefix + ".out");
}

MaskDecoder::MaskDecoder(Rng& rng, int nq) : nq_(nq) {
    const int half = std::max(1, nq / 2);
    conv1_ = Conv(rng, 3, nq, nq, 1);
    conv2_ = Conv(rng, 3, nq, half, 1);
    conv3_ = Conv(rng, 3, half, half, 1);
    final_ = Conv(rng, 1, half, 1, 1);
}

MaskPrediction MaskDecoder::forward(const Tensor& f_b, const Tensor& f_ve, int h, int w) const {
    if (f_ve.dim(0) != h * w) {
        throw std::invalid_argument("MaskDecoder: encoder feature rows " + std::to_string(f_ve.dim(0)) +
                                    " do not match spatial " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (f_b.dim(0) != nq_) {
        throw std::invalid_argument("MaskDecoder: expected " + std::to_string(nq_) + " kernels, got " +
                                    std::to_string(f_b.dim(0)));
    }
    MaskPrediction pred;
    pred.f_m = matmul(f_ve, transpose(f_b));  // [HW, nq]
    Tensor x = reshape(pred.f_m, {h, w, nq_});
    x = resize_nearest(relu(conv1_.forward(x)), 2 * h, 2 * w);
    x = resize_nearest(relu(conv2_.forward(x)), 4 * h, 4 * w);
    x = resize_nearest(relu(conv3_.forward(x)), 8 * h, 8 * w);
    Tensor logits = final_.forward(x);  // [8h, 8w, 1]
    pred.logits = reshape(logits, {8 * h, 8 * w});
    return pred;
}

void MaskDecoder::register_params(ParamRegistry& reg, const std::string& prefix) const {
    conv1_.register_params(reg, prefix + ".conv1");
    conv2_.register_params(reg, prefix + ".conv2");
    conv3_.register_params(reg, prefix + ".conv3");
    final_.register_params(reg, prefix + ".final");
}

std::vector<unsigned char> binarize_logits(const Tensor& logits, double threshold) {
    std::vector<unsigned char> mask(logits.numel());
    const double* p = logits.data();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double prob = p[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-p[i])) : std::exp(p[i]) / (1.0 + std::exp(p[i]));
        mask[i] = prob > threshold ? 1 : 0;
    }
    return mask;
}

}  // namespace vlt
