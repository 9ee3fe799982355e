#include "vlt/query_gen.hpp"

#include <cmath>
#include <stdexcept>

namespace vlt {

QueryGenerator::QueryGenerator(Rng& rng, const Config& cfg, int hw)
    : kind_(cfg.query_kind), dim_(cfg.dim), nq_(effective_nq(cfg)), hw_(hw) {
    if (kind_ == QueryKind::Qgm) {
        conv1_ = Linear(rng, dim_, dim_);
        conv2_ = Linear(rng, dim_, dim_);
        conv3_ = Linear(rng, dim_, cfg.nq);
        w_v_ = fan_in_init(rng, {hw, dim_}, hw);
        w_a_ = fan_in_init(rng, {dim_, dim_}, dim_);
        w_t_ = fan_in_init(rng, {dim_, dim_}, dim_);
        w_v_residual_ = cfg.qgm_share_wv ? w_v_ : fan_in_init(rng, {hw, dim_}, hw);
    } else if (kind_ == QueryKind::Learnt) {
        learnt_queries_ = uniform_init(rng, {cfg.nq, dim_}, -0.1, 0.1);
    }
}

Tensor QueryGenerator::prepare_vision_queries(const Tensor& f_vr) const {
    if (kind_ != QueryKind::Qgm) throw std::logic_error("QueryGenerator: vision queries on non-qgm kind");
    const int h = f_vr.dim(0), w = f_vr.dim(1);
    if (h * w != hw_) {
        throw std::invalid_argument("QueryGenerator: spatial size " + std::to_string(h * w) +
                                    " does not match configured " + std::to_string(hw_));
    }
    Tensor x = reshape(f_vr, {h * w, f_vr.dim(2)});
    x = relu(conv1_.forward(x));
    x = relu(conv2_.forward(x));
    x = conv3_.forward(x);        // [HW, nq]
    return transpose(x);          // [nq, HW]
}

Tensor QueryGenerator::query_attention(const Tensor& f_vq, const Tensor& f_t,
                                       const std::vector<unsigned char>& pad_mask) const {
    if (kind_ != QueryKind::Qgm) throw std::logic_error("QueryGenerator: query_attention on non-qgm kind");
    bool any_valid = false;
    for (unsigned char m : pad_mask) any_valid = any_valid || m;
    if (!any_valid) throw std::invalid_argument("query_attention: zero valid words");
    Tensor vision = relu(matmul(f_vq, w_v_));  // [nq, C]
    Tensor text = relu(matmul(f_t, w_a_));     // [nt, C]
    Tensor logits = scale(matmul(vision, transpose(text)), 1.0 / std::sqrt(static_cast<double>(dim_)));
    return softmax_masked(logits, 1, pad_mask);  // [nq, nt]
}

Tensor QueryGenerator::generate_queries(const Tensor& f_vq, const Tensor& f_t, const Tensor& a_qd) const {
    if (kind_ != QueryKind::Qgm) throw std::logic_error("QueryGenerator: generate_queries on non-qgm kind");
    Tensor language = matmul(a_qd, relu(matmul(f_t, w_t_)));
    Tensor residual = relu(matmul(f_vq, w_v_residual_));
    return add(language, residual);  // [nq, C]
}

QuerySet QueryGenerator::forward(const Tensor& f_vr, const LanguageFeatures& lang) const {
    QuerySet out;
    switch (kind_) {
        case QueryKind::Qgm:
            out.f_vq = prepare_vision_queries(f_vr);
            out.a_qd = query_attention(out.f_vq, lang.f_t, lang.pad_mask);
            out.f_q = generate_queries(out.f_vq, lang.f_t, out.a_qd);
            break;
        case QueryKind::Learnt:
            out.f_q = learnt_queries_;
            break;
        case QueryKind::Ft:
            out.f_q = concat({lang.f_t, lang.sentence}, 0);  // [nt + 1, C]
            break;
    }
    return out;
}

void QueryGenerator::register_params(ParamRegistry& reg, const std::string& prefix) const {
    if (kind_ == QueryKind::Qgm) {
        conv1_.register_params(reg, prefix + ".conv1");
        conv2_.register_params(reg, prefix + ".conv2");
        conv3_.register_params(reg, prefix + ".conv3");
        reg.add(prefix + ".w_v", w_v_);
        reg.add(prefix + ".w_a", w_a_);
        reg.add(prefix + ".w_t", w_t_);
        if (w_v_residual_.raw() != w_v_.raw()) reg.add(prefix + ".w_v_residual", w_v_residual_);
    } else if (kind_ == QueryKind::Learnt) {
        reg.add(prefix + ".learnt", learnt_queries_);
    }
}

Tensor global_word_importance(const Tensor& a_qd) {
    if (a_qd.rank() != 2) throw std::invalid_argument("global_word_importance: expects [nq, nt]");
    return sum(a_qd, 0);  // [nt]
}

}  // namespace vlt
