#pragma once

#include "vlt/config.hpp"
#include "vlt/encoders.hpp"
#include "vlt/nn.hpp"

namespace vlt {

struct QuerySet {
    Tensor f_q;   // [nq, C]
    Tensor a_qd;  // [nq, nt]; undefined for learnt/ft query kinds
    Tensor f_vq;  // [nq, HW]; undefined for learnt/ft query kinds
};

/// Produces the transformer-decoder queries. The main path derives them from
/// the language features re-weighted per query under vision guidance; the
/// learnt/ft kinds are ablation baselines.
class QueryGenerator {
public:
    QueryGenerator() = default;
    QueryGenerator(Rng& rng, const Config& cfg, int hw);

    static int effective_nq(const Config& cfg) {
        return cfg.query_kind == QueryKind::Ft ? cfg.nt + 1 : cfg.nq;
    }

    QuerySet forward(const Tensor& f_vr, const LanguageFeatures& lang) const;

    // F_vq = Flatten(Conv(F_vr))^T, three pointwise convolutions with relu between.
    Tensor prepare_vision_queries(const Tensor& f_vr) const;
    // A_qd = softmax_{words}(relu(F_vq W_v) relu(F_t W_a)^T / sqrt(C)), rows over valid words.
    Tensor query_attention(const Tensor& f_vq, const Tensor& f_t,
                           const std::vector<unsigned char>& pad_mask) const;
    // F_q = A_qd relu(F_t W_t) + relu(F_vq W_v')
    Tensor generate_queries(const Tensor& f_vq, const Tensor& f_t, const Tensor& a_qd) const;

    QueryKind kind() const { return kind_; }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;

private:
    QueryKind kind_ = QueryKind::Qgm;
    int dim_ = 0;
    int nq_ = 0;
    int hw_ = 0;
    Linear conv1_, conv2_, conv3_;  // C -> C -> C -> nq, bias-carrying pointwise convs
    Tensor w_v_;                    // [HW, C]
    Tensor w_a_;                    // [C, C]
    Tensor w_t_;                    // [C, C]
    Tensor w_v_residual_;           // equals w_v_ when qgm.share_wv
    Tensor learnt_queries_;         // [nq, C] for QueryKind::Learnt
};

// a_i = column sums of A_qd; zero on padded words, sums to nq over valid ones.
Tensor global_word_importance(const Tensor& a_qd);

}  // namespace vlt
