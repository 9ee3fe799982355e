#include "vlt/batch.hpp"

#include <algorithm>
#include <cmath>

#include "vlt/ops.hpp"

namespace vlt {

std::string to_string(RelTag t) {
    switch (t) {
        case RelTag::Siso: return "SISO";
        case RelTag::Sido: return "SIDO";
        case RelTag::Di: return "DI";
    }
    return "?";
}

RelTag classify_relationship(const DataSample& s, const DataSample& initial) {
    if (s.image_id != initial.image_id) return RelTag::Di;
    if (s.object_id != initial.object_id) return RelTag::Sido;
    return RelTag::Siso;
}

TrainingBatch build_batch(const Dataset& ds, int initial_idx, int batch_size, int n_so_cap, int n_do_cap,
                          Rng& rng) {
    if (batch_size < 1) throw std::invalid_argument("build_batch: batch_size must be >= 1");
    if (initial_idx < 0 || initial_idx >= static_cast<int>(ds.size())) {
        throw std::out_of_range("build_batch: initial index out of range");
    }
    const DataSample& init = ds.samples()[static_cast<std::size_t>(initial_idx)];

    std::vector<int> siso, sido, di;
    for (int idx : ds.of_object(init.image_id, init.object_id)) {
        if (idx != initial_idx) siso.push_back(idx);
    }
    for (int idx : ds.of_image(init.image_id)) {
        const DataSample& s = ds.samples()[static_cast<std::size_t>(idx)];
        if (s.object_id != init.object_id) sido.push_back(idx);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.samples()[i].image_id != init.image_id) di.push_back(static_cast<int>(i));
    }
    if (1 + static_cast<int>(siso.size() + sido.size() + di.size()) < batch_size) {
        throw std::invalid_argument("build_batch: dataset has only " +
                                    std::to_string(1 + siso.size() + sido.size() + di.size()) +
                                    " candidates for batch size " + std::to_string(batch_size));
    }
    rng.shuffle(siso);
    rng.shuffle(sido);
    rng.shuffle(di);

    TrainingBatch batch;
    batch.initial = BatchMember{initial_idx, RelTag::Siso, false, init.token_ids};

    const int take_siso = std::min<int>(n_so_cap, static_cast<int>(siso.size()));
    const int take_sido = std::min<int>(n_do_cap, static_cast<int>(sido.size()));
    std::size_t used_siso = 0, used_sido = 0, used_di = 0;
    auto push = [&](int idx, RelTag tag) {
        batch.others.push_back(BatchMember{idx, tag, false, ds.samples()[static_cast<std::size_t>(idx)].token_ids});
    };
    int remaining = batch_size - 1;
    for (; used_siso < static_cast<std::size_t>(take_siso) && remaining > 0; ++used_siso, --remaining) {
        push(siso[used_siso], RelTag::Siso);
    }
    for (; used_sido < static_cast<std::size_t>(take_sido) && remaining > 0; ++used_sido, --remaining) {
        push(sido[used_sido], RelTag::Sido);
    }
    for (; used_di < di.size() && remaining > 0; ++used_di, --remaining) {
        push(di[used_di], RelTag::Di);
    }
    // DI exhausted: spill into SIDO then SISO beyond their caps.
    for (; used_sido < sido.size() && remaining > 0; ++used_sido, --remaining) {
        push(sido[used_sido], RelTag::Sido);
    }
    for (; used_siso < siso.size() && remaining > 0; ++used_siso, --remaining) {
        push(siso[used_siso], RelTag::Siso);
    }
    return batch;
}

std::vector<double> masking_distribution(const std::vector<double>& importance, int length) {
    if (length < 1 || length > static_cast<int>(importance.size())) {
        throw std::invalid_argument("masking_distribution: bad length " + std::to_string(length));
    }
    double mx = importance[0];
    for (int i = 1; i < length; ++i) mx = std::max(mx, importance[static_cast<std::size_t>(i)]);
    std::vector<double> p(static_cast<std::size_t>(length));
    double z = 0.0;
    for (int i = 0; i < length; ++i) {
        p[static_cast<std::size_t>(i)] = std::exp(importance[static_cast<std::size_t>(i)] - mx);
        z += p[static_cast<std::size_t>(i)];
    }
    for (double& v : p) v /= z;
    return p;
}

MaskOutcome mask_expression(const std::vector<int>& token_ids, const std::vector<double>& importance, int length,
                            int n_m, int mask_id, Rng& rng) {
    MaskOutcome out;
    out.token_ids = token_ids;
    if (length <= n_m) return out;  // sentence too short, unchanged
    const std::vector<double> p = masking_distribution(importance, length);
    out.word_index = rng.sample_discrete(p);
    out.token_ids[static_cast<std::size_t>(out.word_index)] = mask_id;
    out.masked = true;
    return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.rank() != 1) {
        throw std::invalid_argument("cosine_similarity: expects equal-shape 1-D vectors");
    }
    Tensor na = sqrt(sum(mul(a, a)));
    Tensor nb = sqrt(sum(mul(b, b)));
    if (na.value() == 0.0 || nb.value() == 0.0) {
        throw std::runtime_error("cosine_similarity: zero-norm feature");
    }
    return div(sum(mul(a, b)), mul(na, nb));
}

Tensor contrastive_loss(const Tensor& f_init, const std::vector<Tensor>& positives,
                        const std::vector<Tensor>& negatives, double tau, MclDenominator denom_mode) {
    if (positives.empty()) return Tensor::scalar(0.0);
    const double inv_tau = 1.0 / tau;

    std::vector<Tensor> pos_exp, neg_exp;
    pos_exp.reserve(positives.size());
    for (const Tensor& p : positives) pos_exp.push_back(exp(scale(cosine_similarity(p, f_init), inv_tau)));
    for (const Tensor& n : negatives) neg_exp.push_back(exp(scale(cosine_similarity(n, f_init), inv_tau)));

    Tensor neg_sum;
    for (const Tensor& e : neg_exp) neg_sum = neg_sum.defined() ? add(neg_sum, e) : e;
    Tensor all_pos_sum;
    if (denom_mode == MclDenominator::All) {
        for (const Tensor& e : pos_exp) all_pos_sum = all_pos_sum.defined() ? add(all_pos_sum, e) : e;
    }

    Tensor loss;
    for (const Tensor& e : pos_exp) {
        Tensor denom = denom_mode == MclDenominator::Current ? e : all_pos_sum;
        if (neg_sum.defined()) denom = add(denom, neg_sum);
        Tensor term = log(div(e, denom));
        loss = loss.defined() ? add(loss, term) : term;
    }
    return scale(loss, -1.0 / static_cast<double>(positives.size()));
}

}  // namespace vlt
