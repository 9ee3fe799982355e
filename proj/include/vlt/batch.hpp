#pragma once

#include "vlt/config.hpp"
#include "vlt/data.hpp"

namespace vlt {

/// Inter-sample relationship relative to a batch's initial sample.
enum class RelTag { Siso, Sido, Di };

std::string to_string(RelTag t);
RelTag classify_relationship(const DataSample& s, const DataSample& initial);

struct BatchMember {
    int sample_idx = -1;
    RelTag tag = RelTag::Di;
    bool masked = false;              // true for word-masked variants
    std::vector<int> token_ids;       // tokens actually fed to the model
};

struct TrainingBatch {
    BatchMember initial;
    std::vector<BatchMember> others;  // SISO picks, then SIDO, then DI
};

// SISO cap: unrestricted by default (all available partners fit).
inline int siso_cap(const Config& cfg) { return cfg.mcl_nso < 0 ? cfg.batch_size : cfg.mcl_nso; }
// SIDO cap: 10% of the batch, rounded down.
inline int sido_cap(const Config& cfg) { return cfg.mcl_ndo < 0 ? cfg.batch_size / 10 : cfg.mcl_ndo; }

// Fills SISO first (up to n_so_cap), then SIDO (up to n_do_cap), then DI.
// Unfillable DI slots fall back to additional SIDO then SISO picks; throws
// when the dataset cannot fill the batch at all.
TrainingBatch build_batch(const Dataset& ds, int initial_idx, int batch_size, int n_so_cap, int n_do_cap,
                          Rng& rng);

// p_m over the first `length` words: softmax of the importance weights.
std::vector<double> masking_distribution(const std::vector<double>& importance, int length);

struct MaskOutcome {
    std::vector<int> token_ids;
    bool masked = false;
    int word_index = -1;
};

// Replaces exactly one word (drawn from p_m) by mask_id when the sentence is
// longer than n_m words; otherwise returns the tokens unchanged.
MaskOutcome mask_expression(const std::vector<int>& token_ids, const std::vector<double>& importance, int length,
                            int n_m, int mask_id, Rng& rng);

// Cosine similarity of two 1-D feature vectors; zero-norm input is an error.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// InfoNCE-style loss: mean over positives of -log(exp(cos+/tau) / denom)
// where denom sums the negatives plus (per `denom_mode`) the current positive
// or all positives. Empty positives contribute 0.
Tensor contrastive_loss(const Tensor& f_init, const std::vector<Tensor>& positives,
                        const std::vector<Tensor>& negatives, double tau, MclDenominator denom_mode);

}  // namespace vlt
