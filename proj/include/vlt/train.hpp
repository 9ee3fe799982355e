#pragma once

#include <functional>
#include <iosfwd>

#include "vlt/batch.hpp"
#include "vlt/model.hpp"

namespace vlt {

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps);
    explicit Adam(const Config& cfg) : Adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) {}

    // Applies one update from the accumulated gradients, then clears them.
    void step(ParamRegistry& params);
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct StepLosses {
    double bce = 0.0;
    double mcl = 0.0;
    double total = 0.0;
    int masked_variants = 0;
};

// Forward + BCE over every batch member, masked contrastive loss when
// enabled, one optimizer step. Masked variants are created from the initial
// sample and its SISO partners using each sample's own word importances and
// the batch rng; they join both the BCE mean and the positive set.
StepLosses train_step(Model& model, const Dataset& ds, const TrainingBatch& batch, Adam& opt, const Config& cfg,
                      Rng& rng);

// One log line per step: step, bce, mcl, total, lr, seed (tab-separated).
// Saves the final checkpoint to checkpoint_path, plus intermediate
// "<path>.step<k>" files every cfg.checkpoint_every steps when nonzero.
void train_loop(Model& model, const Dataset& ds, const Config& cfg, const std::string& checkpoint_path,
                std::ostream& log);

}  // namespace vlt
