#include "vlt/train.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "vlt/checkpoint.hpp"
#include "vlt/ops.hpp"

namespace vlt {

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamRegistry& params) {
    if (m_.empty()) {
        for (const auto& [name, t] : params) {
            m_.emplace_back(t.numel(), 0.0);
            v_.emplace_back(t.numel(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    for (const auto& [name, t] : params) {
        Tensor param = t;
        auto& m = m_[i];
        auto& v = v_[i];
        const bool has_grad = param.has_grad();
        double* p = param.data();
        for (std::size_t j = 0; j < param.numel(); ++j) {
            const double g = has_grad ? param.grad()[j] : 0.0;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            p[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
        param.zero_grad();
        ++i;
    }
}

namespace {

// Nearest-neighbor resample of a {0,1} target to the logits resolution.
Tensor fit_target(const Tensor& target, int h, int w) {
    if (target.dim(0) == h && target.dim(1) == w) return target;
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    const int th = target.dim(0), tw = target.dim(1);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            out[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)] =
                target.at({i * th / h, j * tw / w});
        }
    }
    return Tensor::from_data({h, w}, std::move(out));
}

int valid_length(const std::vector<int>& token_ids, int nt) {
    return std::min<int>(static_cast<int>(token_ids.size()), nt);
}

}  // namespace

StepLosses train_step(Model& model, const Dataset& ds, const TrainingBatch& batch, Adam& opt, const Config& cfg,
                      Rng& rng) {
    Tape tape;
    TapeScope scope(tape);

    struct Forwarded {
        const BatchMember* member;
        ModelOutput out;
    };
    std::vector<Forwarded> runs;
    auto run_member = [&](const BatchMember& m) {
        const DataSample& s = ds.samples()[static_cast<std::size_t>(m.sample_idx)];
        runs.push_back(Forwarded{&m, model.forward(ds.image(s), m.token_ids)});
    };
    run_member(batch.initial);
    for (const BatchMember& m : batch.others) run_member(m);

    const bool mcl_on = cfg.mcl_lambda > 0.0;
    const bool masking_on = mcl_on && cfg.mcl_mask_words && cfg.query_kind == QueryKind::Qgm;

    // Masked variants of the initial sample and its SISO partners, each drawn
    // from that sample's own importance distribution.
    std::vector<BatchMember> variants;
    const std::size_t original_count = runs.size();
    if (masking_on) {
        for (std::size_t r = 0; r < original_count; ++r) {
            const BatchMember& m = *runs[r].member;
            if (m.masked || m.tag != RelTag::Siso) continue;
            const int length = valid_length(m.token_ids, cfg.nt);
            if (length <= cfg.mcl_nm) continue;
            MaskOutcome masked = mask_expression(m.token_ids, runs[r].out.word_importance.values(), length,
                                                 cfg.mcl_nm, ds.vocab().mask_id(), rng);
            if (!masked.masked) continue;
            variants.push_back(BatchMember{m.sample_idx, RelTag::Siso, true, std::move(masked.token_ids)});
        }
        for (const BatchMember& m : variants) run_member(m);
    }

    // BCE averaged over every forwarded sample, originals and variants alike.
    Tensor bce_sum;
    for (const Forwarded& f : runs) {
        const DataSample& s = ds.samples()[static_cast<std::size_t>(f.member->sample_idx)];
        Tensor target = fit_target(ds.mask_tensor(s), f.out.logits.dim(0), f.out.logits.dim(1));
        Tensor loss = bce_with_logits(f.out.logits, target);
        bce_sum = bce_sum.defined() ? add(bce_sum, loss) : loss;
    }
    Tensor bce = scale(bce_sum, 1.0 / static_cast<double>(runs.size()));

    Tensor mcl = Tensor::scalar(0.0);
    if (mcl_on) {
        Tensor f_init = model.contrastive_feature(runs[0].out);
        std::vector<Tensor> positives, negatives;
        for (std::size_t r = 1; r < runs.size(); ++r) {
            const BatchMember& m = *runs[r].member;
            if (m.tag == RelTag::Siso) positives.push_back(model.contrastive_feature(runs[r].out));
            else if (m.tag == RelTag::Sido) negatives.push_back(model.contrastive_feature(runs[r].out));
        }
        mcl = contrastive_loss(f_init, positives, negatives, cfg.mcl_tau, cfg.mcl_denominator);
    }

    Tensor total = add(bce, scale(mcl, cfg.mcl_lambda));
    StepLosses losses;
    losses.bce = bce.value();
    losses.mcl = mcl.value();
    losses.total = total.value();
    losses.masked_variants = static_cast<int>(variants.size());
    if (!std::isfinite(losses.total)) {
        std::ostringstream ids;
        for (const Forwarded& f : runs) {
            const DataSample& s = ds.samples()[static_cast<std::size_t>(f.member->sample_idx)];
            ids << " (" << s.image_id << ',' << s.object_id << ',' << s.expression_id
                << (f.member->masked ? ",masked)" : ")");
        }
        throw std::runtime_error("train_step: non-finite loss; batch ids:" + ids.str());
    }

    tape.backward(total);
    opt.step(model.params());
    return losses;
}

void train_loop(Model& model, const Dataset& ds, const Config& cfg, const std::string& checkpoint_path,
                std::ostream& log) {
    Adam opt(cfg);
    const int n_so = siso_cap(cfg);
    const int n_do = sido_cap(cfg);
    for (int step = 0; step < cfg.steps; ++step) {
        Rng rng(Rng::mix(cfg.seed, 0xba7c4ULL, static_cast<std::uint64_t>(step)));
        const int initial_idx = rng.uniform_int(0, static_cast<int>(ds.size()) - 1);
        TrainingBatch batch = build_batch(ds, initial_idx, cfg.batch_size, n_so, n_do, rng);
        const StepLosses losses = train_step(model, ds, batch, opt, cfg, rng);
        log << step << '\t' << losses.bce << '\t' << losses.mcl << '\t' << losses.total << '\t' << opt.lr() << '\t'
            << cfg.seed << '\n';
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            save_checkpoint(checkpoint_path + ".step" + std::to_string(step + 1), model.params());
        }
    }
    save_checkpoint(checkpoint_path, model.params());
}

}  // namespace vlt
