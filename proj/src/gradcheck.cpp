#include "vlt/gradcheck.hpp"

#include <cmath>

#include "vlt/data.hpp"
#include "vlt/model.hpp"
#include "vlt/ops.hpp"

namespace vlt {

GradCheckResult check_gradients(const ParamRegistry& params, const std::function<double()>& loss_fn,
                                double step, double rel_tol, double abs_floor) {
    GradCheckResult res;
    for (const auto& [name, t] : params) {
        Tensor param = t;
        const bool has_grad = param.has_grad();
        for (std::size_t j = 0; j < param.numel(); ++j) {
            const double analytic = has_grad ? param.grad()[j] : 0.0;
            const double saved = param.data()[j];
            param.data()[j] = saved + step;
            const double up = loss_fn();
            param.data()[j] = saved - step;
            const double down = loss_fn();
            param.data()[j] = saved;
            const double fd = (up - down) / (2.0 * step);

            const double err = std::abs(analytic - fd);
            const double scale = std::max(std::abs(analytic), std::abs(fd));
            const double rel = scale > 0.0 ? err / scale : 0.0;
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.total;
            if (err <= abs_floor || rel < rel_tol) {
                ++res.rel_pass;
            } else {
                res.max_abs_err_of_failures = std::max(res.max_abs_err_of_failures, err);
                if (res.failures.size() < 32) {
                    res.failures.push_back(name + "[" + std::to_string(j) + "]: analytic=" + std::to_string(analytic) +
                                           ", fd=" + std::to_string(fd));
                }
            }
        }
    }
    return res;
}

GradCheckResult run_model_grad_check(std::uint64_t seed) {
    Config cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.nq = 2;
    cfg.nt = 5;
    cfg.seed = seed;

    Vocabulary vocab = Vocabulary::build(template_vocabulary());
    const int img_side = 2 * ImageEncoder::kTotalStride;  // 2x2 feature grid
    Model model(cfg, vocab.size(), img_side, img_side);

    Rng rng(Rng::mix(seed, 0x6c6fdULL));
    std::vector<double> img_data(static_cast<std::size_t>(img_side) * img_side * 3);
    for (double& v : img_data) v = rng.uniform();
    const Tensor image = Tensor::from_data({img_side, img_side, 3}, std::move(img_data));
    std::vector<double> target_data(static_cast<std::size_t>(img_side) * img_side);
    for (double& v : target_data) v = rng.uniform_int(0, 1);
    const Tensor target = Tensor::from_data({img_side, img_side}, std::move(target_data));
    const std::vector<int> tokens = {vocab.id_of("the"), vocab.id_of("red"), vocab.id_of("circle")};

    auto loss_value = [&]() {
        const ModelOutput out = model.forward(image, tokens);
        return bce_with_logits(out.logits, target).value();
    };

    {
        Tape tape;
        TapeScope scope(tape);
        const ModelOutput out = model.forward(image, tokens);
        tape.backward(bce_with_logits(out.logits, target));
    }
    GradCheckResult res = check_gradients(model.params(), loss_value);
    for (const auto& [name, t] : model.params()) {
        Tensor param = t;
        param.zero_grad();
    }
    return res;
}

}  // namespace vlt
