#include "vlt/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vlt {

void ParamRegistry::add(const std::string& name, const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument("ParamRegistry: undefined tensor for '" + name + "'");
    if (contains(name)) throw std::invalid_argument("ParamRegistry: duplicate parameter '" + name + "'");
    items_.emplace_back(name, t);
}

const Tensor& ParamRegistry::find(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw std::out_of_range("ParamRegistry: no parameter '" + name + "'");
}

bool ParamRegistry::contains(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return true;
    }
    return false;
}

std::size_t ParamRegistry::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

Tensor uniform_init(Rng& rng, Shape shape, double lo, double hi) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    Tensor t = Tensor::from_data(std::move(shape), std::move(v));
    t.set_requires_grad(true);
    return t;
}

Tensor fan_in_init(Rng& rng, Shape shape, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return uniform_init(rng, std::move(shape), -bound, bound);
}

Linear::Linear(Rng& rng, int in, int out, bool with_bias) {
    weight = fan_in_init(rng, {in, out}, in);
    if (with_bias) bias = fan_in_init(rng, {out}, in);
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    if (bias.defined()) y = add(y, bias);
    return y;
}

void Linear::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".weight", weight);
    if (bias.defined()) reg.add(prefix + ".bias", bias);
}

Conv::Conv(Rng& rng, int k, int cin, int cout, int stride_, bool with_bias) : stride(stride_) {
    weight = fan_in_init(rng, {k, k, cin, cout}, k * k * cin);
    if (with_bias) bias = fan_in_init(rng, {cout}, k * k * cin);
}

Tensor Conv::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride); }

void Conv::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".weight", weight);
    if (bias.defined()) reg.add(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(int c) {
    gamma = Tensor::from_data({c}, std::vector<double>(static_cast<std::size_t>(c), 1.0));
    gamma.set_requires_grad(true);
    beta = Tensor::zeros({c}, true);
}

Tensor LayerNorm::forward(const Tensor& x) const {
    Tensor mu = mean(x, 1, /*keepdim=*/true);
    Tensor centered = sub(x, mu);
    Tensor var = mean(mul(centered, centered), 1, /*keepdim=*/true);
    Tensor normed = div(centered, sqrt(add_scalar(var, eps)));
    return add(mul(normed, gamma), beta);
}

void LayerNorm::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
}

GruCell::GruCell(Rng& rng, int in, int c) {
    wz = fan_in_init(rng, {in, c}, in);
    wr = fan_in_init(rng, {in, c}, in);
    wn = fan_in_init(rng, {in, c}, in);
    uz = fan_in_init(rng, {c, c}, c);
    ur = fan_in_init(rng, {c, c}, c);
    un = fan_in_init(rng, {c, c}, c);
    bz = fan_in_init(rng, {c}, c);
    br = fan_in_init(rng, {c}, c);
    bn = fan_in_init(rng, {c}, c);
    bhn = fan_in_init(rng, {c}, c);
}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
    Tensor z = sigmoid(add(add(matmul(x, wz), matmul(h, uz)), bz));
    Tensor r = sigmoid(add(add(matmul(x, wr), matmul(h, ur)), br));
    Tensor cand = tanh(add(add(matmul(x, wn), bn), mul(r, add(matmul(h, un), bhn))));
    // h' = cand + z * (h - cand)
    return add(cand, mul(z, sub(h, cand)));
}

void GruCell::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".wz", wz);
    reg.add(prefix + ".wr", wr);
    reg.add(prefix + ".wn", wn);
    reg.add(prefix + ".uz", uz);
    reg.add(prefix + ".ur", ur);
    reg.add(prefix + ".un", un);
    reg.add(prefix + ".bz", bz);
    reg.add(prefix + ".br", br);
    reg.add(prefix + ".bn", bn);
    reg.add(prefix + ".bhn", bhn);
}

Tensor sine_positional_2d(int h, int w, int c) {
    if (c % 4 != 0) throw std::invalid_argument("sine_positional_2d: channels must be divisible by 4");
    const int half = c / 2;        // channels per spatial axis
    const int pairs = half / 2;    // sin/cos pairs per axis
    std::vector<double> table(static_cast<std::size_t>(h) * w * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* row = table.data() + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c;
            for (int k = 0; k < pairs; ++k) {
                const double freq = std::pow(10000.0, -2.0 * k / half);
                row[2 * k] = std::sin(y * freq);
                row[2 * k + 1] = std::cos(y * freq);
                row[half + 2 * k] = std::sin(x * freq);
                row[half + 2 * k + 1] = std::cos(x * freq);
            }
        }
    }
    return Tensor::from_data({h * w, c}, std::move(table));
}

}  // namespace vlt
