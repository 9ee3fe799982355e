#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vlt/common.hpp"
#include "vlt/ops.hpp"
#include "vlt/tensor.hpp"

namespace vlt {

/// Ordered name -> parameter map. Iteration order is registration order, which
/// makes optimizer updates and checkpoint layout deterministic.
class ParamRegistry {
public:
    void add(const std::string& name, const Tensor& t);
    const Tensor& find(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return items_.size(); }
    std::size_t total_elements() const;

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

Tensor uniform_init(Rng& rng, Shape shape, double lo, double hi);
// U(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor fan_in_init(Rng& rng, Shape shape, int fan_in);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out], undefined when bias-free

    Linear() = default;
    Linear(Rng& rng, int in, int out, bool with_bias = true);

    Tensor forward(const Tensor& x) const;  // x: [n, in]
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct Conv {
    Tensor weight;  // [k, k, cin, cout]
    Tensor bias;    // [cout]
    int stride = 1;

    Conv() = default;
    Conv(Rng& rng, int k, int cin, int cout, int stride_, bool with_bias = true);

    Tensor forward(const Tensor& x) const;  // x: [H, W, cin]
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct LayerNorm {
    Tensor gamma;  // [c]
    Tensor beta;   // [c]
    double eps = 1e-5;

    LayerNorm() = default;
    explicit LayerNorm(int c);

    Tensor forward(const Tensor& x) const;  // x: [n, c], normalized per row
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

/// Single gated recurrent cell (update/reset gates, tanh candidate).
struct GruCell {
    Tensor wz, wr, wn;      // [in, c]
    Tensor uz, ur, un;      // [c, c]
    Tensor bz, br, bn, bhn; // [c]

    GruCell() = default;
    GruCell(Rng& rng, int in, int c);

    Tensor step(const Tensor& x, const Tensor& h) const;  // x: [1,in], h: [1,c] -> [1,c]
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Fixed 2-D sine/cosine table, [h*w, c]. First c/2 channels encode the row
// index, the rest the column index, each as interleaved sin/cos pairs on a
// geometric frequency ladder. c must be divisible by 4.
Tensor sine_positional_2d(int h, int w, int c);

}  // namespace vlt
