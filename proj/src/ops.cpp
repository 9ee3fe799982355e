#include "vlt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vlt {

namespace {

bool want_grad(const Tensor& t) {
    Tape* tape = Tape::current();
    return tape && (t.requires_grad() || tape->tracked(t.raw()));
}

void record(std::vector<Tensor> inputs, const Tensor& output, std::function<void()> backward) {
    std::vector<std::shared_ptr<TensorData>> in;
    in.reserve(inputs.size());
    for (const auto& t : inputs) in.push_back(t.ptr());
    Tape::current()->record(std::move(in), output.ptr(), std::move(backward));
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
        st[i] = st[i + 1] * static_cast<std::size_t>(s[i + 1]);
    }
    return st;
}

// dst = a(k) b(k) contraction with k ascending; caller guarantees shapes.
void matmul_kernel(const double* a, const double* b, double* c, int m, int k, int n) {
    std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c += a^T b and c += a b^T helpers for backward rules.
void matmul_acc_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
    // a: [m,k] interpreted transposed -> result [k,n] from a^T[k,m] x b[m,n]
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_acc_a_bt(const double* a, const double* b, double* c, int m, int k, int n) {
    // result [m,n] += a[m,k] x b^T where b: [n,k]
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
    const int r = std::max(ra, rb);
    Shape out(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const int da = i < r - ra ? 1 : a[static_cast<std::size_t>(i - (r - ra))];
        const int db = i < r - rb ? 1 : b[static_cast<std::size_t>(i - (r - rb))];
        if (da != db && da != 1 && db != 1) {
            throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
        }
        out[static_cast<std::size_t>(i)] = std::max(da, db);
    }
    return out;
}

// Maps flat indices of the broadcast result onto flat indices of an operand.
struct BroadcastMap {
    std::vector<std::size_t> strides;  // per result axis; 0 where the operand has size 1
    Shape result;

    BroadcastMap(const Shape& operand, const Shape& result_shape) : result(result_shape) {
        const int r = static_cast<int>(result_shape.size());
        const int ro = static_cast<int>(operand.size());
        auto ost = row_major_strides(operand);
        strides.assign(static_cast<std::size_t>(r), 0);
        for (int i = 0; i < r; ++i) {
            const int oi = i - (r - ro);
            if (oi < 0) continue;
            const int d = operand[static_cast<std::size_t>(oi)];
            strides[static_cast<std::size_t>(i)] = (d == 1) ? 0 : ost[static_cast<std::size_t>(oi)];
        }
    }

    std::size_t operator()(std::size_t flat) const {
        std::size_t off = 0;
        for (int i = static_cast<int>(result.size()) - 1; i >= 0; --i) {
            const std::size_t d = static_cast<std::size_t>(result[static_cast<std::size_t>(i)]);
            off += (flat % d) * strides[static_cast<std::size_t>(i)];
            flat /= d;
        }
        return off;
    }
};

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, double (*fwd)(double, double),
                 void (*bwd)(double av, double bv, double g, double& da, double& db)) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const std::size_t n = shape_numel(out_shape);
    BroadcastMap ma(a.shape(), out_shape), mb(b.shape(), out_shape);
    std::vector<double> out(n);
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[ma(i)], pb[mb(i)]);
    Tensor result = Tensor::from_data(out_shape, std::move(out));
    check_finite(result, name);
    if (want_grad(a) || want_grad(b)) {
        const bool ga = want_grad(a), gb = want_grad(b);
        record({a, b}, result, [=]() {
            auto* ra = a.raw();
            auto* rb = b.raw();
            auto* rr = result.raw();
            if (ga) ensure_grad(ra);
            if (gb) ensure_grad(rb);
            const std::size_t count = rr->data.size();
            for (std::size_t i = 0; i < count; ++i) {
                const double g = rr->grad[i];
                if (g == 0.0) continue;
                double da = 0.0, db = 0.0;
                bwd(ra->data[ma(i)], rb->data[mb(i)], g, da, db);
                if (ga) ra->grad[ma(i)] += da;
                if (gb) rb->grad[mb(i)] += db;
            }
        });
    }
    return result;
}

Tensor unary_op(const Tensor& x, const char* name, double (*fwd)(double),
                double (*dydx_from)(double xv, double yv)) {
    std::vector<double> out(x.numel());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(px[i]);
    Tensor result = Tensor::from_data(x.shape(), std::move(out));
    check_finite(result, name);
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (std::size_t i = 0; i < rr->data.size(); ++i) {
                rx->grad[i] += rr->grad[i] * dydx_from(rx->data[i], rr->data[i]);
            }
        });
    }
    return result;
}

void softmax_slices(const double* x, double* y, int outer, int axis_len, int inner,
                    const unsigned char* valid) {
    for (int o = 0; o < outer; ++o) {
        for (int in = 0; in < inner; ++in) {
            const std::size_t base = static_cast<std::size_t>(o) * axis_len * inner + static_cast<std::size_t>(in);
            double mx = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < axis_len; ++a) {
                if (valid && !valid[a]) continue;
                mx = std::max(mx, x[base + static_cast<std::size_t>(a) * inner]);
            }
            double denom = 0.0;
            for (int a = 0; a < axis_len; ++a) {
                const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                if (valid && !valid[a]) {
                    y[idx] = 0.0;
                    continue;
                }
                y[idx] = std::exp(x[idx] - mx);
                denom += y[idx];
            }
            for (int a = 0; a < axis_len; ++a) {
                if (valid && !valid[a]) continue;
                y[base + static_cast<std::size_t>(a) * inner] /= denom;
            }
        }
    }
}

Tensor softmax_impl(const Tensor& x, int axis, const std::vector<unsigned char>* valid) {
    if (axis < 0 || axis >= x.rank()) {
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                                    shape_str(x.shape()));
    }
    const int axis_len = x.dim(axis);
    if (valid) {
        if (static_cast<int>(valid->size()) != axis_len) {
            throw std::invalid_argument("softmax_masked: mask length does not match axis size");
        }
        bool any = false;
        for (unsigned char v : *valid) any = any || v;
        if (!any) throw std::invalid_argument("softmax_masked: no valid positions along axis");
    }
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    std::vector<double> out(x.numel());
    softmax_slices(x.data(), out.data(), outer, axis_len, inner, valid ? valid->data() : nullptr);
    Tensor result = Tensor::from_data(x.shape(), std::move(out));
    check_finite(result, "softmax");
    if (want_grad(x)) {
        std::vector<unsigned char> mask = valid ? *valid : std::vector<unsigned char>();
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            const unsigned char* m = mask.empty() ? nullptr : mask.data();
            for (int o = 0; o < outer; ++o) {
                for (int in = 0; in < inner; ++in) {
                    const std::size_t base =
                        static_cast<std::size_t>(o) * axis_len * inner + static_cast<std::size_t>(in);
                    double dot = 0.0;
                    for (int a = 0; a < axis_len; ++a) {
                        if (m && !m[a]) continue;
                        const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                        dot += rr->grad[idx] * rr->data[idx];
                    }
                    for (int a = 0; a < axis_len; ++a) {
                        if (m && !m[a]) continue;
                        const std::size_t idx = base + static_cast<std::size_t>(a) * inner;
                        rx->grad[idx] += rr->data[idx] * (rr->grad[idx] - dot);
                    }
                }
            }
        });
    }
    return result;
}

Tensor reduce_impl(const Tensor& x, int axis, bool keepdim, bool take_mean, const char* name) {
    if (axis < 0 || axis >= x.rank()) {
        throw std::invalid_argument(std::string(name) + ": axis " + std::to_string(axis) + " invalid for shape " +
                                    shape_str(x.shape()));
    }
    const int axis_len = x.dim(axis);
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i) {
        if (i == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(x.dim(i));
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);

    const double factor = take_mean ? 1.0 / axis_len : 1.0;
    std::vector<double> out(static_cast<std::size_t>(outer) * inner, 0.0);
    const double* px = x.data();
    for (int o = 0; o < outer; ++o) {
        for (int a = 0; a < axis_len; ++a) {
            const std::size_t base = static_cast<std::size_t>(o) * axis_len * inner + static_cast<std::size_t>(a) * inner;
            for (int in = 0; in < inner; ++in) {
                out[static_cast<std::size_t>(o) * inner + static_cast<std::size_t>(in)] += px[base + static_cast<std::size_t>(in)];
            }
        }
    }
    if (take_mean) {
        for (double& v : out) v *= factor;
    }
    Tensor result = Tensor::from_data(out_shape, std::move(out));
    check_finite(result, name);
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (int o = 0; o < outer; ++o) {
                for (int a = 0; a < axis_len; ++a) {
                    const std::size_t base =
                        static_cast<std::size_t>(o) * axis_len * inner + static_cast<std::size_t>(a) * inner;
                    for (int in = 0; in < inner; ++in) {
                        rx->grad[base + static_cast<std::size_t>(in)] +=
                            factor * rr->grad[static_cast<std::size_t>(o) * inner + static_cast<std::size_t>(in)];
                    }
                }
            }
        });
    }
    return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m) * n);
    matmul_kernel(a.data(), b.data(), out.data(), m, k, n);
    Tensor result = Tensor::from_data({m, n}, std::move(out));
    check_finite(result, "matmul");
    const bool ga = want_grad(a), gb = want_grad(b);
    if (ga || gb) {
        record({a, b}, result, [=]() {
            auto* ra = a.raw();
            auto* rb = b.raw();
            auto* rr = result.raw();
            if (ga) {
                ensure_grad(ra);
                matmul_acc_a_bt(rr->grad.data(), rb->data.data(), ra->grad.data(), m, n, k);
            }
            if (gb) {
                ensure_grad(rb);
                matmul_acc_at_b(ra->data.data(), rr->grad.data(), rb->grad.data(), m, k, n);
            }
        });
    }
    return result;
}

Tensor softmax(const Tensor& x, int axis) { return softmax_impl(x, axis, nullptr); }

Tensor softmax_masked(const Tensor& x, int axis, const std::vector<unsigned char>& valid) {
    return softmax_impl(x, axis, &valid);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

Tensor neg(const Tensor& x) {
    return unary_op(
        x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * c;
    Tensor result = Tensor::from_data(x.shape(), std::move(out));
    check_finite(result, "scale");
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (std::size_t i = 0; i < rr->data.size(); ++i) rx->grad[i] += c * rr->grad[i];
        });
    }
    return result;
}

Tensor add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    const double* px = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] + c;
    Tensor result = Tensor::from_data(x.shape(), std::move(out));
    check_finite(result, "add_scalar");
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (std::size_t i = 0; i < rr->data.size(); ++i) rx->grad[i] += rr->grad[i];
        });
    }
    return result;
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double yv) { return yv * (1.0 - yv); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double yv) { return 1.0 - yv * yv; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        x, "exp", [](double v) { return std::exp(v); }, [](double, double yv) { return yv; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        x, "log", [](double v) { return std::log(v); }, [](double xv, double) { return 1.0 / xv; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(
        x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double yv) { return 0.5 / yv; });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor result = Tensor::from_data({1}, {acc});
    check_finite(result, "sum");
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            const double g = rr->grad[0];
            for (std::size_t i = 0; i < rx->data.size(); ++i) rx->grad[i] += g;
        });
    }
    return result;
}

Tensor sum(const Tensor& x, int axis, bool keepdim) { return reduce_impl(x, axis, keepdim, false, "sum"); }

Tensor mean(const Tensor& x) {
    const double n = static_cast<double>(x.numel());
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor result = Tensor::from_data({1}, {acc / n});
    check_finite(result, "mean");
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            const double g = rr->grad[0] / n;
            for (std::size_t i = 0; i < rx->data.size(); ++i) rx->grad[i] += g;
        });
    }
    return result;
}

Tensor mean(const Tensor& x, int axis, bool keepdim) { return reduce_impl(x, axis, keepdim, true, "mean"); }

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose: expects rank-2 tensor, got " + shape_str(x.shape()));
    const int m = x.dim(0), n = x.dim(1);
    std::vector<double> out(x.numel());
    const double* px = x.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j) * m + static_cast<std::size_t>(i)] =
                px[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
        }
    }
    Tensor result = Tensor::from_data({n, m}, std::move(out));
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    rx->grad[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] +=
                        rr->grad[static_cast<std::size_t>(j) * m + static_cast<std::size_t>(i)];
                }
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor result = Tensor::from_data(std::move(shape), x.values());
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (std::size_t i = 0; i < rr->data.size(); ++i) rx->grad[i] += rr->grad[i];
        });
    }
    return result;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    const Shape out_shape = broadcast_shape(x.shape(), shape);
    if (out_shape != shape) {
        throw std::invalid_argument("broadcast_to: cannot broadcast " + shape_str(x.shape()) + " to " +
                                    shape_str(shape));
    }
    BroadcastMap map(x.shape(), shape);
    const std::size_t n = shape_numel(shape);
    std::vector<double> out(n);
    const double* px = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = px[map(i)];
    Tensor result = Tensor::from_data(shape, std::move(out));
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (std::size_t i = 0; i < rr->data.size(); ++i) rx->grad[map(i)] += rr->grad[i];
        });
    }
    return result;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Tensor& first = parts.front();
    if (axis < 0 || axis >= first.rank()) {
        throw std::invalid_argument("concat: axis " + std::to_string(axis) + " invalid for shape " +
                                    shape_str(first.shape()));
    }
    Shape out_shape = first.shape();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const Tensor& t = parts[p];
        if (t.rank() != first.rank()) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < first.rank(); ++i) {
            if (i == axis) continue;
            if (t.dim(i) != first.dim(i)) {
                throw std::invalid_argument("concat: shapes " + shape_str(first.shape()) + " and " +
                                            shape_str(t.shape()) + " differ off-axis");
            }
        }
        out_shape[static_cast<std::size_t>(axis)] += t.dim(axis);
    }

    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= first.dim(i);
    for (int i = axis + 1; i < first.rank(); ++i) inner *= first.dim(i);
    const int total_axis = out_shape[static_cast<std::size_t>(axis)];

    std::vector<double> out(shape_numel(out_shape));
    int offset = 0;
    for (const Tensor& t : parts) {
        const int len = t.dim(axis);
        const double* pt = t.data();
        for (int o = 0; o < outer; ++o) {
            for (int a = 0; a < len; ++a) {
                const std::size_t src = (static_cast<std::size_t>(o) * len + static_cast<std::size_t>(a)) * inner;
                const std::size_t dst =
                    (static_cast<std::size_t>(o) * total_axis + static_cast<std::size_t>(offset + a)) * inner;
                std::copy(pt + src, pt + src + inner, out.begin() + static_cast<std::ptrdiff_t>(dst));
            }
        }
        offset += len;
    }
    Tensor result = Tensor::from_data(out_shape, std::move(out));

    bool any_grad = false;
    for (const Tensor& t : parts) any_grad = any_grad || want_grad(t);
    if (any_grad) {
        std::vector<bool> grads;
        for (const Tensor& t : parts) grads.push_back(want_grad(t));
        record(parts, result, [=]() {
            auto* rr = result.raw();
            int off = 0;
            for (std::size_t p = 0; p < parts.size(); ++p) {
                const Tensor& t = parts[p];
                const int len = t.dim(axis);
                if (grads[p]) {
                    auto* rt = t.raw();
                    ensure_grad(rt);
                    for (int o = 0; o < outer; ++o) {
                        for (int a = 0; a < len; ++a) {
                            const std::size_t src =
                                (static_cast<std::size_t>(o) * total_axis + static_cast<std::size_t>(off + a)) * inner;
                            const std::size_t dst =
                                (static_cast<std::size_t>(o) * len + static_cast<std::size_t>(a)) * inner;
                            for (int in = 0; in < inner; ++in) {
                                rt->grad[dst + static_cast<std::size_t>(in)] += rr->grad[src + static_cast<std::size_t>(in)];
                            }
                        }
                    }
                }
                off += len;
            }
        });
    }
    return result;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    if (axis < 0 || axis >= x.rank()) {
        throw std::invalid_argument("slice: axis " + std::to_string(axis) + " invalid for shape " +
                                    shape_str(x.shape()));
    }
    if (start < 0 || len <= 0 || start + len > x.dim(axis)) {
        throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                    ") invalid for axis of size " + std::to_string(x.dim(axis)));
    }
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int axis_len = x.dim(axis);

    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    std::vector<double> out(shape_numel(out_shape));
    const double* px = x.data();
    for (int o = 0; o < outer; ++o) {
        for (int a = 0; a < len; ++a) {
            const std::size_t src =
                (static_cast<std::size_t>(o) * axis_len + static_cast<std::size_t>(start + a)) * inner;
            const std::size_t dst = (static_cast<std::size_t>(o) * len + static_cast<std::size_t>(a)) * inner;
            std::copy(px + src, px + src + inner, out.begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    Tensor result = Tensor::from_data(out_shape, std::move(out));
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (int o = 0; o < outer; ++o) {
                for (int a = 0; a < len; ++a) {
                    const std::size_t dst =
                        (static_cast<std::size_t>(o) * axis_len + static_cast<std::size_t>(start + a)) * inner;
                    const std::size_t src = (static_cast<std::size_t>(o) * len + static_cast<std::size_t>(a)) * inner;
                    for (int in = 0; in < inner; ++in) {
                        rx->grad[dst + static_cast<std::size_t>(in)] += rr->grad[src + static_cast<std::size_t>(in)];
                    }
                }
            }
        });
    }
    return result;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw std::invalid_argument("gather_rows: table must be rank-2");
    const int rows = table.dim(0), cols = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw std::out_of_range("gather_rows: id " + std::to_string(id) + " outside table of " +
                                    std::to_string(rows) + " rows");
        }
    }
    if (ids.empty()) throw std::invalid_argument("gather_rows: empty id list");
    std::vector<double> out(ids.size() * static_cast<std::size_t>(cols));
    const double* pt = table.data();
    for (std::size_t r = 0; r < ids.size(); ++r) {
        std::copy(pt + static_cast<std::size_t>(ids[r]) * cols, pt + (static_cast<std::size_t>(ids[r]) + 1) * cols,
                  out.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(cols)));
    }
    Tensor result = Tensor::from_data({static_cast<int>(ids.size()), cols}, std::move(out));
    if (want_grad(table)) {
        record({table}, result, [=]() {
            auto* rt = table.raw();
            auto* rr = result.raw();
            ensure_grad(rt);
            for (std::size_t r = 0; r < ids.size(); ++r) {
                for (int c = 0; c < cols; ++c) {
                    rt->grad[static_cast<std::size_t>(ids[r]) * cols + static_cast<std::size_t>(c)] +=
                        rr->grad[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
                }
            }
        });
    }
    return result;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
    if (x.rank() != 3 || w.rank() != 4) {
        throw std::invalid_argument("conv2d: expects x[H,W,Cin], w[kh,kw,Cin,Cout]");
    }
    const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const int kh = w.dim(0), kw = w.dim(1), wcin = w.dim(2), cout = w.dim(3);
    if (cin != wcin) {
        throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                    shape_str(w.shape()));
    }
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel sizes must be odd");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
        throw std::invalid_argument("conv2d: bias shape must be [Cout]");
    }
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const int oh = (h + 2 * ph - kh) / stride + 1;
    const int ow = (wd + 2 * pw - kw) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(oh) * ow * cout, 0.0);
    const double* px = x.data();
    const double* pw_ = w.data();
    auto xat = [&](int i, int j, int c) -> double {
        return px[(static_cast<std::size_t>(i) * wd + static_cast<std::size_t>(j)) * cin + static_cast<std::size_t>(c)];
    };
    for (int oi = 0; oi < oh; ++oi) {
        for (int oj = 0; oj < ow; ++oj) {
            double* orow = out.data() + (static_cast<std::size_t>(oi) * ow + static_cast<std::size_t>(oj)) * cout;
            for (int ki = 0; ki < kh; ++ki) {
                const int ii = oi * stride + ki - ph;
                if (ii < 0 || ii >= h) continue;
                for (int kj = 0; kj < kw; ++kj) {
                    const int jj = oj * stride + kj - pw;
                    if (jj < 0 || jj >= wd) continue;
                    const double* wrow =
                        pw_ + ((static_cast<std::size_t>(ki) * kw + static_cast<std::size_t>(kj)) * cin) * cout;
                    for (int c = 0; c < cin; ++c) {
                        const double xv = xat(ii, jj, c);
                        if (xv == 0.0) continue;
                        const double* wc = wrow + static_cast<std::size_t>(c) * cout;
                        for (int oc = 0; oc < cout; ++oc) orow[oc] += xv * wc[oc];
                    }
                }
            }
            if (bias.defined()) {
                const double* pb = bias.data();
                for (int oc = 0; oc < cout; ++oc) orow[oc] += pb[oc];
            }
        }
    }
    Tensor result = Tensor::from_data({oh, ow, cout}, std::move(out));
    check_finite(result, "conv2d");

    const bool gx = want_grad(x), gw = want_grad(w), gb = bias.defined() && want_grad(bias);
    if (gx || gw || gb) {
        std::vector<Tensor> ins = {x, w};
        if (bias.defined()) ins.push_back(bias);
        record(ins, result, [=]() {
            auto* rx = x.raw();
            auto* rw = w.raw();
            auto* rr = result.raw();
            if (gx) ensure_grad(rx);
            if (gw) ensure_grad(rw);
            if (gb) ensure_grad(bias.raw());
            for (int oi = 0; oi < oh; ++oi) {
                for (int oj = 0; oj < ow; ++oj) {
                    const double* gout =
                        rr->grad.data() + (static_cast<std::size_t>(oi) * ow + static_cast<std::size_t>(oj)) * cout;
                    if (gb) {
                        for (int oc = 0; oc < cout; ++oc) bias.raw()->grad[static_cast<std::size_t>(oc)] += gout[oc];
                    }
                    for (int ki = 0; ki < kh; ++ki) {
                        const int ii = oi * stride + ki - ph;
                        if (ii < 0 || ii >= h) continue;
                        for (int kj = 0; kj < kw; ++kj) {
                            const int jj = oj * stride + kj - pw;
                            if (jj < 0 || jj >= wd) continue;
                            const std::size_t xbase =
                                (static_cast<std::size_t>(ii) * wd + static_cast<std::size_t>(jj)) * cin;
                            const std::size_t wbase =
                                (static_cast<std::size_t>(ki) * kw + static_cast<std::size_t>(kj)) *
                                static_cast<std::size_t>(cin) * cout;
                            for (int c = 0; c < cin; ++c) {
                                const double xv = rx->data[xbase + static_cast<std::size_t>(c)];
                                const std::size_t wc = wbase + static_cast<std::size_t>(c) * cout;
                                double gacc = 0.0;
                                for (int oc = 0; oc < cout; ++oc) {
                                    const double g = gout[oc];
                                    if (gw) rw->grad[wc + static_cast<std::size_t>(oc)] += g * xv;
                                    gacc += g * rw->data[wc + static_cast<std::size_t>(oc)];
                                }
                                if (gx) rx->grad[xbase + static_cast<std::size_t>(c)] += gacc;
                            }
                        }
                    }
                }
            }
        });
    }
    return result;
}

Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 3) throw std::invalid_argument("resize_nearest: expects rank-3 [H,W,C]");
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_nearest: output dims must be positive");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    std::vector<int> src_i(static_cast<std::size_t>(out_h)), src_j(static_cast<std::size_t>(out_w));
    for (int i = 0; i < out_h; ++i) src_i[static_cast<std::size_t>(i)] = i * h / out_h;
    for (int j = 0; j < out_w; ++j) src_j[static_cast<std::size_t>(j)] = j * w / out_w;

    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * c);
    const double* px = x.data();
    for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
            const std::size_t src =
                (static_cast<std::size_t>(src_i[static_cast<std::size_t>(i)]) * w +
                 static_cast<std::size_t>(src_j[static_cast<std::size_t>(j)])) *
                c;
            const std::size_t dst = (static_cast<std::size_t>(i) * out_w + static_cast<std::size_t>(j)) * c;
            std::copy(px + src, px + src + c, out.begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    Tensor result = Tensor::from_data({out_h, out_w, c}, std::move(out));
    if (want_grad(x)) {
        record({x}, result, [=]() {
            auto* rx = x.raw();
            auto* rr = result.raw();
            ensure_grad(rx);
            for (int i = 0; i < out_h; ++i) {
                for (int j = 0; j < out_w; ++j) {
                    const std::size_t src =
                        (static_cast<std::size_t>(src_i[static_cast<std::size_t>(i)]) * w +
                         static_cast<std::size_t>(src_j[static_cast<std::size_t>(j)])) *
                        c;
                    const std::size_t dst = (static_cast<std::size_t>(i) * out_w + static_cast<std::size_t>(j)) * c;
                    for (int cc = 0; cc < c; ++cc) {
                        rx->grad[src + static_cast<std::size_t>(cc)] += rr->grad[dst + static_cast<std::size_t>(cc)];
                    }
                }
            }
        });
    }
    return result;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
    if (logits.shape() != target.shape()) {
        throw std::invalid_argument("bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " +
                                    shape_str(target.shape()));
    }
    const double* pt = target.data();
    for (std::size_t i = 0; i < target.numel(); ++i) {
        if (pt[i] != 0.0 && pt[i] != 1.0) {
            throw std::invalid_argument("bce_with_logits: target values must be 0 or 1");
        }
    }
    const double* px = logits.data();
    const std::size_t n = logits.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // max(x,0) - x t + log(1 + exp(-|x|))
        const double x = px[i];
        acc += std::max(x, 0.0) - x * pt[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Tensor result = Tensor::from_data({1}, {acc / static_cast<double>(n)});
    check_finite(result, "bce_with_logits");
    if (want_grad(logits)) {
        record({logits}, result, [=]() {
            auto* rl = logits.raw();
            auto* rr = result.raw();
            ensure_grad(rl);
            const double g = rr->grad[0] / static_cast<double>(n);
            const double* t = target.data();
            for (std::size_t i = 0; i < n; ++i) {
                const double x = rl->data[i];
                const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                rl->grad[i] += g * (s - t[i]);
            }
        });
    }
    return result;
}

}  // namespace vlt
