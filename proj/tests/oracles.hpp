// Independent reference implementations used to verify the library. They work
// on plain buffers and never call into the code paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "vlt/common.hpp"
#include "vlt/ops.hpp"
#include "vlt/tensor.hpp"

namespace oracle {

// Plain triple loop, i-j-k with k innermost; the library matmul must agree
// bitwise on small shapes.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int m, int k, int n) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) {
                acc += a[static_cast<std::size_t>(i) * k + kk] * b[static_cast<std::size_t>(kk) * n + j];
            }
            c[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
    return c;
}

// Softmax with max subtraction in long double; entries where valid[i] == 0
// get exactly zero.
inline std::vector<double> softmax(const std::vector<double>& x, const std::vector<unsigned char>* valid = nullptr) {
    long double mx = -std::numeric_limits<long double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (valid && !(*valid)[i]) continue;
        mx = std::max<long double>(mx, x[i]);
    }
    long double z = 0.0L;
    std::vector<long double> e(x.size(), 0.0L);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (valid && !(*valid)[i]) continue;
        e[i] = std::exp(static_cast<long double>(x[i]) - mx);
        z += e[i];
    }
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / z);
    return out;
}

inline std::vector<double> affine_row(const std::vector<double>& row, const std::vector<double>& w,
                                      const std::vector<double>& b, int in, int out) {
    std::vector<double> y(static_cast<std::size_t>(out), 0.0);
    for (int j = 0; j < out; ++j) {
        double acc = 0.0;
        for (int i = 0; i < in; ++i) acc += row[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i) * out + j];
        y[static_cast<std::size_t>(j)] = acc + (b.empty() ? 0.0 : b[static_cast<std::size_t>(j)]);
    }
    return y;
}

inline std::vector<double> slice_row(const std::vector<double>& data, int row, int cols) {
    return std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(row) * cols,
                               data.begin() + static_cast<std::ptrdiff_t>(row + 1) * cols);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline std::vector<double> relu(std::vector<double> v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
    return v;
}

// Per-pixel loop over Conv(F_vr) dot Conv(F_t)^T / sqrt(C) with masked softmax
// across words.
inline std::vector<double> sdf_attention(const std::vector<double>& f_vr, const std::vector<double>& f_t,
                                         const std::vector<double>& wv, const std::vector<double>& bv,
                                         const std::vector<double>& wt, const std::vector<double>& bt, int hw, int c,
                                         int nt, const std::vector<unsigned char>& mask) {
    std::vector<double> out(static_cast<std::size_t>(hw) * nt, 0.0);
    std::vector<std::vector<double>> words(static_cast<std::size_t>(nt));
    for (int w = 0; w < nt; ++w) words[static_cast<std::size_t>(w)] = affine_row(slice_row(f_t, w, c), wt, bt, c, c);
    for (int p = 0; p < hw; ++p) {
        const std::vector<double> v = affine_row(slice_row(f_vr, p, c), wv, bv, c, c);
        std::vector<double> logits(static_cast<std::size_t>(nt), 0.0);
        for (int w = 0; w < nt; ++w) logits[static_cast<std::size_t>(w)] = dot(v, words[static_cast<std::size_t>(w)]) / std::sqrt(c);
        const std::vector<double> probs = softmax(logits, &mask);
        for (int w = 0; w < nt; ++w) out[static_cast<std::size_t>(p) * nt + w] = probs[static_cast<std::size_t>(w)];
    }
    return out;
}

// softmax(relu(F_vq W_v) relu(F_t W_a)^T / sqrt(C)) per query row.
inline std::vector<double> query_attention(const std::vector<double>& f_vq, const std::vector<double>& f_t,
                                           const std::vector<double>& w_v, const std::vector<double>& w_a, int nq,
                                           int hw, int c, int nt, const std::vector<unsigned char>& mask) {
    std::vector<std::vector<double>> words(static_cast<std::size_t>(nt));
    for (int w = 0; w < nt; ++w) {
        words[static_cast<std::size_t>(w)] = relu(affine_row(slice_row(f_t, w, c), w_a, {}, c, c));
    }
    std::vector<double> out(static_cast<std::size_t>(nq) * nt, 0.0);
    for (int q = 0; q < nq; ++q) {
        const std::vector<double> v = relu(affine_row(slice_row(f_vq, q, hw), w_v, {}, hw, c));
        std::vector<double> logits(static_cast<std::size_t>(nt), 0.0);
        for (int w = 0; w < nt; ++w) logits[static_cast<std::size_t>(w)] = dot(v, words[static_cast<std::size_t>(w)]) / std::sqrt(c);
        const std::vector<double> probs = softmax(logits, &mask);
        for (int w = 0; w < nt; ++w) out[static_cast<std::size_t>(q) * nt + w] = probs[static_cast<std::size_t>(w)];
    }
    return out;
}

struct MhaWeights {
    std::vector<double> wq, bq, wk, bk, wv, bv, wo, bo;
};

// Per-head scaled dot-product attention, head concatenation, output projection.
inline std::vector<double> multi_head_attention(const std::vector<double>& q, const std::vector<double>& k,
                                                const std::vector<double>& v, int nq, int nk, int c, int heads,
                                                const MhaWeights& w) {
    const int dk = c / heads;
    std::vector<std::vector<double>> qp(static_cast<std::size_t>(nq)), kp(static_cast<std::size_t>(nk)),
        vp(static_cast<std::size_t>(nk));
    for (int i = 0; i < nq; ++i) qp[static_cast<std::size_t>(i)] = affine_row(slice_row(q, i, c), w.wq, w.bq, c, c);
    for (int i = 0; i < nk; ++i) {
        kp[static_cast<std::size_t>(i)] = affine_row(slice_row(k, i, c), w.wk, w.bk, c, c);
        vp[static_cast<std::size_t>(i)] = affine_row(slice_row(v, i, c), w.wv, w.bv, c, c);
    }
    std::vector<double> concat(static_cast<std::size_t>(nq) * c, 0.0);
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < nq; ++i) {
            std::vector<double> logits(static_cast<std::size_t>(nk), 0.0);
            for (int j = 0; j < nk; ++j) {
                double acc = 0.0;
                for (int d = 0; d < dk; ++d) {
                    acc += qp[static_cast<std::size_t>(i)][static_cast<std::size_t>(h * dk + d)] *
                           kp[static_cast<std::size_t>(j)][static_cast<std::size_t>(h * dk + d)];
                }
                logits[static_cast<std::size_t>(j)] = acc / std::sqrt(dk);
            }
            const std::vector<double> probs = softmax(logits);
            for (int d = 0; d < dk; ++d) {
                double acc = 0.0;
                for (int j = 0; j < nk; ++j) {
                    acc += probs[static_cast<std::size_t>(j)] *
                           vp[static_cast<std::size_t>(j)][static_cast<std::size_t>(h * dk + d)];
                }
                concat[static_cast<std::size_t>(i) * c + static_cast<std::size_t>(h * dk + d)] = acc;
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(nq) * c, 0.0);
    for (int i = 0; i < nq; ++i) {
        const std::vector<double> y = affine_row(slice_row(concat, i, c), w.wo, w.bo, c, c);
        for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] = y[static_cast<std::size_t>(j)];
    }
    return out;
}

struct BalanceWeights {
    std::vector<double> wq, bq;  // C -> C
    std::vector<double> w1, b1;  // 2C -> C
    std::vector<double> w2, b2;  // C -> 1
};

struct BalanceOut {
    std::vector<double> c_q;  // nq
    std::vector<double> f_b;  // nq * C
};

inline BalanceOut balance(const std::vector<double>& f_q, const std::vector<double>& f_r, int nq, int c,
                          const BalanceWeights& w) {
    BalanceOut out;
    out.c_q.resize(static_cast<std::size_t>(nq));
    out.f_b.resize(static_cast<std::size_t>(nq) * c);
    for (int q = 0; q < nq; ++q) {
        const std::vector<double> proj = affine_row(slice_row(f_q, q, c), w.wq, w.bq, c, c);
        std::vector<double> joint(proj);
        const std::vector<double> r = slice_row(f_r, q, c);
        joint.insert(joint.end(), r.begin(), r.end());
        const std::vector<double> hidden = affine_row(joint, w.w1, w.b1, 2 * c, c);
        const double logit = affine_row(hidden, w.w2, w.b2, c, 1)[0];
        const double conf = 1.0 / (1.0 + std::exp(-logit));
        out.c_q[static_cast<std::size_t>(q)] = conf;
        for (int j = 0; j < c; ++j) out.f_b[static_cast<std::size_t>(q) * c + j] = r[static_cast<std::size_t>(j)] * conf;
    }
    return out;
}

// F_m = F_ve F_b^T, element-wise dot products.
inline std::vector<double> mask_kernel(const std::vector<double>& f_ve, const std::vector<double>& f_b, int hw, int c,
                                       int nq) {
    std::vector<double> f_m(static_cast<std::size_t>(hw) * nq, 0.0);
    for (int p = 0; p < hw; ++p) {
        for (int q = 0; q < nq; ++q) {
            f_m[static_cast<std::size_t>(p) * nq + q] = dot(slice_row(f_ve, p, c), slice_row(f_b, q, c));
        }
    }
    return f_m;
}

// 1x1 convolution stack C -> C -> C -> nq with relu between, per pixel.
inline std::vector<double> vision_query_prep(const std::vector<double>& f_vr, int hw, int c, int nq,
                                             const std::vector<double>& w1, const std::vector<double>& b1,
                                             const std::vector<double>& w2, const std::vector<double>& b2,
                                             const std::vector<double>& w3, const std::vector<double>& b3) {
    std::vector<double> out(static_cast<std::size_t>(nq) * hw, 0.0);  // transposed, [nq, hw]
    for (int p = 0; p < hw; ++p) {
        std::vector<double> x = relu(affine_row(slice_row(f_vr, p, c), w1, b1, c, c));
        x = relu(affine_row(x, w2, b2, c, c));
        x = affine_row(x, w3, b3, c, nq);
        for (int q = 0; q < nq; ++q) out[static_cast<std::size_t>(q) * hw + p] = x[static_cast<std::size_t>(q)];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences over explicit leaf tensors.

struct FdReport {
    std::size_t total = 0;
    std::size_t pass = 0;
    double max_rel = 0.0;
    double max_abs_fail = 0.0;

    bool all_pass() const { return total > 0 && pass == total; }
};

// build_loss must construct the loss from the leaves (records on the active
// tape when one is set). Gradients are compared against central differences.
inline FdReport finite_diff_check(const std::vector<vlt::Tensor>& leaves,
                                  const std::function<vlt::Tensor()>& build_loss, double step = 1e-5,
                                  double rel_tol = 1e-4, double abs_floor = 1e-7) {
    for (vlt::Tensor leaf : leaves) leaf.zero_grad();
    {
        vlt::Tape tape;
        vlt::TapeScope scope(tape);
        tape.backward(build_loss());
    }
    FdReport rep;
    for (vlt::Tensor leaf : leaves) {
        const bool has_grad = leaf.has_grad();
        for (std::size_t j = 0; j < leaf.numel(); ++j) {
            const double analytic = has_grad ? leaf.grad()[j] : 0.0;
            const double saved = leaf.data()[j];
            leaf.data()[j] = saved + step;
            const double up = build_loss().value();
            leaf.data()[j] = saved - step;
            const double down = build_loss().value();
            leaf.data()[j] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double err = std::abs(analytic - fd);
            const double scale = std::max(std::abs(analytic), std::abs(fd));
            const double rel = scale > 0.0 ? err / scale : 0.0;
            ++rep.total;
            if (err <= abs_floor || rel < rel_tol) {
                ++rep.pass;
            } else {
                rep.max_abs_fail = std::max(rep.max_abs_fail, err);
            }
            rep.max_rel = std::max(rep.max_rel, rel);
        }
    }
    for (vlt::Tensor leaf : leaves) leaf.zero_grad();
    return rep;
}

inline vlt::Tensor rand_tensor(vlt::Rng& rng, vlt::Shape shape, double lo = -1.0, double hi = 1.0,
                               bool requires_grad = false) {
    std::vector<double> v(vlt::shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    vlt::Tensor t = vlt::Tensor::from_data(std::move(shape), std::move(v));
    t.set_requires_grad(requires_grad);
    return t;
}

}  // namespace oracle
