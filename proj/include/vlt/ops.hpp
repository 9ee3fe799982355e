#pragma once

#include <vector>

#include "vlt/tensor.hpp"

namespace vlt {

// Every operation computes eagerly and, when a tape is active and any input
// participates in differentiation, records a backward rule on it.
//
// Broadcast rule for binary elementwise ops: shapes are aligned on trailing
// dimensions and size-1 dimensions expand. No other implicit rank promotion.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n], fixed k-ascending summation

Tensor softmax(const Tensor& x, int axis);
// Softmax over `axis` restricted to positions where valid[i] != 0; invalid
// positions get exactly 0. Throws if no position is valid.
Tensor softmax_masked(const Tensor& x, int axis, const std::vector<unsigned char>& valid);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

Tensor transpose(const Tensor& x);  // 2-D only
Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
// Differentiable row lookup (embedding); scatter-add on backward.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// x: [H,W,Cin], w: [kh,kw,Cin,Cout], bias: [Cout] or undefined. Zero 'same'
// padding (odd kernels), output [(H+2p-k)/s+1, ., Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride);
Tensor resize_nearest(const Tensor& x, int out_h, int out_w);  // x: [H,W,C]

// Mean over all pixels of the numerically stable binary cross entropy with
// logits. target must contain only 0 and 1.
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

}  // namespace vlt
