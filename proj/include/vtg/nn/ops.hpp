#pragma once

#include <cstdint>

#include "vtg/nn/autograd.hpp"

namespace vtg::nn {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
// Elementwise product with a tensor that carries no gradient.
template <typename T> Var<T> mul_const(const Var<T>& a, const Tensor<T>& c);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> silu(const Var<T>& x);
template <typename T> Var<T> gelu(const Var<T>& x);

// x [N, C, H, W] + v [N, C] broadcast over space.
template <typename T> Var<T> add_channel_vector(const Var<T>& x, const Var<T>& v);

// x [N, C, H, W], w [O, C, k, k], bias [O] or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad);

// x [..., in], w [out, in], bias [out] or null -> [..., out].
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

// Batched matmul: op(a) [B, M, K] x op(b) [B, K, N].
template <typename T> Var<T> bmm(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b);

template <typename T> Var<T> softmax_last(const Var<T>& x);

template <typename T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <typename T> Var<T> max_pool2x2(const Var<T>& x);
template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);
// [N, C, H, W] -> [N, C]
template <typename T> Var<T> global_avg_pool(const Var<T>& x);
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

// [N, C, H, W] <-> [N, H*W, C]
template <typename T> Var<T> nchw_to_tokens(const Var<T>& x);
template <typename T> Var<T> tokens_to_nchw(const Var<T>& x, int64_t height, int64_t width);
// [N, L, H*D] <-> [N*H, L, D]
template <typename T> Var<T> split_heads(const Var<T>& x, int heads);
template <typename T> Var<T> merge_heads(const Var<T>& x, int heads);

// Row-wise x / max(||x||, 1e-12) for x [N, D].
template <typename T> Var<T> l2_normalize_rows(const Var<T>& x);

// Sum of mask * (pred - target)^2 over all elements divided by the number of
// kept elements. The mask is [N, 1, H, W] broadcast over channels, or empty
// for an unmasked mean. A mask with no kept element gives 0 with a zero gradient.
template <typename T>
Var<T> masked_mse(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask);

// InfoNCE against a bank [K, D] in which slot slots[q] is replaced by
// positive_q for every row q. Row r's logits are a_r.b_j / tau and its target
// is slots[r]; the other rows' positives act as live negatives. Returns [B].
template <typename T>
Var<T> infonce_slots(const Var<T>& anchor, const Var<T>& positive, const Tensor<T>& bank,
                     const std::vector<int64_t>& slots, T tau);

template <typename T> Var<T> mean(const Var<T>& x);
template <typename T> Var<T> sum(const Var<T>& x);

}  // namespace vtg::nn
