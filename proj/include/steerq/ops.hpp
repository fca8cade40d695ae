#pragma once

// Differentiable operations on Tensor. Image tensors are NCHW; a rank-3
// input [C,H,W] is accepted wherever a batch of one makes sense and the
// result keeps the caller's rank.

#include <vector>

#include "steerq/spatial.hpp"
#include "steerq/tensor.hpp"

namespace steerq::ops {

/// Cross-correlation with zero padding. `kernel` is [Co,Ci,k,k] or, for
/// per-sample (dynamic) filters, [B,Co,Ci,k,k].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1, int padding = 0);
/// Adds bias[c] to every pixel of channel c.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);

Tensor relu(const Tensor& x);
/// 2x2 max pooling, stride 2; ties resolve to the first element in row-major order.
Tensor max_pool2d(const Tensor& x);
/// Nearest-neighbour upsampling by 2.
Tensor upsample_nearest2d(const Tensor& x);
/// x [B,in] times weight [out,in] (transposed) plus optional bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});
/// Concatenation along dimension 1 (channels for images, features for [B,n]).
Tensor concat(const std::vector<Tensor>& parts);
/// Square patches of side `size` around each center (one center per batch
/// row); pixels outside the input are zero. Row offsets run from -size/2.
Tensor crop_patch(const Tensor& x, const std::vector<Cell>& centers, int size);

Tensor reshape(const Tensor& x, Shape shape);
/// out[..., i] = x[..., index[i]]; gradients accumulate over repeated indices.
Tensor gather_last(const Tensor& x, const std::vector<int>& index);
/// [B, m*fiber, H, W] -> [B, m, H, W], maximum over each field's fiber.
Tensor fiber_max(const Tensor& x, int fiber);
/// [B,C,H,W] -> [B,C]
Tensor spatial_mean(const Tensor& x);
/// [B,d] -> [B, d*fiber, H, W], every fiber slot and pixel of field f equal to v[b,f].
Tensor broadcast_fields(const Tensor& v, int fiber, int height, int width);
/// [B,n] -> [B], out[b] = x[b, index[b]].
Tensor select_rows(const Tensor& x, const std::vector<int>& index);
/// Row-wise choice between two same-shaped tensors: take_b[b] ? b : a.
Tensor where_rows(const std::vector<bool>& take_b, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

double huber(double error, double delta = 1.0);
/// Weighted mean over the batch of huber(pred[b] - target[b]).
Tensor huber_loss(const Tensor& pred, const std::vector<double>& target,
                  const std::vector<double>& weights, double delta = 1.0);
Tensor huber_loss(const Tensor& pred, const std::vector<double>& target, double delta = 1.0);
/// Mean over the batch of -log softmax(logits[b])[index[b]].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& index);

/// Strict large-margin term over q [B,n]. For every row flagged expert,
/// penalises each action whose value exceeds the expert value minus the
/// margin, averaged over that set (zero when empty). Returns the sum over
/// expert rows divided by B; non-expert rows contribute exactly zero.
Tensor strict_margin_loss(const Tensor& q, const std::vector<int>& expert_index,
                          const std::vector<bool>& is_expert, double margin);

}  // namespace steerq::ops
