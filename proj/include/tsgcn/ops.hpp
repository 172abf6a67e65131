#pragma once

#include <cstddef>
#include <span>

#include "tsgcn/tape.hpp"

// Differentiable operations over tape variables. Feature maps are laid out as
// [channels x frames x joints]; vectors are rank-1. Every op checks its operand
// shapes and throws ShapeError naming the op and both shapes.
namespace tsgcn::ops {

/// 2-D matrix product op(a) * op(b), where op transposes when requested.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var relu(const Var& x);
Var reshape(const Var& x, Shape shape);
/// Sum of all elements, as a [1] tensor.
Var sum(const Var& x);

/// Adds bias[c] to every element of channel c of x ([C x ...]).
Var add_channel_bias(const Var& x, const Var& bias);

/// Per-channel temporal convolution with zero 'same' padding.
/// x: [C x T x V], kernel: [C x K] with K odd. Output [C x T x V].
Var depthwise_temporal_conv(const Var& x, const Var& kernel);

/// Dense temporal convolution with zero 'same' padding.
/// x: [Cin x T x V], kernel: [Cout x Cin x K] with K odd. Output [Cout x T x V].
Var temporal_conv(const Var& x, const Var& kernel);

/// 1x1 convolution: x [Cin x T x V], weight [Cin x Cout], optional bias [Cout].
Var pointwise_conv(const Var& x, const Var& weight);
Var pointwise_conv(const Var& x, const Var& weight, const Var& bias);

/// Max over the joint axis of [C x T x V], broadcast back across joints.
Var max_pool_joints(const Var& x);
/// Max over the frame axis of [C x T x V], broadcast back across frames.
Var max_pool_frames(const Var& x);

/// Mean over every axis but the first: [C x ...] -> [C].
Var global_avg_pool(const Var& x);

/// Normalizes over the channel axis at every position of [C x ...]; a rank-1
/// input is a single position. gamma/beta are [C].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var layer_norm(const Var& x, double eps = 1e-5);

/// Inverted dropout. Identity when `training` is false, rate is 0, or the tape
/// has stochastic ops disabled. The drop pattern comes from tape.next_seed().
Var dropout(const Var& x, double rate, bool training);

/// Concatenates along axis 0; trailing axes must agree.
Var concat(std::span<const Var> parts);

/// Softmax over the last axis.
Var softmax(const Var& x);

/// -log p[label] for a probability vector p.
Var cross_entropy(const Var& probs, std::size_t label);

/// Numerically stable -log softmax(logits)[label].
Var softmax_cross_entropy(const Var& logits, std::size_t label);

}  // namespace tsgcn::ops
