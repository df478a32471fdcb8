#pragma once

#include "adnet/tape.hpp"

namespace adnet::ops {

enum class Padding { Same, Valid };
enum class Activation { Relu, LeakyRelu, Sigmoid };
enum class PoolKind { Max, Avg };
enum class Mode { Train, Infer };

// Dilated 2-D convolution (cross-correlation orientation), kernel kH x kW x Cin x Cout.
NodeId conv2d(Tape& t, NodeId x, NodeId kernel, NodeId bias, int stride, int dilation,
              Padding padding);

// Stride-2 transposed convolution with a 2x2 kernel (kH x kW x Cin x Cout);
// the exact adjoint of a stride-2 valid 2x2 convolution.
NodeId conv_transpose2d(Tape& t, NodeId x, NodeId kernel, NodeId bias);

// Train mode normalizes with batch statistics over N,H,W and updates the
// per-channel running stats in place; infer mode reads them.
NodeId batch_norm2d(Tape& t, NodeId x, NodeId gamma, NodeId beta, Tensor& running_mean,
                    Tensor& running_var, Mode mode, double momentum, double epsilon);

NodeId activation(Tape& t, NodeId x, Activation kind, double slope = 0.3);

// 3x3 window, stride 1, same padding; avg divides by in-bounds count.
NodeId pool2d(Tape& t, NodeId x, PoolKind kind);

// Non-overlapping 2x2 stride-2 max pool; H and W must be even.
NodeId max_pool_downsample(Tape& t, NodeId x);

NodeId global_avg_pool(Tape& t, NodeId x);

NodeId concat_channels(Tape& t, NodeId a, NodeId b);

// Elementwise; mul also accepts b of shape N x 1 x 1 x C broadcast over H, W.
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);

// Nearest-neighbor upsample to target H x W (integer scale factors only).
NodeId upsample_nearest(Tape& t, NodeId x, int target_h, int target_w);

// Reductions / glue used by losses and tests.
NodeId sum(Tape& t, NodeId x);
NodeId add_scalars(Tape& t, const std::vector<NodeId>& terms);
NodeId scale_scalar(Tape& t, NodeId x, double factor);

}  // namespace adnet::ops
