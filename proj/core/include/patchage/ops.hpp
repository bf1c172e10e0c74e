#pragma once

#include <vector>

#include "patchage/tensor.hpp"

// Differentiable operations. Each op records its adjoint on the active Tape when any
// input requires gradients; otherwise it is a plain forward computation.
namespace patchage::ops {

enum class ConvAlgorithm {
  kDirect,  // nested loops, reference path
  kIm2col,  // patch matrix + GEMM
};

// input [N,C_in,D,H,W], weight [C_out,C_in,k,k,k], bias [C_out] (may be undefined).
// Output extent per axis: floor((extent + 2*padding - k) / stride) + 1.
Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, ConvAlgorithm algorithm = ConvAlgorithm::kIm2col);

// max(0, x); the subgradient at 0 is 0.
Tensor relu(const Tensor& x);

// Elementwise sum of two same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

// Sum of all elements, as a one-element tensor.
Tensor sum(const Tensor& x);

enum class NormMode { kTrain, kEval };

// Per-channel running statistics of a normalization layer. Empty until the first
// train-mode pass.
struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  bool initialized() const noexcept { return !mean.empty(); }
};

struct NormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Batch normalization over (N,D,H,W) per channel of x [N,C,D,H,W].
// Train mode standardizes with the biased batch variance and folds the unbiased
// variance into `stats`; the first update copies the batch statistics. Eval mode uses
// `stats` and throws if they were never populated.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormMode mode,
                  RunningStats& stats, const NormOptions& options = {});

// [N,C,D,H,W] -> [N,C], mean over spatial positions.
Tensor global_avg_pool(const Tensor& x);

// x [N,F], weight [O,F], bias [O] -> [N,O].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// (1/N) * sum (pred - target)^2 over all elements; returns a one-element tensor.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace patchage::ops
