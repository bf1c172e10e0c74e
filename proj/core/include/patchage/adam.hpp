#pragma once

#include <span>
#include <string>
#include <vector>

#include "patchage/tensor.hpp"

namespace patchage {

struct Parameter {
  std::string name;
  Tensor tensor;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one per parameter, in parameter order.
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  long step = 0;  // index of the last applied update
};

// One Adam update at step index `step` (>= 1) using each parameter's current gradient:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Throws NumericError naming the first parameter with a non-finite gradient; in that
// case no parameter is modified.
void adam_step(std::span<Parameter> params, AdamState& state, const AdamOptions& options, long step);

// Convenience wrapper that owns the step counter.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(std::span<Parameter> params) { adam_step(params, state_, options_, state_.step + 1); }

  const AdamState& state() const noexcept { return state_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  AdamOptions options_;
  AdamState state_;
};

}  // namespace patchage
