#include "patchage/adam.hpp"

#include <cmath>

#include "patchage/error.hpp"

namespace patchage {

void adam_step(std::span<Parameter> params, AdamState& state, const AdamOptions& options, long step) {
  if (step < 1) throw ConfigError("adam_step: step index must be >= 1, got " + std::to_string(step));

  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor.numel(), 0.0);
      state.second_moment.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.first_moment.size()) +
                     " buffers for " + std::to_string(params.size()) + " parameters");
  }

  const double b1 = options.beta1, b2 = options.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    auto values = params[i].tensor.mutable_values();
    auto grad = params[i].tensor.grad();
    if (m.size() != values.size()) {
      throw ShapeError("adam_step: moment buffer size mismatch for '" + params[i].name + "'");
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      values[j] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
  state.step = step;
}

}  // namespace patchage
