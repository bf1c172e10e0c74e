#pragma once

#include <string>
#include <vector>

#include "patchage/ops.hpp"
#include "support.hpp"

namespace patchage::testing {

struct GradientCase {
  std::string op;
  int cases = 0;
  double worst_rel_error = 0.0;
};

// Loss wrapper: mean squared distance from a fixed random target, so every output
// element gets a distinct upstream gradient.
inline Tensor against_target(const Tensor& out, const Tensor& target) { return ops::mse_loss(out, target); }

inline std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline GradientCase check_conv3d(ops::ConvAlgorithm algorithm, int cases, std::uint64_t seed) {
  GradientCase res{algorithm == ops::ConvAlgorithm::kDirect ? "conv3d (direct)" : "conv3d (im2col)", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = draw(rng, 1, 2), cin = draw(rng, 1, 3), cout = draw(rng, 1, 3), k = draw(rng, 1, 3);
    const int stride = static_cast<int>(draw(rng, 1, 2)), pad = static_cast<int>(draw(rng, 0, 1));
    const Shape xs{n, cin, draw(rng, k, k + 2), draw(rng, k, k + 3), draw(rng, k, k + 2)};
    Tensor x = random_tensor(rng, xs), w = random_tensor(rng, {cout, cin, k, k, k}), b = random_tensor(rng, {cout});
    const Tensor probe = ops::conv3d(x, w, b, stride, pad, algorithm);
    const Tensor target = random_tensor(rng, probe.shape(), false);
    const double e = gradient_check(
        [&] { return against_target(ops::conv3d(x, w, b, stride, pad, algorithm), target); }, {x, w, b});
    res.worst_rel_error = std::max(res.worst_rel_error, e);
  }
  return res;
}

inline GradientCase check_relu(int cases, std::uint64_t seed) {
  GradientCase res{"relu", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const Shape s{draw(rng, 1, 3), draw(rng, 1, 4), draw(rng, 1, 5)};
    Tensor x = random_tensor(rng, s);
    // Keep inputs at least 1e-3 away from the kink.
    for (double& v : x.mutable_values()) {
      if (std::abs(v) < 1e-3) v = v < 0.0 ? -1e-3 - std::abs(v) : 1e-3 + v;
    }
    const Tensor target = random_tensor(rng, s, false);
    res.worst_rel_error =
        std::max(res.worst_rel_error, gradient_check([&] { return against_target(ops::relu(x), target); }, {x}));
  }
  return res;
}

inline GradientCase check_add(int cases, std::uint64_t seed) {
  GradientCase res{"add", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const Shape s{draw(rng, 1, 3), draw(rng, 1, 4), draw(rng, 1, 4)};
    Tensor a = random_tensor(rng, s), b = random_tensor(rng, s);
    const Tensor target = random_tensor(rng, s, false);
    res.worst_rel_error =
        std::max(res.worst_rel_error, gradient_check([&] { return against_target(ops::add(a, b), target); }, {a, b}));
  }
  return res;
}

inline GradientCase check_sum(int cases, std::uint64_t seed) {
  GradientCase res{"sum", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    Tensor x = random_tensor(rng, {draw(rng, 1, 4), draw(rng, 1, 5)});
    const Tensor target = Tensor::scalar(rng.uniform(-1.0, 1.0));
    res.worst_rel_error =
        std::max(res.worst_rel_error, gradient_check([&] { return against_target(ops::sum(x), target); }, {x}));
  }
  return res;
}

inline GradientCase check_batch_norm(ops::NormMode mode, int cases, std::uint64_t seed) {
  GradientCase res{mode == ops::NormMode::kTrain ? "batch_norm (train)" : "batch_norm (eval)", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const std::size_t ch = draw(rng, 1, 3);
    const Shape s{draw(rng, 1, 3), ch, draw(rng, 1, 3), draw(rng, 1, 3), draw(rng, 2, 3)};
    Tensor x = random_tensor(rng, s), gamma = random_tensor(rng, {ch}, true, 0.5, 1.5),
           beta = random_tensor(rng, {ch});
    ops::RunningStats stats;
    if (mode == ops::NormMode::kEval) {
      for (std::size_t k = 0; k < ch; ++k) {
        stats.mean.push_back(rng.uniform(-0.5, 0.5));
        stats.var.push_back(rng.uniform(0.5, 2.0));
      }
    }
    const Tensor target = random_tensor(rng, s, false);
    res.worst_rel_error = std::max(
        res.worst_rel_error,
        gradient_check([&] { return against_target(ops::batch_norm(x, gamma, beta, mode, stats), target); },
                       {x, gamma, beta}));
  }
  return res;
}

inline GradientCase check_global_avg_pool(int cases, std::uint64_t seed) {
  GradientCase res{"global_avg_pool", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const Shape s{draw(rng, 1, 3), draw(rng, 1, 3), draw(rng, 1, 3), draw(rng, 1, 3), draw(rng, 1, 3)};
    Tensor x = random_tensor(rng, s);
    const Tensor target = random_tensor(rng, {s[0], s[1]}, false);
    res.worst_rel_error = std::max(res.worst_rel_error,
                                   gradient_check([&] { return against_target(ops::global_avg_pool(x), target); }, {x}));
  }
  return res;
}

inline GradientCase check_linear(int cases, std::uint64_t seed) {
  GradientCase res{"linear", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = draw(rng, 1, 4), f = draw(rng, 1, 6), o = draw(rng, 1, 3);
    Tensor x = random_tensor(rng, {n, f}), w = random_tensor(rng, {o, f}), b = random_tensor(rng, {o});
    const Tensor target = random_tensor(rng, {n, o}, false);
    res.worst_rel_error = std::max(
        res.worst_rel_error, gradient_check([&] { return against_target(ops::linear(x, w, b), target); }, {x, w, b}));
  }
  return res;
}

inline GradientCase check_mse_loss(int cases, std::uint64_t seed) {
  GradientCase res{"mse_loss", cases, 0.0};
  Rng rng(seed);
  for (int c = 0; c < cases; ++c) {
    const std::size_t n = draw(rng, 1, 8);
    Tensor p = random_tensor(rng, {n, 1}), t = random_tensor(rng, {n, 1});
    res.worst_rel_error = std::max(res.worst_rel_error, gradient_check([&] { return ops::mse_loss(p, t); }, {p, t}));
  }
  return res;
}

// Every differentiable op, `cases` random shapes each.
inline std::vector<GradientCase> run_gradient_suite(int cases = 20, std::uint64_t seed = 2024) {
  return {
      check_conv3d(ops::ConvAlgorithm::kIm2col, cases, seed + 1),
      check_conv3d(ops::ConvAlgorithm::kDirect, cases, seed + 2),
      check_relu(cases, seed + 3),
      check_add(cases, seed + 4),
      check_sum(cases, seed + 5),
      check_batch_norm(ops::NormMode::kTrain, cases, seed + 6),
      check_batch_norm(ops::NormMode::kEval, cases, seed + 7),
      check_global_avg_pool(cases, seed + 8),
      check_linear(cases, seed + 9),
      check_mse_loss(cases, seed + 10),
  };
}

}  // namespace patchage::testing
