#include "patchage/ops.hpp"

#include <cmath>
#include <string>

#include "patchage/error.hpp"

namespace patchage::ops {

Tensor relu(const Tensor& x) {
  const bool record = should_record({&x});
  Tensor out(x.shape(), record);
  auto in = x.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  if (record) {
    Tape::active()->record(out, [x, out]() mutable {
      if (!x.requires_grad()) return;
      auto g = out.grad();
      auto v = x.values();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (v[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const bool record = should_record({&a, &b});
  Tensor out(a.shape(), record);
  auto va = a.values();
  auto vb = b.values();
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] + vb[i];
  if (record) {
    Tape::active()->record(out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const bool record = should_record({&x});
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total, record);
  if (record) {
    Tape::active()->record(out, [x, out]() mutable {
      if (!x.requires_grad()) return;
      const double g = out.grad()[0];
      for (double& gx : x.mutable_grad()) gx += g;
    });
  }
  return out;
}

namespace {

struct ChannelLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t spatial;
};

ChannelLayout channel_layout(const Tensor& x, const char* op) {
  if (x.rank() != 5) {
    throw ShapeError(std::string(op) + ": expected [N,C,D,H,W] input, got " + shape_str(x.shape()));
  }
  return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3) * x.dim(4)};
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, NormMode mode,
                  RunningStats& stats, const NormOptions& options) {
  const auto [batch, channels, spatial] = channel_layout(x, "batch_norm");
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw ShapeError("batch_norm: gamma/beta must have shape [" + std::to_string(channels) +
                     "], got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::size_t count = batch * spatial;
  auto in = x.values();
  auto g = gamma.values();
  auto b = beta.values();

  std::vector<double> mean(channels), inv_std(channels);
  if (mode == NormMode::kTrain) {
    std::vector<double> var(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = in.data() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = in.data() + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      mean[c] = m;
      var[c] = ss / static_cast<double>(count);
      inv_std[c] = 1.0 / std::sqrt(var[c] + options.eps);
    }
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    if (!stats.initialized()) {
      stats.mean = mean;
      stats.var.resize(channels);
      for (std::size_t c = 0; c < channels; ++c) stats.var[c] = var[c] * unbias;
    } else {
      if (stats.mean.size() != channels) {
        throw ShapeError("batch_norm: running stats have " + std::to_string(stats.mean.size()) +
                         " channels, input has " + std::to_string(channels));
      }
      const double mom = options.momentum;
      for (std::size_t c = 0; c < channels; ++c) {
        stats.mean[c] = (1.0 - mom) * stats.mean[c] + mom * mean[c];
        stats.var[c] = (1.0 - mom) * stats.var[c] + mom * var[c] * unbias;
      }
    }
  } else {
    if (!stats.initialized()) {
      throw ConfigError("batch_norm: eval mode requires running statistics, but none were recorded");
    }
    if (stats.mean.size() != channels) {
      throw ShapeError("batch_norm: running stats have " + std::to_string(stats.mean.size()) +
                       " channels, input has " + std::to_string(channels));
    }
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + options.eps);
    }
  }

  const bool record = should_record({&x, &gamma, &beta});
  Tensor out(x.shape(), record);
  auto o = out.mutable_values();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * spatial;
      const double scale = g[c] * inv_std[c];
      const double shift = b[c] - mean[c] * scale;
      for (std::size_t i = 0; i < spatial; ++i) o[base + i] = in[base + i] * scale + shift;
    }
  }

  if (record) {
    Tape::active()->record(out, [x, gamma, beta, out, mean, inv_std, mode, batch, channels,
                                 spatial]() mutable {
      auto dy = out.grad();
      auto in = x.values();
      const double m = static_cast<double>(batch * spatial);
      for (std::size_t c = 0; c < channels; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
          const std::size_t base = (n * channels + c) * spatial;
          for (std::size_t i = 0; i < spatial; ++i) {
            const double xhat = (in[base + i] - mean[c]) * inv_std[c];
            sum_dy += dy[base + i];
            sum_dy_xhat += dy[base + i] * xhat;
          }
        }
        if (gamma.requires_grad()) gamma.mutable_grad()[c] += sum_dy_xhat;
        if (beta.requires_grad()) beta.mutable_grad()[c] += sum_dy;
        if (!x.requires_grad()) continue;
        auto dx = x.mutable_grad();
        const double gscale = gamma.values()[c] * inv_std[c];
        if (mode == NormMode::kTrain) {
          const double mean_dy = sum_dy / m;
          const double mean_dy_xhat = sum_dy_xhat / m;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double xhat = (in[base + i] - mean[c]) * inv_std[c];
              dx[base + i] += gscale * (dy[base + i] - mean_dy - xhat * mean_dy_xhat);
            }
          }
        } else {
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) dx[base + i] += gscale * dy[base + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  const auto [batch, channels, spatial] = channel_layout(x, "global_avg_pool");
  const bool record = should_record({&x});
  Tensor out({batch, channels}, record);
  auto in = x.values();
  auto o = out.mutable_values();
  const double inv = 1.0 / static_cast<double>(spatial);
  for (std::size_t nc = 0; nc < batch * channels; ++nc) {
    double s = 0.0;
    const double* p = in.data() + nc * spatial;
    for (std::size_t i = 0; i < spatial; ++i) s += p[i];
    o[nc] = s * inv;
  }
  if (record) {
    Tape::active()->record(out, [x, out, spatial, inv]() mutable {
      if (!x.requires_grad()) return;
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t nc = 0; nc < g.size(); ++nc) {
        const double v = g[nc] * inv;
        for (std::size_t i = 0; i < spatial; ++i) gx[nc * spatial + i] += v;
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2) {
    throw ShapeError("linear: expected x [N,F] and weight [O,F], got " + shape_str(x.shape()) +
                     " and " + shape_str(weight.shape()));
  }
  const std::size_t batch = x.dim(0), features = x.dim(1), outputs = weight.dim(0);
  if (weight.dim(1) != features) {
    throw ShapeError("linear: x has " + std::to_string(features) + " features but weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.defined() && bias.shape() != Shape{outputs}) {
    throw ShapeError("linear: bias must have shape [" + std::to_string(outputs) + "], got " +
                     shape_str(bias.shape()));
  }
  const bool record = should_record({&x, &weight, &bias});
  Tensor out({batch, outputs}, record);
  auto xv = x.values();
  auto wv = weight.values();
  auto o = out.mutable_values();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < outputs; ++j) {
      double s = bias.defined() ? bias.values()[j] : 0.0;
      for (std::size_t f = 0; f < features; ++f) s += xv[n * features + f] * wv[j * features + f];
      o[n * outputs + j] = s;
    }
  }
  if (record) {
    Tape::active()->record(out, [x, weight, bias, out, batch, features, outputs]() mutable {
      auto g = out.grad();
      auto xv = x.values();
      auto wv = weight.values();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t j = 0; j < outputs; ++j) {
          const double gj = g[n * outputs + j];
          if (bias.requires_grad()) bias.mutable_grad()[j] += gj;
          if (weight.requires_grad()) {
            auto gw = weight.mutable_grad();
            for (std::size_t f = 0; f < features; ++f) gw[j * features + f] += gj * xv[n * features + f];
          }
          if (x.requires_grad()) {
            auto gx = x.mutable_grad();
            for (std::size_t f = 0; f < features; ++f) gx[n * features + f] += gj * wv[j * features + f];
          }
        }
      }
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  const std::size_t n = pred.numel();
  auto p = pred.values();
  auto t = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  const bool record = should_record({&pred, &target});
  Tensor out = Tensor::scalar(s / static_cast<double>(n), record);
  if (record) {
    Tape::active()->record(out, [pred, target, out, n]() mutable {
      const double g = out.grad()[0] * 2.0 / static_cast<double>(n);
      auto p = pred.values();
      auto t = target.values();
      if (pred.requires_grad()) {
        auto gp = pred.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g * (p[i] - t[i]);
      }
      if (target.requires_grad()) {
        auto gt = target.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (p[i] - t[i]);
      }
    });
  }
  return out;
}

}  // namespace patchage::ops
