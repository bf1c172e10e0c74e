#include <Eigen/Core>
#include <string>

#include "patchage/error.hpp"
#include "patchage/ops.hpp"

namespace patchage::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t batch, in_channels, out_channels, kernel;
  std::size_t in_d, in_h, in_w;
  std::size_t out_d, out_h, out_w;
  int stride, padding;

  std::size_t in_spatial() const { return in_d * in_h * in_w; }
  std::size_t out_spatial() const { return out_d * out_h * out_w; }
  std::size_t patch_rows() const { return in_channels * kernel * kernel * kernel; }
};

std::size_t output_extent(std::size_t extent, std::size_t kernel, int stride, int padding,
                          const char* axis) {
  const std::size_t padded = extent + 2 * static_cast<std::size_t>(padding);
  if (kernel > padded) {
    throw ShapeError(std::string("conv3d: kernel ") + std::to_string(kernel) + " exceeds padded " +
                     axis + " extent " + std::to_string(padded));
  }
  return (padded - kernel) / static_cast<std::size_t>(stride) + 1;
}

ConvGeometry validate(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                      int padding) {
  if (input.rank() != 5) {
    throw ShapeError("conv3d: input must be [N,C_in,D,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 5) {
    throw ShapeError("conv3d: weight must be [C_out,C_in,k,k,k], got " + shape_str(weight.shape()));
  }
  if (stride < 1) throw ShapeError("conv3d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ShapeError("conv3d: padding must be >= 0, got " + std::to_string(padding));
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k || weight.dim(4) != k) {
    throw ShapeError("conv3d: kernel must be cubic, got " + shape_str(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv3d: C_in mismatch, input has " + std::to_string(input.dim(1)) +
                     " channels but weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.defined() && bias.shape() != Shape{weight.dim(0)}) {
    throw ShapeError("conv3d: bias must have shape [C_out=" + std::to_string(weight.dim(0)) +
                     "], got " + shape_str(bias.shape()));
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.out_channels = weight.dim(0);
  g.kernel = k;
  g.in_d = input.dim(2);
  g.in_h = input.dim(3);
  g.in_w = input.dim(4);
  g.out_d = output_extent(g.in_d, k, stride, padding, "depth");
  g.out_h = output_extent(g.in_h, k, stride, padding, "height");
  g.out_w = output_extent(g.in_w, k, stride, padding, "width");
  g.stride = stride;
  g.padding = padding;
  return g;
}

// Input coordinate for output position o and kernel tap t, or -1 when it falls in the padding.
inline long source_index(std::size_t o, std::size_t t, int stride, int padding, std::size_t extent) {
  const long i = static_cast<long>(o) * stride - padding + static_cast<long>(t);
  return (i < 0 || i >= static_cast<long>(extent)) ? -1 : i;
}

// col[(c,kd,kh,kw), (od,oh,ow)] = x[c, od*s-p+kd, oh*s-p+kh, ow*s-p+kw]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_spatial();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* xc = x + c * g.in_spatial();
    for (std::size_t kd = 0; kd < k; ++kd) {
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw, ++row) {
          double* dst = col + row * cols;
          for (std::size_t od = 0; od < g.out_d; ++od) {
            const long id = source_index(od, kd, g.stride, g.padding, g.in_d);
            for (std::size_t oh = 0; oh < g.out_h; ++oh) {
              const long ih = source_index(oh, kh, g.stride, g.padding, g.in_h);
              double* line = dst + (od * g.out_h + oh) * g.out_w;
              if (id < 0 || ih < 0) {
                std::fill(line, line + g.out_w, 0.0);
                continue;
              }
              const double* src = xc + (static_cast<std::size_t>(id) * g.in_h + ih) * g.in_w;
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const long iw = source_index(ow, kw, g.stride, g.padding, g.in_w);
                line[ow] = iw < 0 ? 0.0 : src[iw];
              }
            }
          }
        }
      }
    }
  }
}

void col2im_accumulate(const ConvGeometry& g, const double* col, double* dx) {
  const std::size_t k = g.kernel;
  const std::size_t cols = g.out_spatial();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* dxc = dx + c * g.in_spatial();
    for (std::size_t kd = 0; kd < k; ++kd) {
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw, ++row) {
          const double* src = col + row * cols;
          for (std::size_t od = 0; od < g.out_d; ++od) {
            const long id = source_index(od, kd, g.stride, g.padding, g.in_d);
            if (id < 0) continue;
            for (std::size_t oh = 0; oh < g.out_h; ++oh) {
              const long ih = source_index(oh, kh, g.stride, g.padding, g.in_h);
              if (ih < 0) continue;
              const double* line = src + (od * g.out_h + oh) * g.out_w;
              double* dst = dxc + (static_cast<std::size_t>(id) * g.in_h + ih) * g.in_w;
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const long iw = source_index(ow, kw, g.stride, g.padding, g.in_w);
                if (iw >= 0) dst[iw] += line[ow];
              }
            }
          }
        }
      }
    }
  }
}

void forward_im2col(const ConvGeometry& g, const double* x, const double* w, const double* b,
                    double* y) {
  const auto rows = static_cast<Eigen::Index>(g.patch_rows());
  const auto cols = static_cast<Eigen::Index>(g.out_spatial());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  RowMatrix col(rows, cols);
  ConstMatrixMap weight(w, cout, rows);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x + n * g.in_channels * g.in_spatial(), col.data());
    MatrixMap out(y + n * g.out_channels * g.out_spatial(), cout, cols);
    out.noalias() = weight * col;
    if (b) {
      for (Eigen::Index co = 0; co < cout; ++co) out.row(co).array() += b[co];
    }
  }
}

void backward_im2col(const ConvGeometry& g, const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db) {
  const auto rows = static_cast<Eigen::Index>(g.patch_rows());
  const auto cols = static_cast<Eigen::Index>(g.out_spatial());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  RowMatrix col(rows, cols);
  ConstMatrixMap weight(w, cout, rows);
  for (std::size_t n = 0; n < g.batch; ++n) {
    ConstMatrixMap grad_out(dy + n * g.out_channels * g.out_spatial(), cout, cols);
    if (db) {
      // Plain loop: Eigen's vectorized sum peels by address, so its order is not fixed.
      for (Eigen::Index co = 0; co < cout; ++co) {
        const double* row = grad_out.row(co).data();
        double s = 0.0;
        for (Eigen::Index i = 0; i < cols; ++i) s += row[i];
        db[co] += s;
      }
    }
    if (dw) {
      im2col(g, x + n * g.in_channels * g.in_spatial(), col.data());
      MatrixMap grad_w(dw, cout, rows);
      grad_w.noalias() += grad_out * col.transpose();
    }
    if (dx) {
      col.noalias() = weight.transpose() * grad_out;
      col2im_accumulate(g, col.data(), dx + n * g.in_channels * g.in_spatial());
    }
  }
}

void forward_direct(const ConvGeometry& g, const double* x, const double* w, const double* b,
                    double* y) {
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      double* yc = y + (n * g.out_channels + co) * g.out_spatial();
      for (std::size_t i = 0; i < g.out_spatial(); ++i) yc[i] = b ? b[co] : 0.0;
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* xc = x + (n * g.in_channels + ci) * g.in_spatial();
        const double* wk = w + (co * g.in_channels + ci) * k * k * k;
        for (std::size_t od = 0; od < g.out_d; ++od) {
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              double acc = 0.0;
              for (std::size_t kd = 0; kd < k; ++kd) {
                const long id = source_index(od, kd, g.stride, g.padding, g.in_d);
                if (id < 0) continue;
                for (std::size_t kh = 0; kh < k; ++kh) {
                  const long ih = source_index(oh, kh, g.stride, g.padding, g.in_h);
                  if (ih < 0) continue;
                  for (std::size_t kw = 0; kw < k; ++kw) {
                    const long iw = source_index(ow, kw, g.stride, g.padding, g.in_w);
                    if (iw < 0) continue;
                    acc += xc[(static_cast<std::size_t>(id) * g.in_h + ih) * g.in_w + iw] *
                           wk[(kd * k + kh) * k + kw];
                  }
                }
              }
              yc[(od * g.out_h + oh) * g.out_w + ow] += acc;
            }
          }
        }
      }
    }
  }
}

void backward_direct(const ConvGeometry& g, const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db) {
  const std::size_t k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const double* gc = dy + (n * g.out_channels + co) * g.out_spatial();
      if (db) {
        for (std::size_t i = 0; i < g.out_spatial(); ++i) db[co] += gc[i];
      }
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const std::size_t xoff = (n * g.in_channels + ci) * g.in_spatial();
        const std::size_t woff = (co * g.in_channels + ci) * k * k * k;
        for (std::size_t od = 0; od < g.out_d; ++od) {
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            for (std::size_t ow = 0; ow < g.out_w; ++ow) {
              const double go = gc[(od * g.out_h + oh) * g.out_w + ow];
              for (std::size_t kd = 0; kd < k; ++kd) {
                const long id = source_index(od, kd, g.stride, g.padding, g.in_d);
                if (id < 0) continue;
                for (std::size_t kh = 0; kh < k; ++kh) {
                  const long ih = source_index(oh, kh, g.stride, g.padding, g.in_h);
                  if (ih < 0) continue;
                  for (std::size_t kw = 0; kw < k; ++kw) {
                    const long iw = source_index(ow, kw, g.stride, g.padding, g.in_w);
                    if (iw < 0) continue;
                    const std::size_t xi = xoff + (static_cast<std::size_t>(id) * g.in_h + ih) * g.in_w + iw;
                    const std::size_t wi = woff + (kd * k + kh) * k + kw;
                    if (dw) dw[wi] += go * x[xi];
                    if (dx) dx[xi] += go * w[wi];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding,
              ConvAlgorithm algorithm) {
  const ConvGeometry g = validate(input, weight, bias, stride, padding);
  const bool record = should_record({&input, &weight, &bias});
  Tensor out({g.batch, g.out_channels, g.out_d, g.out_h, g.out_w}, record);
  const double* b = bias.defined() ? bias.values().data() : nullptr;
  if (algorithm == ConvAlgorithm::kDirect) {
    forward_direct(g, input.values().data(), weight.values().data(), b, out.mutable_values().data());
  } else {
    forward_im2col(g, input.values().data(), weight.values().data(), b, out.mutable_values().data());
  }
  if (record) {
    Tape::active()->record(out, [input, weight, bias, out, g, algorithm]() mutable {
      double* dx = input.requires_grad() ? input.mutable_grad().data() : nullptr;
      double* dw = weight.requires_grad() ? weight.mutable_grad().data() : nullptr;
      double* db = bias.requires_grad() ? bias.mutable_grad().data() : nullptr;
      const double* dy = out.grad().data();
      if (algorithm == ConvAlgorithm::kDirect) {
        backward_direct(g, input.values().data(), weight.values().data(), dy, dx, dw, db);
      } else {
        backward_im2col(g, input.values().data(), weight.values().data(), dy, dx, dw, db);
      }
    });
  }
  return out;
}

}  // namespace patchage::ops
