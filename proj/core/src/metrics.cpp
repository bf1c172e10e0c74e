#include "patchage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "detail/file_io.hpp"
#include "detail/text.hpp"
#include "patchage/error.hpp"

namespace patchage {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth, const char* what) {
  if (pred.size() != truth.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) throw ShapeError(std::string(what) + ": empty input");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "r2");
  const double m = mean_of(truth);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - m) * (truth[i] - m);
  }
  if (!(ss_tot > 0.0)) throw NumericError("r2: true values have zero variance");
  return 1.0 - ss_res / ss_tot;
}

NullModel null_model(std::span<const double> train_ages) {
  if (train_ages.empty()) throw ConfigError("null_model: no training ages");
  return NullModel{mean_of(train_ages)};
}

MetricsReport evaluate(const std::string& label, std::span<const double> pred, std::span<const double> truth) {
  return MetricsReport{label, mae(pred, truth), r2(pred, truth), pred.size()};
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "fit_line");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw NumericError("fit_line: regressor has zero variance");
  const double slope = sxy / sxx;
  return LineFit{slope, my - slope * mx};
}

HeatBin heat_bin(double mae_years) {
  if (std::isnan(mae_years)) throw NumericError("heat_bin: MAE is NaN");
  if (mae_years < 3.0) return HeatBin::kRed;
  if (mae_years < 3.5) return HeatBin::kOrange;
  if (mae_years < 4.0) return HeatBin::kGreen;
  return HeatBin::kBlue;
}

const char* heat_bin_name(HeatBin bin) {
  switch (bin) {
    case HeatBin::kRed:
      return "red";
    case HeatBin::kOrange:
      return "orange";
    case HeatBin::kGreen:
      return "green";
    case HeatBin::kBlue:
      return "blue";
  }
  return "unknown";
}

std::array<std::uint8_t, 3> heat_bin_rgb(HeatBin bin) {
  switch (bin) {
    case HeatBin::kRed:
      return {220, 40, 40};
    case HeatBin::kOrange:
      return {245, 150, 30};
    case HeatBin::kGreen:
      return {50, 170, 70};
    case HeatBin::kBlue:
      return {50, 90, 210};
  }
  return {0, 0, 0};
}

PatchHeatmap build_heatmap(const GridSpec& grid, std::span<const double> per_patch_mae) {
  grid.validate();
  if (per_patch_mae.size() != patch_count(grid)) {
    throw ShapeError("build_heatmap: " + std::to_string(per_patch_mae.size()) + " MAE values for " +
                     std::to_string(patch_count(grid)) + " patches");
  }
  PatchHeatmap h{grid, {per_patch_mae.begin(), per_patch_mae.end()}, {}};
  for (double m : per_patch_mae) h.bins.push_back(heat_bin(m));
  return h;
}

Volume heatmap_overlay(const PatchHeatmap& heatmap) {
  const auto& g = heatmap.grid;
  Volume overlay(g.crop_dims);
  std::vector<double> best(overlay.size(), std::numeric_limits<double>::infinity());
  for (const auto& ref : enumerate_patches(g)) {
    const double m = heatmap.mae[ref.index];
    for (std::size_t z = ref.offset[2]; z < ref.offset[2] + g.patch_size[2]; ++z) {
      for (std::size_t y = ref.offset[1]; y < ref.offset[1] + g.patch_size[1]; ++y) {
        for (std::size_t x = ref.offset[0]; x < ref.offset[0] + g.patch_size[0]; ++x) {
          const std::size_t i = overlay.index(x, y, z);
          if (m < best[i]) {
            best[i] = m;
            overlay.values()[i] = static_cast<double>(heatmap.bins[ref.index]);
          }
        }
      }
    }
  }
  return overlay;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height * 3) throw ShapeError("write_ppm: pixel buffer size mismatch");
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  detail::write_file_atomic(path, out);
}

RgbImage render_overlay_slice(const Volume& overlay, SliceAxis axis, const Volume* background) {
  if (background && background->dims() != overlay.dims()) {
    throw ShapeError("render_overlay_slice: background extent differs from overlay");
  }
  const auto& d = overlay.dims();
  // Transverse: x across, y up. Sagittal: y across, z up.
  const std::size_t w = axis == SliceAxis::kTransverse ? d[0] : d[1];
  const std::size_t h = axis == SliceAxis::kTransverse ? d[1] : d[2];
  double lo = 0.0, hi = 1.0;
  if (background) {
    const auto [mn, mx] = std::minmax_element(background->values().begin(), background->values().end());
    lo = *mn;
    hi = *mx > *mn ? *mx : *mn + 1.0;
  }
  RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (std::size_t row = 0; row < h; ++row) {
    for (std::size_t col = 0; col < w; ++col) {
      const std::size_t up = h - 1 - row;
      std::size_t x, y, z;
      if (axis == SliceAxis::kTransverse) {
        x = col, y = up, z = d[2] / 2;
      } else {
        x = d[0] / 2, y = col, z = up;
      }
      const int code = static_cast<int>(overlay.at(x, y, z));
      const double gray = background ? (background->at(x, y, z) - lo) / (hi - lo) : 1.0;
      std::array<double, 3> rgb{gray * 255.0, gray * 255.0, gray * 255.0};
      if (code >= 1 && code <= 4) {
        const auto c = heat_bin_rgb(static_cast<HeatBin>(code));
        for (int k = 0; k < 3; ++k) rgb[k] = background ? 0.5 * rgb[k] + 0.5 * c[k] : c[k];
      }
      for (int k = 0; k < 3; ++k) {
        img.pixels[(row * w + col) * 3 + k] = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[k]), 0L, 255L));
      }
    }
  }
  return img;
}

LineFit export_scatter(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                       std::span<const double> pred, std::span<const double> truth, const std::string& title) {
  const LineFit fit = fit_line(truth, pred);

  std::ostringstream csv;
  csv << "true,pred\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    csv << detail::format_double(truth[i]) << ',' << detail::format_double(pred[i]) << '\n';
  }
  detail::write_file_atomic(csv_path, csv.str());

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    lo = std::min({lo, pred[i], truth[i]});
    hi = std::max({hi, pred[i], truth[i]});
  }
  const double pad = std::max(1.0, 0.05 * (hi - lo));
  lo -= pad;
  hi += pad;
  constexpr double kSize = 400.0, kMargin = 50.0;
  auto px = [&](double v) { return kMargin + (v - lo) / (hi - lo) * kSize; };
  auto py = [&](double v) { return kMargin + kSize - (v - lo) / (hi - lo) * kSize; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"500\" height=\"500\" viewBox=\"0 0 500 500\">\n";
  svg << "<rect width=\"500\" height=\"500\" fill=\"white\"/>\n";
  svg << "<text x=\"250\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  svg << "<rect x=\"50\" y=\"50\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"250\" y=\"485\" text-anchor=\"middle\" font-size=\"12\">chronological age (years)</text>\n";
  svg << "<text x=\"15\" y=\"250\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 250)\">"
         "predicted age (years)</text>\n";
  svg << "<text x=\"50\" y=\"465\" font-size=\"10\">" << num(lo) << "</text>\n";
  svg << "<text x=\"450\" y=\"465\" text-anchor=\"end\" font-size=\"10\">" << num(hi) << "</text>\n";
  svg << "<line x1=\"" << num(px(lo)) << "\" y1=\"" << num(py(lo)) << "\" x2=\"" << num(px(hi)) << "\" y2=\""
      << num(py(hi)) << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  svg << "<line x1=\"" << num(px(lo)) << "\" y1=\"" << num(py(fit.slope * lo + fit.intercept)) << "\" x2=\""
      << num(px(hi)) << "\" y2=\"" << num(py(fit.slope * hi + fit.intercept)) << "\" stroke=\"red\"/>\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    svg << "<circle cx=\"" << num(px(truth[i])) << "\" cy=\"" << num(py(pred[i]))
        << "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
  }
  svg << "</svg>\n";
  detail::write_file_atomic(svg_path, svg.str());
  return fit;
}

}  // namespace patchage
