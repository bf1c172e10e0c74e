#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchage/patch_grid.hpp"
#include "patchage/volume.hpp"

namespace patchage {

double mae(std::span<const double> pred, std::span<const double> truth);
// 1 - SS_res / SS_tot about the mean of `truth`. Throws NumericError for constant truth.
double r2(std::span<const double> pred, std::span<const double> truth);

struct NullModel {
  double mean_age = 0.0;
  std::vector<double> predict(std::size_t n) const { return std::vector<double>(n, mean_age); }
};

NullModel null_model(std::span<const double> train_ages);

struct MetricsReport {
  std::string label;
  double mae_years = 0.0;
  double r2 = 0.0;
  std::size_t n_subjects = 0;
};

MetricsReport evaluate(const std::string& label, std::span<const double> pred, std::span<const double> truth);

// Simple least-squares line y = slope * x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

// Half-open bins in years: red < 3.0 <= orange < 3.5 <= green < 4.0 <= blue.
enum class HeatBin : std::uint8_t { kRed = 1, kOrange = 2, kGreen = 3, kBlue = 4 };

HeatBin heat_bin(double mae_years);
const char* heat_bin_name(HeatBin bin);
std::array<std::uint8_t, 3> heat_bin_rgb(HeatBin bin);

struct PatchHeatmap {
  GridSpec grid;
  std::vector<double> mae;
  std::vector<HeatBin> bins;
};

PatchHeatmap build_heatmap(const GridSpec& grid, std::span<const double> per_patch_mae);

// Volume over the cropped extent holding, per voxel, the bin code of the lowest-MAE
// patch covering it, or 0 where no patch reaches.
Volume heatmap_overlay(const PatchHeatmap& heatmap);

// 8-bit RGB image, rows top to bottom.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

// Binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

enum class SliceAxis { kTransverse, kSagittal };

// Central slice of the overlay (z = nz/2 for transverse, x = nx/2 for sagittal), color
// coded by bin and blended over `background` (same extent) when given.
RgbImage render_overlay_slice(const Volume& overlay, SliceAxis axis, const Volume* background = nullptr);

// CSV "true,pred" (one row per subject) and an SVG scatter with the identity line and
// the least-squares fit of pred on true. Returns that fit.
LineFit export_scatter(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                       std::span<const double> pred, std::span<const double> truth, const std::string& title);

}  // namespace patchage
