#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace patchage {

// Per-subject predictions, one column per model. Column labels are patch indices;
// -1 labels the whole-volume baseline.
struct PredictionTable {
  std::string split;
  std::vector<std::string> subject_ids;
  std::vector<double> ages;
  std::vector<long> columns;
  std::vector<double> values;  // row-major, rows() x cols()

  std::size_t rows() const noexcept { return subject_ids.size(); }
  std::size_t cols() const noexcept { return columns.size(); }

  double at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return values[row * cols() + col]; }

  std::vector<double> column(std::size_t col) const;
  // Position of the column labelled `label`, if present.
  std::optional<std::size_t> find_column(long label) const;
  // Throws ConfigError naming every label not present.
  std::vector<std::size_t> require_columns(std::span<const std::size_t> labels) const;

  // Throws ConfigError on inconsistent sizes, duplicate labels, or non-finite cells.
  void validate() const;

  bool operator==(const PredictionTable&) const = default;
};

// CSV: "# split: <name>" and optional "# config_hash: <hash>" lines, then the header
// "subject_id,age_years,y_<label>..." (y_baseline for label -1), one row per subject.
void write_prediction_csv(const std::filesystem::path& path, const PredictionTable& table,
                          const std::string& config_hash = "");
PredictionTable read_prediction_csv(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace patchage
