#include "patchage/prediction_table.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "detail/file_io.hpp"
#include "detail/text.hpp"
#include "patchage/error.hpp"

namespace patchage {

namespace {

std::string column_name(long label) { return label < 0 ? "y_baseline" : "y_" + std::to_string(label); }

long parse_column_name(const std::string& name, const std::string& context) {
  if (name == "y_baseline") return -1;
  if (name.size() < 3 || name.rfind("y_", 0) != 0) throw ArtifactError(context + ": bad column '" + name + "'");
  const std::string digits = name.substr(2);
  for (char c : digits) {
    if (c < '0' || c > '9') throw ArtifactError(context + ": bad column '" + name + "'");
  }
  return std::stol(digits);
}

}  // namespace

std::vector<double> PredictionTable::column(std::size_t col) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, col);
  return out;
}

std::optional<std::size_t> PredictionTable::find_column(long label) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] == label) return c;
  }
  return std::nullopt;
}

std::vector<std::size_t> PredictionTable::require_columns(std::span<const std::size_t> labels) const {
  std::vector<std::size_t> positions;
  std::string missing;
  for (std::size_t label : labels) {
    if (auto c = find_column(static_cast<long>(label))) {
      positions.push_back(*c);
    } else {
      missing += (missing.empty() ? "" : ", ") + std::to_string(label);
    }
  }
  if (!missing.empty()) throw ConfigError("prediction table '" + split + "' lacks patch columns: " + missing);
  return positions;
}

void PredictionTable::validate() const {
  if (ages.size() != rows()) throw ConfigError("prediction table: age count differs from subject count");
  if (values.size() != rows() * cols()) throw ConfigError("prediction table: cell count differs from rows x cols");
  std::set<long> labels(columns.begin(), columns.end());
  if (labels.size() != columns.size()) throw ConfigError("prediction table: duplicate column label");
  for (std::size_t r = 0; r < rows(); ++r) {
    if (!std::isfinite(ages[r])) throw ConfigError("prediction table: non-finite age for " + subject_ids[r]);
    for (std::size_t c = 0; c < cols(); ++c) {
      if (!std::isfinite(at(r, c))) {
        throw ConfigError("prediction table: missing or non-finite cell (" + subject_ids[r] + ", " +
                          column_name(columns[c]) + ")");
      }
    }
  }
}

void write_prediction_csv(const std::filesystem::path& path, const PredictionTable& table,
                          const std::string& config_hash) {
  table.validate();
  std::ostringstream out;
  out << "# split: " << table.split << "\n";
  if (!config_hash.empty()) out << "# config_hash: " << config_hash << "\n";
  out << "subject_id,age_years";
  for (long label : table.columns) out << ',' << column_name(label);
  out << '\n';
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << table.subject_ids[r] << ',' << detail::format_double(table.ages[r]);
    for (std::size_t c = 0; c < table.cols(); ++c) out << ',' << detail::format_double(table.at(r, c));
    out << '\n';
  }
  detail::write_file_atomic(path, out.str());
}

PredictionTable read_prediction_csv(const std::filesystem::path& path, std::string* config_hash) {
  const std::string context = path.string();
  std::istringstream in(detail::read_file_text(path));
  PredictionTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    const std::string_view row = detail::trim_cr(line);
    if (row.empty()) continue;
    if (row.front() == '#') {
      const std::string text(row.substr(1));
      const auto colon = text.find(':');
      if (colon == std::string::npos) continue;
      std::string key = text.substr(0, colon);
      std::string value = text.substr(colon + 1);
      auto strip = [](std::string& s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
      };
      strip(key);
      strip(value);
      if (key == "split") table.split = value;
      if (key == "config_hash" && config_hash) *config_hash = value;
      continue;
    }
    auto fields = detail::split_csv_line(row);
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "subject_id" || fields[1] != "age_years") {
        throw ArtifactError(context + ": expected header 'subject_id,age_years,...'");
      }
      for (std::size_t i = 2; i < fields.size(); ++i) table.columns.push_back(parse_column_name(fields[i], context));
      have_header = true;
      continue;
    }
    if (fields.size() != table.cols() + 2) throw ArtifactError(context + ": row has wrong field count");
    table.subject_ids.push_back(fields[0]);
    table.ages.push_back(detail::parse_double(fields[1], context));
    for (std::size_t i = 2; i < fields.size(); ++i) table.values.push_back(detail::parse_double(fields[i], context));
  }
  if (!have_header) throw ArtifactError(context + ": missing header");
  try {
    table.validate();
  } catch (const ConfigError& e) {
    throw ArtifactError(context + ": " + e.what());
  }
  return table;
}

}  // namespace patchage
