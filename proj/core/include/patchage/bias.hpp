#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace patchage {

// delta = predicted - chronological is modelled as alpha * chronological + beta.
struct BiasModel {
  double alpha = 0.0;
  double beta = 0.0;
  std::string fit_set;
  std::size_t fit_count = 0;

  bool operator==(const BiasModel&) const = default;
};

void to_json(nlohmann::json& j, const BiasModel& m);
void from_json(const nlohmann::json& j, BiasModel& m);

// Least-squares line of delta on chronological age. Needs at least 3 subjects and
// non-constant chronological ages.
BiasModel fit_bias(std::span<const double> predicted, std::span<const double> chronological,
                   const std::string& fit_set = "validation");

// corrected = predicted - (alpha * chronological + beta)
std::vector<double> apply_bias(const BiasModel& model, std::span<const double> predicted,
                               std::span<const double> chronological);

}  // namespace patchage
