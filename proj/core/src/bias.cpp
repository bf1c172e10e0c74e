#include "patchage/bias.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "detail/json_util.hpp"
#include "patchage/error.hpp"
#include "patchage/metrics.hpp"

namespace patchage {

void to_json(nlohmann::json& j, const BiasModel& m) {
  j = nlohmann::json{{"alpha", m.alpha}, {"beta", m.beta}, {"fit_set", m.fit_set}, {"fit_count", m.fit_count}};
}

void from_json(const nlohmann::json& j, BiasModel& m) {
  detail::JsonFields f(j, "bias");
  f.get("alpha", m.alpha);
  f.get("beta", m.beta);
  f.get("fit_set", m.fit_set);
  f.get("fit_count", m.fit_count);
  f.finish();
}

BiasModel fit_bias(std::span<const double> predicted, std::span<const double> chronological,
                   const std::string& fit_set) {
  if (predicted.size() != chronological.size()) throw ShapeError("fit_bias: length mismatch");
  if (predicted.size() < 3) throw ConfigError("fit_bias: at least 3 subjects are required");
  std::vector<double> delta(predicted.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = predicted[i] - chronological[i];
  LineFit line;
  try {
    line = fit_line(chronological, delta);
  } catch (const NumericError&) {
    throw NumericError("fit_bias: chronological ages have zero variance");
  }
  if (!std::isfinite(line.slope) || !std::isfinite(line.intercept)) throw NumericError("fit_bias: non-finite fit");
  return BiasModel{line.slope, line.intercept, fit_set, predicted.size()};
}

std::vector<double> apply_bias(const BiasModel& model, std::span<const double> predicted,
                               std::span<const double> chronological) {
  if (predicted.size() != chronological.size()) throw ShapeError("apply_bias: length mismatch");
  std::vector<double> out(predicted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = predicted[i] - (model.alpha * chronological[i] + model.beta);
  }
  return out;
}

}  // namespace patchage
