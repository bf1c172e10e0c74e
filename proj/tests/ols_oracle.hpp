#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "patchage/prediction_table.hpp"
#include "patchage/random.hpp"

namespace patchage::testing {

// Solves (X^T X) w = X^T y by Gauss-Jordan elimination with partial pivoting.
// X is row-major n x p.
inline std::vector<double> normal_equations(const std::vector<double>& x, std::size_t n, std::size_t p,
                                            const std::vector<double>& y) {
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t r = 0; r < n; ++r) a[i][j] += x[r * p + i] * x[r * p + j];
    }
    for (std::size_t r = 0; r < n; ++r) a[i][p] += x[r * p + i] * y[r];
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (a[piv][c] == 0.0) throw std::runtime_error("singular normal equations");
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> w(p);
  for (std::size_t i = 0; i < p; ++i) w[i] = a[i][p] / a[i][i];
  return w;
}

// Table whose ages are a noisy affine function of random patch predictions.
inline PredictionTable random_table(Rng& rng, std::size_t rows, std::size_t cols, double noise = 1.0) {
  PredictionTable t;
  t.split = "validation";
  for (std::size_t c = 0; c < cols; ++c) t.columns.push_back(static_cast<long>(c));
  std::vector<double> w(cols);
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    t.subject_ids.push_back("s" + std::to_string(r));
    double age = 50.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double y = rng.uniform(40.0, 80.0);
      t.values.push_back(y);
      age += w[c] * (y - 60.0);
    }
    t.ages.push_back(age + noise * rng.normal());
  }
  return t;
}

}  // namespace patchage::testing
