#include "crowdmt/prediction_matrix.hpp"

#include <cmath>

#include "crowdmt/errors.hpp"

namespace crowdmt {

const std::vector<double>& PredictionMatrix::column(std::string_view name) const {
  for (const auto& [n, values] : columns) {
    if (n == name) return values;
  }
  throw ValidationError("prediction matrix has no column '" + std::string(name) + "'");
}

void PredictionMatrix::add_column(std::string name, std::vector<double> probabilities) {
  for (const auto& c : columns) {
    if (c.first == name) throw ValidationError("duplicate prediction column '" + name + "'");
  }
  columns.emplace_back(std::move(name), std::move(probabilities));
}

void PredictionMatrix::validate() const {
  if (labels.size() != lesion_ids.size()) throw ValidationError("prediction labels not aligned with lesion ids");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("prediction labels must be 0 or 1");
  }
  for (const auto& [name, values] : columns) {
    if (values.size() != lesion_ids.size()) {
      throw ValidationError("prediction column '" + name + "' has " + std::to_string(values.size()) +
                            " rows, expected " + std::to_string(lesion_ids.size()));
    }
    for (double p : values) {
      if (!(p > 0.0 && p < 1.0)) throw ValidationError("prediction column '" + name + "' leaves (0,1)");
    }
  }
}

}  // namespace crowdmt
