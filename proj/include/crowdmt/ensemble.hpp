#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdmt/prediction_matrix.hpp"

namespace crowdmt {

struct EnsembleWeights {
  std::vector<double> w;
  bool normalized{false};

  // Nonnegative and summing to one within 1e-12.
  bool on_simplex() const;
};

// Projects raw nonnegative weights onto the simplex by normalization; an
// all-zero vector maps to uniform weights.
EnsembleWeights normalize_weights(const std::vector<double>& raw);

struct DEConfig {
  double tolerance{1.0e-7};
  int max_iterations{1000};
  int population_per_dim{15};
  double mutation_min{0.5};
  double mutation_max{1.0};
  double crossover{0.7};
  double lower_bound{0.0};
  double upper_bound{1.0};
  std::uint64_t seed{0};

  void validate(int dims) const;
};

struct DEResult {
  EnsembleWeights weights;
  double achieved_auc{0.0};
  double equal_weight_auc{0.0};
  int iterations{0};
  bool converged{false};
};

// Elementwise mean of exactly three columns.
std::vector<double> average_ensemble(const PredictionMatrix& pm);
// Elementwise convex combination; `w` must be normalized and match the
// column count.
std::vector<double> weighted_ensemble(const PredictionMatrix& pm, const EnsembleWeights& w);

// DE/rand/1/bin over raw weights in [lower, upper]^3 maximizing the AUC of
// the normalized blend; equal AUCs are ranked by the gap between the class
// means of the blend. The equal-weight vector is a member of the initial
// population and selection is elitist, so the result never scores below
// equal weights. Stops when the population's spread in both AUC and gap
// drops below the tolerance or after max_iterations generations.
DEResult optimize_weights_de(const PredictionMatrix& pm, const DEConfig& cfg);

// `{fold, weights: [wA,wB,wC], optimized_on, achieved_auc}`
std::string weights_to_json(int fold, const EnsembleWeights& w, const std::string& optimized_on, double achieved_auc);

struct WeightsRecord {
  int fold{0};
  EnsembleWeights weights;
  std::string optimized_on;
  double achieved_auc{0.0};
};
WeightsRecord weights_from_json(const std::string& text);

}  // namespace crowdmt
