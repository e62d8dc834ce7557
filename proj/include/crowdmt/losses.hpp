#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crowdmt/dataset.hpp"

namespace crowdmt {

inline constexpr double kProbabilityClip = 1e-7;

// Mean over the batch of w(y) * binary cross-entropy, with p clipped to
// [1e-7, 1 - 1e-7]. Throws std::invalid_argument on length mismatch.
double weighted_bce(std::span<const int> y_true, std::span<const double> p_pred, const ClassWeights& weights);
// d(weighted_bce)/d(p_i); zero where p_i was clipped.
std::vector<double> weighted_bce_gradient(std::span<const int> y_true, std::span<const double> p_pred,
                                          const ClassWeights& weights);

// Sum of mask_i * (pred_i - true_i)^2 over max(1, sum of mask).
double masked_mse(std::span<const double> aux_true, std::span<const double> aux_pred,
                  std::span<const std::uint8_t> aux_mask);
// 2 * mask_i * (pred_i - true_i) / max(1, sum of mask); exactly 0 where the
// mask is 0.
std::vector<double> masked_mse_gradient(std::span<const double> aux_true, std::span<const double> aux_pred,
                                        std::span<const std::uint8_t> aux_mask);

struct LossBatch {
  std::vector<int> y_true;
  std::vector<double> p_pred;
  // Empty for single-task (baseline) batches.
  std::vector<double> aux_true;
  std::vector<double> aux_pred;
  std::vector<std::uint8_t> aux_mask;
  ClassWeights class_weights;

  void validate() const;
};

struct LossGradients {
  std::vector<double> d_probability;
  std::vector<double> d_auxiliary;  // empty for single-task batches
};

// Unit-weighted sum of the classification and auxiliary terms.
double combined_loss(const LossBatch& batch);
LossGradients combined_loss_gradients(const LossBatch& batch);

}  // namespace crowdmt
