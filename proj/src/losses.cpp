#include "crowdmt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdmt {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

double mask_total(std::span<const std::uint8_t> mask) {
  double n = 0.0;
  for (auto m : mask) {
    if (m > 1) throw std::invalid_argument("masked_mse: mask must be 0 or 1");
    n += m;
  }
  return std::max(1.0, n);
}

}  // namespace

double weighted_bce(std::span<const int> y_true, std::span<const double> p_pred, const ClassWeights& weights) {
  require_same_length(y_true.size(), p_pred.size(), "weighted_bce");
  if (y_true.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double p = std::clamp(p_pred[i], kProbabilityClip, 1.0 - kProbabilityClip);
    const double y = y_true[i];
    total += weights(y_true[i]) * -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return total / static_cast<double>(y_true.size());
}

std::vector<double> weighted_bce_gradient(std::span<const int> y_true, std::span<const double> p_pred,
                                          const ClassWeights& weights) {
  require_same_length(y_true.size(), p_pred.size(), "weighted_bce");
  std::vector<double> g(y_true.size(), 0.0);
  const double n = static_cast<double>(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double p = p_pred[i];
    if (p < kProbabilityClip || p > 1.0 - kProbabilityClip) continue;
    const double y = y_true[i];
    g[i] = weights(y_true[i]) * (-y / p + (1.0 - y) / (1.0 - p)) / n;
  }
  return g;
}

double masked_mse(std::span<const double> aux_true, std::span<const double> aux_pred,
                  std::span<const std::uint8_t> aux_mask) {
  require_same_length(aux_true.size(), aux_pred.size(), "masked_mse");
  require_same_length(aux_true.size(), aux_mask.size(), "masked_mse");
  const double denom = mask_total(aux_mask);
  double total = 0.0;
  for (std::size_t i = 0; i < aux_true.size(); ++i) {
    if (!aux_mask[i]) continue;
    const double d = aux_pred[i] - aux_true[i];
    total += d * d;
  }
  return total / denom;
}

std::vector<double> masked_mse_gradient(std::span<const double> aux_true, std::span<const double> aux_pred,
                                        std::span<const std::uint8_t> aux_mask) {
  require_same_length(aux_true.size(), aux_pred.size(), "masked_mse");
  require_same_length(aux_true.size(), aux_mask.size(), "masked_mse");
  const double denom = mask_total(aux_mask);
  std::vector<double> g(aux_true.size(), 0.0);
  for (std::size_t i = 0; i < aux_true.size(); ++i) {
    if (aux_mask[i]) g[i] = 2.0 * (aux_pred[i] - aux_true[i]) / denom;
  }
  return g;
}

void LossBatch::validate() const {
  require_same_length(y_true.size(), p_pred.size(), "LossBatch");
  const bool has_aux = !aux_true.empty() || !aux_pred.empty() || !aux_mask.empty();
  if (has_aux) {
    require_same_length(y_true.size(), aux_true.size(), "LossBatch");
    require_same_length(y_true.size(), aux_pred.size(), "LossBatch");
    require_same_length(y_true.size(), aux_mask.size(), "LossBatch");
  }
  if (!(class_weights.benign > 0.0 && class_weights.malignant > 0.0)) {
    throw std::invalid_argument("LossBatch: class weights must be positive");
  }
}

double combined_loss(const LossBatch& batch) {
  batch.validate();
  double loss = weighted_bce(batch.y_true, batch.p_pred, batch.class_weights);
  if (!batch.aux_true.empty()) loss += masked_mse(batch.aux_true, batch.aux_pred, batch.aux_mask);
  return loss;
}

LossGradients combined_loss_gradients(const LossBatch& batch) {
  batch.validate();
  LossGradients g;
  g.d_probability = weighted_bce_gradient(batch.y_true, batch.p_pred, batch.class_weights);
  if (!batch.aux_true.empty()) g.d_auxiliary = masked_mse_gradient(batch.aux_true, batch.aux_pred, batch.aux_mask);
  return g;
}

}  // namespace crowdmt
