#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crowdmt/crowd_annotations.hpp"
#include "crowdmt/dataset.hpp"
#include "crowdmt/evaluation.hpp"
#include "crowdmt/image.hpp"
#include "crowdmt/model.hpp"
#include "crowdmt/nn.hpp"
#include "crowdmt/prediction_matrix.hpp"

namespace crowdmt {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  int epochs{30};
  int batch_size{20};
  double learning_rate{2.0e-5};
  double rho{0.9};
  double epsilon{1e-7};
  std::uint64_t seed{0};
  bool use_class_weights{true};
  // Compute class weights from the whole manifest instead of the fold's
  // training subset.
  bool global_class_weights{false};

  void validate() const;
};

// RMSprop: v <- rho v + (1 - rho) g^2;  p <- p - lr g / (sqrt(v) + eps).
// Parameters whose `trainable` flag is off are left untouched.
class RmsProp {
 public:
  RmsProp(double learning_rate, double rho, double epsilon) : lr_(learning_rate), rho_(rho), eps_(epsilon) {}
  void step(const std::vector<nn::Parameter*>& params);

 private:
  double lr_, rho_, eps_;
  std::unordered_map<const nn::Parameter*, std::vector<double>> mean_square_;
};

// The four trainable experiment arms.
enum class Arm : std::uint8_t { baseline, A, B, C };
inline constexpr Arm kArms[] = {Arm::baseline, Arm::A, Arm::B, Arm::C};
std::string arm_name(Arm arm);               // "baseline", "A", "B", "C"
std::optional<Arm> parse_arm(std::string_view s);  // also accepts asymmetry/border/color
ModelConfig model_config_for(Arm arm, Variant variant, const ModelConfig& base);

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Image load(const std::string& lesion_id) const = 0;
};

// Images decoded from the manifest's image paths, cached in memory up to a
// byte budget.
class ManifestImageSource : public ImageSource {
 public:
  explicit ManifestImageSource(const DatasetManifest& manifest, std::size_t cache_bytes = std::size_t{512} << 20)
      : manifest_(manifest), budget_(cache_bytes) {}
  Image load(const std::string& lesion_id) const override;

 private:
  const DatasetManifest& manifest_;
  std::size_t budget_;
  mutable std::size_t used_{0};
  mutable std::unordered_map<std::string, Image> cache_;
};

class InMemoryImageSource : public ImageSource {
 public:
  void add(std::string lesion_id, Image image) { images_[std::move(lesion_id)] = std::move(image); }
  Image load(const std::string& lesion_id) const override;

 private:
  std::unordered_map<std::string, Image> images_;
};

struct TrainingData {
  const DatasetManifest* manifest{nullptr};
  const FeatureTable* features{nullptr};  // required for multi-task models
  const ImageSource* images{nullptr};
  AugmentationSpec augmentation;
};

struct BatchExample {
  Image image;
  int label{0};
  double aux_target{0.0};
  std::uint8_t aux_mask{0};
};

// Zeroes gradients, runs the batch through `model` and accumulates the
// gradient of the combined loss. Returns the loss.
double compute_gradients(Model& model, std::span<const BatchExample> batch, const ClassWeights& weights);
// compute_gradients followed by an optimizer step. Throws TrainingError on a
// non-finite loss.
double train_step(Model& model, RmsProp& optimizer, std::span<const BatchExample> batch, const ClassWeights& weights);

struct SubsetPredictions {
  std::vector<std::string> lesion_ids;
  std::vector<double> probabilities;
  std::vector<int> labels;
};

struct RunRecord {
  std::string model_name;  // arm name
  std::optional<Feature> auxiliary_feature;
  bool frozen{false};
  int fold_index{0};
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  std::size_t steps{0};
  ClassWeights class_weights;
  std::uint64_t encoder_checksum_before{0};
  std::uint64_t encoder_checksum_after{0};
  SubsetPredictions validation;
  SubsetPredictions test;
  TrainingConfig training;
  ModelConfig model;

  Variant variant() const { return frozen ? Variant::frozen : Variant::nonfrozen; }
};

// Trains `model` in place on the fold's training subset and records
// per-epoch losses plus final-epoch validation and test predictions.
RunRecord train_one(Model& model, const FoldSplit& fold, const TrainingData& data, const TrainingConfig& cfg);
// Builds the model from `config` (seeded with cfg.seed) and trains it.
RunRecord train_one(const ModelConfig& config, const FoldSplit& fold, const TrainingData& data,
                    const TrainingConfig& cfg);

struct ExperimentPlan {
  std::vector<Arm> arms{Arm::baseline, Arm::A, Arm::B, Arm::C};
  std::vector<Variant> variants{Variant::frozen, Variant::nonfrozen};
  ModelConfig base_model;
};

enum class Subset : std::uint8_t { validation, test };

// The multi-task columns A, B and C for one fold and variant.
PredictionMatrix build_prediction_matrix(const std::vector<RunRecord>& runs, int fold, Variant variant,
                                         Subset subset);

struct CrossValidationResult {
  std::vector<RunRecord> runs;
  // Keyed by (variant, fold); present when all three multi-task arms ran.
  std::map<std::pair<Variant, int>, PredictionMatrix> test_matrices;
  std::map<std::pair<Variant, int>, PredictionMatrix> validation_matrices;
};

// Every arm x variant x fold. Run seeds are cfg.seed + fold index, so all
// arms of a fold start from the same initialization.
CrossValidationResult run_cross_validation(const ExperimentPlan& plan, const std::vector<FoldSplit>& folds,
                                           const TrainingData& data, const TrainingConfig& cfg);

// `lesion_id,fold,model,variant,probability,label`
struct PredictionRow {
  std::string lesion_id;
  int fold{0};
  std::string model;
  Variant variant{Variant::nonfrozen};
  double probability{0.0};
  int label{0};
};
void write_predictions_csv(const std::filesystem::path& path, int fold, const std::string& model, Variant variant,
                           const SubsetPredictions& predictions);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);
SubsetPredictions to_subset_predictions(const std::vector<PredictionRow>& rows);

std::string run_record_to_json(const RunRecord& record);

}  // namespace crowdmt
