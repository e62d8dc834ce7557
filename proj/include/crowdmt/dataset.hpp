#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crowdmt/image.hpp"

namespace crowdmt {

enum class Diagnosis : std::uint8_t { melanoma, seborrheic_keratosis, nevus };

std::string_view diagnosis_name(Diagnosis d);
std::optional<Diagnosis> parse_diagnosis(std::string_view s);

// benign = 0, malignant = 1
inline int label_of(Diagnosis d) { return d == Diagnosis::nevus ? 0 : 1; }

struct LesionRecord {
  std::string lesion_id;
  std::filesystem::path image_path;
  Diagnosis diagnosis{Diagnosis::nevus};
  int label{0};
};

class DatasetManifest {
 public:
  DatasetManifest() = default;
  // Validates id uniqueness and derives labels and class counts.
  explicit DatasetManifest(std::vector<LesionRecord> records);

  const std::vector<LesionRecord>& records() const { return records_; }
  const std::map<Diagnosis, std::size_t>& class_counts() const { return class_counts_; }
  std::size_t size() const { return records_.size(); }

  std::vector<std::string> lesion_ids() const;
  std::vector<int> labels() const;
  const LesionRecord& at(std::string_view lesion_id) const;
  bool contains(std::string_view lesion_id) const;

 private:
  std::vector<LesionRecord> records_;
  std::map<Diagnosis, std::size_t> class_counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads `lesion_id,diagnosis` and resolves `<image_dir>/<lesion_id>.{jpg,jpeg,png,bmp,ppm}`.
// An empty image_dir skips image resolution.
DatasetManifest load_manifest(const std::filesystem::path& labels_path, const std::filesystem::path& image_dir);

struct SplitFractions {
  double train{0.70};
  double val{0.175};
  double test{0.125};
};

struct FoldSplit {
  int fold_index{0};
  std::uint64_t seed{0};
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;

  friend bool operator==(const FoldSplit&, const FoldSplit&) = default;
};

// k independent stratified shuffle-splits; fold i shuffles each class with
// seed + i. Per-class val/test sizes are round-half-even(fraction * N_c) and
// train takes the remainder. Subsets are listed in manifest order.
std::vector<FoldSplit> stratified_splits(const DatasetManifest& manifest, int k, SplitFractions fractions,
                                         std::uint64_t seed);

std::string fold_split_to_json(const FoldSplit& split);
FoldSplit fold_split_from_json(const std::string& text);

struct ClassWeights {
  double benign{1.0};
  double malignant{1.0};
  double operator()(int label) const { return label == 1 ? malignant : benign; }
};

// w_c = N / (2 N_c). Throws if a class is absent.
ClassWeights compute_class_weights(const std::vector<int>& labels);

struct AugmentationSpec {
  double max_rotation_deg{180.0};
  bool horizontal_flip{true};
  bool vertical_flip{true};
  double width_shift_frac{0.10};
  double height_shift_frac{0.10};
  double shear_deg{0.2};
  double channel_shift_max{20.0};
  int output_height{384};
  int output_width{384};

  void validate() const;
};

// Random rotation, flips, shifts, shear and channel shift, followed by a
// bilinear resize to the configured output size. Deterministic given `rng`.
Image augment(const Image& image, const AugmentationSpec& spec, std::mt19937_64& rng);

// Resize only; used for validation and test images.
Image preprocess(const Image& image, const AugmentationSpec& spec);

}  // namespace crowdmt
