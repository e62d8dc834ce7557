#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

namespace crowdmt {

// Desk-scale stand-in for the dermoscopy data: blob-like lesions on a skin
// background whose elongation, border ripple and colour darkness follow
// latent A/B/C scores that are shifted upwards for malignant lesions. Crowd
// scores are noisy affine views of the same latents, one scale per annotator.
struct SyntheticConfig {
  int lesions{256};
  int image_size{64};
  double malignant_fraction{0.314};
  double annotated_fraction{0.5};
  // Fraction of annotated lesions that carry each feature.
  std::array<double, 3> feature_fraction{1.0, 1.0, 0.6};
  int annotator_groups{4};
  double class_shift{1.0};
  std::uint64_t seed{0};

  void validate() const;
};

struct SyntheticSummary {
  int lesions{0};
  int malignant{0};
  int annotated{0};
  std::array<int, 3> feature_counts{};
  int annotators{0};
};

// What generate_synthetic_dataset will produce, without writing anything.
SyntheticSummary expected_synthetic_summary(const SyntheticConfig& cfg);

// Writes labels.csv, annotations.csv and images/<id>.png into `dir`.
SyntheticSummary generate_synthetic_dataset(const SyntheticConfig& cfg, const std::filesystem::path& dir);

}  // namespace crowdmt
