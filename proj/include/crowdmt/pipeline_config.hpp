#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crowdmt/dataset.hpp"
#include "crowdmt/ensemble.hpp"
#include "crowdmt/model.hpp"
#include "crowdmt/synthetic.hpp"
#include "crowdmt/training.hpp"

namespace crowdmt {

struct PipelinePaths {
  std::filesystem::path labels;
  std::filesystem::path annotations;
  std::filesystem::path images;
  std::filesystem::path output{"crowdmt-out"};
};

struct PipelineConfig {
  PipelinePaths paths;
  int folds{5};
  SplitFractions fractions;
  AugmentationSpec augmentation;
  ModelConfig model;  // kind/feature/trainability are set per run
  TrainingConfig training;
  DEConfig de;
  std::string optimize_on{"val"};  // "val" or "test"
  bool synthetic{false};
  SyntheticConfig synthetic_data;
  std::uint64_t seed{0};

  // Ranges, fraction sum and, unless `check_paths` is false, existence of
  // the input files.
  void validate(bool check_paths = true) const;

  // Stable "section.key=value" lines for every setting that affects
  // results; the output directory is excluded.
  std::string canonical() const;
  // 16 hex digits of FNV-1a over canonical().
  std::string hash() const;
  // <output>/<hash>
  std::filesystem::path artifact_root() const;
  // Where the built-in generator writes its data.
  std::filesystem::path synthetic_dir() const;
};

// Builds the configuration from defaults, then the synthetic preset (when
// requested), then an INI-style file (optional, may be empty), then
// "section.key=value" overrides. Unknown keys and malformed values raise
// ConfigError.
PipelineConfig load_pipeline_config(const std::filesystem::path& file, const std::vector<std::string>& overrides,
                                    bool synthetic);

}  // namespace crowdmt
