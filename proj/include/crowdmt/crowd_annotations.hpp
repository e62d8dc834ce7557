#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crowdmt {

// The three dermoscopic visual criteria scored by the crowd.
enum class Feature : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::array<Feature, 3> kFeatures{Feature::A, Feature::B, Feature::C};

char feature_letter(Feature f);
std::string_view feature_name(Feature f);  // "asymmetry", "border", "color"
std::optional<Feature> parse_feature(std::string_view s);

struct RawAnnotation {
  std::string lesion_id;
  std::string annotator_id;
  Feature feature{Feature::A};
  double score{0.0};

  friend bool operator==(const RawAnnotation&, const RawAnnotation&) = default;
};

struct AnnotatorStats {
  std::string annotator_id;
  Feature feature{Feature::A};
  double mean{0.0};
  double std{0.0};  // population
  std::size_t count{0};
};

// Per-lesion aggregated, standardized feature values. Indexed [feature][lesion].
struct FeatureTable {
  std::vector<std::string> lesion_ids;
  std::array<std::vector<double>, 3> values;
  std::array<std::vector<std::uint8_t>, 3> mask;

  std::size_t size() const { return lesion_ids.size(); }
  double value(Feature f, std::size_t i) const { return values[static_cast<int>(f)][i]; }
  bool available(Feature f, std::size_t i) const { return mask[static_cast<int>(f)][i] != 0; }
  std::size_t available_count(Feature f) const;
  // Index of a lesion id, or nullopt.
  std::optional<std::size_t> find(std::string_view lesion_id) const;
};

enum class DensityClass : std::uint8_t { benign, malignant, all };
std::string_view density_class_name(DensityClass c);

struct DensitySummary {
  Feature feature{Feature::A};
  DensityClass cls{DensityClass::all};
  std::vector<double> grid;
  std::vector<double> density;
  double mean{0.0};
  double std{0.0};  // population, over the masked-in values
  double bandwidth{0.0};
};

// Reads `lesion_id,annotator_id,feature,score`. Throws ParseError (with line
// number) on malformed rows and ValidationError on duplicate keys or
// non-finite scores.
std::vector<RawAnnotation> ingest_annotations(const std::filesystem::path& path);
std::vector<RawAnnotation> parse_annotations(std::istream& in);

// Per (annotator, feature) statistics, sorted by (annotator_id, feature).
std::vector<AnnotatorStats> annotator_stats(const std::vector<RawAnnotation>& annotations);

// z-scores each (annotator, feature) group with its population std. Groups
// with zero spread map to 0. Output order matches input order.
std::vector<RawAnnotation> standardize_per_annotator(const std::vector<RawAnnotation>& annotations);

// Mean of the standardized scores per lesion and feature over the manifest
// order. Missing features get value 0 and mask 0.
FeatureTable aggregate_per_lesion(const std::vector<RawAnnotation>& standardized,
                                  const std::vector<std::string>& lesion_ids);

// Gaussian KDE per feature x {benign, malignant, all} on 256 points spanning
// [min-1, max+1]. `labels` holds 0/1 per lesion aligned with the table.
std::vector<DensitySummary> feature_density_summary(const FeatureTable& table,
                                                    const std::vector<int>& labels);

inline constexpr std::size_t kDensityGridPoints = 256;

void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_table_csv(const std::filesystem::path& path);

std::string density_summaries_to_json(const std::vector<DensitySummary>& summaries);
std::vector<DensitySummary> density_summaries_from_json(const std::string& text);

}  // namespace crowdmt
