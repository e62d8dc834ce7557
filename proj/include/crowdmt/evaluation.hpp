#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdmt/crowd_annotations.hpp"

namespace crowdmt {

// Mann-Whitney AUC: the fraction of (positive, negative) pairs ordered
// correctly, ties counting one half. Computed from mid-ranks in
// O(n log n). Throws ValidationError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

enum class Variant : std::uint8_t { frozen, nonfrozen };
std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view s);  // throws ConfigError

// Row keys of the results table, in display order.
struct TableRow {
  std::string_view key;
  std::string_view display;
};
inline constexpr TableRow kTableRows[] = {
    {"baseline", "Baseline"}, {"A", "Asymmetry"}, {"B", "Border"},
    {"C", "Color"},           {"avg", "Averaging"}, {"de", "Optimized weighted averaging"},
};

struct FoldScores {
  std::string model_name;
  Variant variant{Variant::nonfrozen};
  std::vector<double> aucs;
  double mean{0.0};
  double std{0.0};  // population
};

FoldScores make_fold_scores(std::string model_name, Variant variant, std::vector<double> aucs);

struct ResultsTable {
  std::vector<FoldScores> cells;  // row-major over kTableRows x {frozen, nonfrozen}
  std::vector<std::string> warnings;

  const FoldScores* find(std::string_view model, Variant variant) const;
  std::string to_text() const;
  std::string to_csv() const;
};

// Builds the model x variant table. Missing cells raise a ValidationError
// listing them unless `allow_missing`, in which case they become warnings.
// Cells must share one fold count.
ResultsTable summarize(const std::vector<FoldScores>& cells, bool allow_missing = false);

// Writes box-plot and density data (CSV) plus rendered PNGs into out_dir and
// returns the written paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<FoldScores>& scores,
                                              const std::vector<DensitySummary>& densities,
                                              const std::filesystem::path& out_dir);

struct BoxStats {
  double min, q1, median, q3, max, whisker_low, whisker_high;
};
// Quartiles by linear interpolation; whiskers at the furthest points within
// 1.5 IQR of the box.
BoxStats box_stats(std::vector<double> values);

// Reads back `fold_aucs.csv` as written by emit_plots.
std::vector<FoldScores> read_fold_aucs_csv(const std::filesystem::path& path);

}  // namespace crowdmt
