#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crowdmt {

// Per-model malignancy probabilities over a common, ordered set of lesions.
struct PredictionMatrix {
  std::vector<std::string> lesion_ids;
  std::vector<std::pair<std::string, std::vector<double>>> columns;
  std::vector<int> labels;

  std::size_t rows() const { return lesion_ids.size(); }
  std::size_t column_count() const { return columns.size(); }
  const std::vector<double>& column(std::string_view name) const;
  void add_column(std::string name, std::vector<double> probabilities);
  // Column lengths, label alignment and the open (0,1) probability range.
  void validate() const;
};

}  // namespace crowdmt
