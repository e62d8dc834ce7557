#include "crowdmt/crowd_annotations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "crowdmt/errors.hpp"
#include "csv_util.hpp"

namespace crowdmt {

using detail::format_double;
using detail::next_line;
using detail::parse_double;
using detail::split_csv;

char feature_letter(Feature f) { return "ABC"[static_cast<int>(f)]; }

std::string_view feature_name(Feature f) {
  switch (f) {
    case Feature::A: return "asymmetry";
    case Feature::B: return "border";
    case Feature::C: return "color";
  }
  return "?";
}

std::optional<Feature> parse_feature(std::string_view s) {
  if (s == "A" || s == "a") return Feature::A;
  if (s == "B" || s == "b") return Feature::B;
  if (s == "C" || s == "c") return Feature::C;
  return std::nullopt;
}

std::string_view density_class_name(DensityClass c) {
  switch (c) {
    case DensityClass::benign: return "benign";
    case DensityClass::malignant: return "malignant";
    case DensityClass::all: return "all";
  }
  return "?";
}

std::size_t FeatureTable::available_count(Feature f) const {
  const auto& m = mask[static_cast<int>(f)];
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

std::optional<std::size_t> FeatureTable::find(std::string_view lesion_id) const {
  auto it = std::find(lesion_ids.begin(), lesion_ids.end(), lesion_id);
  if (it == lesion_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - lesion_ids.begin());
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

std::vector<RawAnnotation> parse_annotations(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw ParseError("missing header", 1);
  auto header = split_csv(line);
  if (header.size() != 4 || header[0] != "lesion_id" || header[1] != "annotator_id" ||
      header[2] != "feature" || header[3] != "score") {
    throw ParseError("expected header 'lesion_id,annotator_id,feature,score'", line_no);
  }

  std::vector<RawAnnotation> out;
  std::set<std::tuple<std::string, std::string, Feature>> seen;
  while (next_line(in, line, line_no)) {
    auto cols = split_csv(line);
    if (cols.size() != 4) throw ParseError("expected 4 columns, got " + std::to_string(cols.size()), line_no);
    if (cols[0].empty() || cols[1].empty()) throw ParseError("empty lesion or annotator id", line_no);
    auto feature = parse_feature(cols[2]);
    if (!feature) throw ParseError("unknown feature '" + std::string(cols[2]) + "'", line_no);
    auto score = parse_double(cols[3]);
    if (!score) throw ParseError("score is not a number: '" + std::string(cols[3]) + "'", line_no);
    if (!std::isfinite(*score)) {
      throw ValidationError("line " + std::to_string(line_no) + ": non-finite score");
    }
    RawAnnotation a{std::string(cols[0]), std::string(cols[1]), *feature, *score};
    if (!seen.emplace(a.lesion_id, a.annotator_id, a.feature).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate annotation for (" + a.lesion_id +
                            ", " + a.annotator_id + ", " + feature_letter(a.feature) + ")");
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<RawAnnotation> ingest_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open annotations file " + path.string());
  return parse_annotations(in);
}

// ---------------------------------------------------------------------------
// Standardization and aggregation
// ---------------------------------------------------------------------------

namespace {

using GroupKey = std::pair<std::string, Feature>;

std::map<GroupKey, std::vector<std::size_t>> group_indices(const std::vector<RawAnnotation>& annotations) {
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    groups[{annotations[i].annotator_id, annotations[i].feature}].push_back(i);
  }
  return groups;
}

std::pair<double, double> mean_and_population_std(const std::vector<double>& xs) {
  // Accumulated relative to the first value so constant groups get exactly
  // zero spread.
  const double ref = xs.front();
  double offset = 0.0;
  for (double x : xs) offset += x - ref;
  const double mean = ref + offset / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace

std::vector<AnnotatorStats> annotator_stats(const std::vector<RawAnnotation>& annotations) {
  std::vector<AnnotatorStats> out;
  for (const auto& [key, idx] : group_indices(annotations)) {
    std::vector<double> xs;
    xs.reserve(idx.size());
    for (auto i : idx) xs.push_back(annotations[i].score);
    auto [mean, sd] = mean_and_population_std(xs);
    out.push_back({key.first, key.second, mean, sd, idx.size()});
  }
  return out;
}

std::vector<RawAnnotation> standardize_per_annotator(const std::vector<RawAnnotation>& annotations) {
  std::vector<RawAnnotation> out = annotations;
  for (const auto& [key, idx] : group_indices(annotations)) {
    std::vector<double> xs;
    xs.reserve(idx.size());
    for (auto i : idx) xs.push_back(annotations[i].score);
    auto [mean, sd] = mean_and_population_std(xs);
    for (auto i : idx) out[i].score = sd > 0.0 ? (annotations[i].score - mean) / sd : 0.0;
  }
  return out;
}

FeatureTable aggregate_per_lesion(const std::vector<RawAnnotation>& standardized,
                                  const std::vector<std::string>& lesion_ids) {
  if (lesion_ids.empty()) throw ValidationError("manifest lesion list is empty");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < lesion_ids.size(); ++i) {
    if (!index.emplace(lesion_ids[i], i).second) {
      throw ValidationError("duplicate lesion id in manifest: " + lesion_ids[i]);
    }
  }

  const std::size_t n = lesion_ids.size();
  std::array<std::vector<double>, 3> sums;
  std::array<std::vector<std::size_t>, 3> counts;
  for (int f = 0; f < 3; ++f) {
    sums[f].assign(n, 0.0);
    counts[f].assign(n, 0);
  }
  for (const auto& a : standardized) {
    auto it = index.find(a.lesion_id);
    if (it == index.end()) throw ValidationError("annotation references unknown lesion '" + a.lesion_id + "'");
    sums[static_cast<int>(a.feature)][it->second] += a.score;
    counts[static_cast<int>(a.feature)][it->second] += 1;
  }

  FeatureTable table;
  table.lesion_ids = lesion_ids;
  for (int f = 0; f < 3; ++f) {
    table.values[f].assign(n, 0.0);
    table.mask[f].assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[f][i] == 0) continue;
      table.values[f][i] = sums[f][i] / static_cast<double>(counts[f][i]);
      table.mask[f][i] = 1;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Density summaries
// ---------------------------------------------------------------------------

namespace {

DensitySummary kde_summary(Feature feature, DensityClass cls, const std::vector<double>& xs) {
  if (xs.size() < 2) {
    throw ValidationError("insufficient data for density (feature " + std::string(1, feature_letter(feature)) +
                          ", " + std::string(density_class_name(cls)) + ")");
  }
  const double n = static_cast<double>(xs.size());
  auto [mean, pop_sd] = mean_and_population_std(xs);
  const double sample_sd = pop_sd * std::sqrt(n / (n - 1.0));
  if (!(sample_sd > 0.0)) {
    throw ValidationError("insufficient data for density (feature " + std::string(1, feature_letter(feature)) +
                          ", " + std::string(density_class_name(cls)) + ": zero spread)");
  }
  // Silverman's rule of thumb for a Gaussian kernel.
  const double h = std::pow(4.0 / 3.0, 0.2) * sample_sd * std::pow(n, -0.2);

  auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it - 1.0;
  const double hi = *hi_it + 1.0;
  DensitySummary s;
  s.feature = feature;
  s.cls = cls;
  s.mean = mean;
  s.std = pop_sd;
  s.bandwidth = h;
  s.grid.resize(kDensityGridPoints);
  s.density.resize(kDensityGridPoints);
  const double step = (hi - lo) / static_cast<double>(kDensityGridPoints - 1);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < kDensityGridPoints; ++g) {
    const double x = g + 1 == kDensityGridPoints ? hi : lo + step * static_cast<double>(g);
    double acc = 0.0;
    for (double xi : xs) {
      const double u = (x - xi) / h;
      acc += std::exp(-0.5 * u * u);
    }
    s.grid[g] = x;
    s.density[g] = acc * norm;
  }
  // The grid truncates the kernel tails; renormalize so the curve integrates
  // to one over the grid.
  double area = 0.0;
  for (std::size_t g = 1; g < kDensityGridPoints; ++g) {
    area += 0.5 * (s.density[g] + s.density[g - 1]) * (s.grid[g] - s.grid[g - 1]);
  }
  for (double& d : s.density) d /= area;
  return s;
}

}  // namespace

std::vector<DensitySummary> feature_density_summary(const FeatureTable& table, const std::vector<int>& labels) {
  if (labels.size() != table.size()) throw ValidationError("labels and feature table are not aligned");
  std::vector<DensitySummary> out;
  for (Feature f : kFeatures) {
    for (DensityClass cls : {DensityClass::benign, DensityClass::malignant, DensityClass::all}) {
      std::vector<double> xs;
      for (std::size_t i = 0; i < table.size(); ++i) {
        if (!table.available(f, i)) continue;
        if (cls == DensityClass::benign && labels[i] != 0) continue;
        if (cls == DensityClass::malignant && labels[i] != 1) continue;
        xs.push_back(table.value(f, i));
      }
      out.push_back(kde_summary(f, cls, xs));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_feature_table_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "lesion_id,A_value,A_mask,B_value,B_mask,C_value,C_mask\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.lesion_ids[i];
    for (int f = 0; f < 3; ++f) {
      out << ',' << format_double(table.values[f][i]) << ',' << int(table.mask[f][i]);
    }
    out << '\n';
  }
}

FeatureTable read_feature_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open feature table " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no) || line.rfind("lesion_id,A_value,A_mask", 0) != 0) {
    throw ParseError("feature table header missing", line_no);
  }
  FeatureTable t;
  while (next_line(in, line, line_no)) {
    auto cols = split_csv(line);
    if (cols.size() != 7) throw ParseError("expected 7 columns", line_no);
    t.lesion_ids.emplace_back(cols[0]);
    for (int f = 0; f < 3; ++f) {
      auto v = parse_double(cols[1 + 2 * f]);
      auto m = detail::parse_int(cols[2 + 2 * f]);
      if (!v || !m || (*m != 0 && *m != 1)) throw ParseError("bad value/mask", line_no);
      t.values[f].push_back(*v);
      t.mask[f].push_back(static_cast<std::uint8_t>(*m));
    }
  }
  return t;
}

std::string density_summaries_to_json(const std::vector<DensitySummary>& summaries) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : summaries) {
    nlohmann::ordered_json j;
    j["feature"] = std::string(1, feature_letter(s.feature));
    j["class"] = density_class_name(s.cls);
    j["mean"] = s.mean;
    j["std"] = s.std;
    j["bandwidth"] = s.bandwidth;
    j["grid"] = s.grid;
    j["density"] = s.density;
    arr.push_back(std::move(j));
  }
  return arr.dump(1);
}

std::vector<DensitySummary> density_summaries_from_json(const std::string& text) {
  auto arr = nlohmann::json::parse(text);
  std::vector<DensitySummary> out;
  for (const auto& j : arr) {
    DensitySummary s;
    auto f = parse_feature(j.at("feature").get<std::string>());
    if (!f) throw ParseError("bad feature in density JSON");
    s.feature = *f;
    const auto cls = j.at("class").get<std::string>();
    s.cls = cls == "benign" ? DensityClass::benign : cls == "malignant" ? DensityClass::malignant : DensityClass::all;
    s.mean = j.at("mean").get<double>();
    s.std = j.at("std").get<double>();
    s.bandwidth = j.value("bandwidth", 0.0);
    s.grid = j.at("grid").get<std::vector<double>>();
    s.density = j.at("density").get<std::vector<double>>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace crowdmt
