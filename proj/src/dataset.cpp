#include "crowdmt/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "crowdmt/errors.hpp"
#include "csv_util.hpp"

namespace crowdmt {

std::string_view diagnosis_name(Diagnosis d) {
  switch (d) {
    case Diagnosis::melanoma: return "melanoma";
    case Diagnosis::seborrheic_keratosis: return "seborrheic_keratosis";
    case Diagnosis::nevus: return "nevus";
  }
  return "?";
}

std::optional<Diagnosis> parse_diagnosis(std::string_view s) {
  if (s == "melanoma") return Diagnosis::melanoma;
  if (s == "seborrheic_keratosis") return Diagnosis::seborrheic_keratosis;
  if (s == "nevus") return Diagnosis::nevus;
  return std::nullopt;
}

DatasetManifest::DatasetManifest(std::vector<LesionRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto& r = records_[i];
    if (!index_.emplace(r.lesion_id, i).second) throw ValidationError("duplicate lesion id: " + r.lesion_id);
    r.label = label_of(r.diagnosis);
    ++class_counts_[r.diagnosis];
  }
}

std::vector<std::string> DatasetManifest::lesion_ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.lesion_id);
  return out;
}

std::vector<int> DatasetManifest::labels() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.label);
  return out;
}

const LesionRecord& DatasetManifest::at(std::string_view lesion_id) const {
  auto it = index_.find(std::string(lesion_id));
  if (it == index_.end()) throw ValidationError("unknown lesion id: " + std::string(lesion_id));
  return records_[it->second];
}

bool DatasetManifest::contains(std::string_view lesion_id) const { return index_.count(std::string(lesion_id)) > 0; }

DatasetManifest load_manifest(const std::filesystem::path& labels_path, const std::filesystem::path& image_dir) {
  std::ifstream in(labels_path);
  if (!in) throw ValidationError("cannot open labels file " + labels_path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_line(in, line, line_no)) throw ParseError("missing header", 1);
  auto header = detail::split_csv(line);
  if (header.size() != 2 || header[0] != "lesion_id" || header[1] != "diagnosis") {
    throw ParseError("expected header 'lesion_id,diagnosis'", line_no);
  }

  std::vector<LesionRecord> records;
  std::vector<std::string> missing;
  static constexpr std::array<const char*, 5> kExtensions{".jpg", ".jpeg", ".png", ".bmp", ".ppm"};
  while (detail::next_line(in, line, line_no)) {
    auto cols = detail::split_csv(line);
    if (cols.size() != 2 || cols[0].empty()) throw ParseError("expected 'lesion_id,diagnosis'", line_no);
    auto dx = parse_diagnosis(cols[1]);
    if (!dx) {
      throw ValidationError("line " + std::to_string(line_no) + ": unknown diagnosis '" + std::string(cols[1]) + "'");
    }
    LesionRecord r;
    r.lesion_id = std::string(cols[0]);
    r.diagnosis = *dx;
    if (!image_dir.empty()) {
      for (const char* ext : kExtensions) {
        auto candidate = image_dir / (r.lesion_id + ext);
        if (std::filesystem::exists(candidate)) {
          r.image_path = candidate;
          break;
        }
      }
      if (r.image_path.empty()) missing.push_back(r.lesion_id);
    }
    records.push_back(std::move(r));
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ... (" + std::to_string(missing.size()) + " total)";
    throw ValidationError("missing image files for lesions: " + list);
  }
  return DatasetManifest(std::move(records));
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::vector<FoldSplit> stratified_splits(const DatasetManifest& manifest, int k, SplitFractions fr,
                                         std::uint64_t seed) {
  if (k < 1) throw ConfigError("number of folds must be >= 1");
  if (!(fr.train > 0.0 && fr.val > 0.0 && fr.test > 0.0)) {
    throw ConfigError("split fractions must all be positive");
  }
  if (std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  const auto& records = manifest.records();
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);

  // Per-class role sizes are fixed across folds.
  struct Sizes {
    std::size_t train, val, test;
  };
  std::array<Sizes, 2> sizes{};
  for (int c = 0; c < 2; ++c) {
    const double n = static_cast<double>(by_class[c].size());
    // nearbyint under the default rounding mode rounds halves to even.
    const auto val = static_cast<std::size_t>(std::nearbyint(fr.val * n));
    const auto test = static_cast<std::size_t>(std::nearbyint(fr.test * n));
    if (val + test > by_class[c].size() || val == 0 || test == 0 || val + test == by_class[c].size()) {
      throw ValidationError(std::string("class '") + (c ? "malignant" : "benign") + "' has too few members (" +
                            std::to_string(by_class[c].size()) + ") to populate every subset");
    }
    sizes[c] = {by_class[c].size() - val - test, val, test};
  }

  std::vector<FoldSplit> folds;
  for (int f = 0; f < k; ++f) {
    FoldSplit split;
    split.fold_index = f;
    split.seed = seed + static_cast<std::uint64_t>(f);
    std::mt19937_64 rng(split.seed);
    std::vector<std::uint8_t> role(records.size(), 0);  // 0 train, 1 val, 2 test
    for (int c = 0; c < 2; ++c) {
      auto idx = by_class[c];
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t j = 0; j < sizes[c].val; ++j) role[idx[j]] = 1;
      for (std::size_t j = sizes[c].val; j < sizes[c].val + sizes[c].test; ++j) role[idx[j]] = 2;
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto& dst = role[i] == 0 ? split.train_ids : role[i] == 1 ? split.val_ids : split.test_ids;
      dst.push_back(records[i].lesion_id);
    }
    folds.push_back(std::move(split));
  }
  return folds;
}

std::string fold_split_to_json(const FoldSplit& split) {
  nlohmann::ordered_json j;
  j["fold"] = split.fold_index;
  j["seed"] = split.seed;
  j["train"] = split.train_ids;
  j["val"] = split.val_ids;
  j["test"] = split.test_ids;
  return j.dump(1) + "\n";
}

FoldSplit fold_split_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  FoldSplit s;
  s.fold_index = j.at("fold").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train_ids = j.at("train").get<std::vector<std::string>>();
  s.val_ids = j.at("val").get<std::vector<std::string>>();
  s.test_ids = j.at("test").get<std::vector<std::string>>();
  return s;
}

ClassWeights compute_class_weights(const std::vector<int>& labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("class weights need both classes present");
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(neg)), n / (2.0 * static_cast<double>(pos))};
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

void AugmentationSpec::validate() const {
  if (max_rotation_deg < 0 || width_shift_frac < 0 || height_shift_frac < 0 || shear_deg < 0 ||
      channel_shift_max < 0) {
    throw ConfigError("augmentation magnitudes must be nonnegative");
  }
  if (output_height <= 0 || output_width <= 0) throw ConfigError("augmentation output size must be positive");
}

namespace {

struct Affine {
  // y' = a * [x, y] + b in centered pixel coordinates, stored as (x, y).
  double a00{1}, a01{0}, a10{0}, a11{1};
  double b0{0}, b1{0};

  // this applied after `rhs`
  Affine then(const Affine& rhs) const {
    Affine r;
    r.a00 = a00 * rhs.a00 + a01 * rhs.a10;
    r.a01 = a00 * rhs.a01 + a01 * rhs.a11;
    r.a10 = a10 * rhs.a00 + a11 * rhs.a10;
    r.a11 = a10 * rhs.a01 + a11 * rhs.a11;
    r.b0 = a00 * rhs.b0 + a01 * rhs.b1 + b0;
    r.b1 = a10 * rhs.b0 + a11 * rhs.b1 + b1;
    return r;
  }
  bool identity() const { return a00 == 1 && a01 == 0 && a10 == 0 && a11 == 1 && b0 == 0 && b1 == 0; }
};

// Bilinear resampling about the image center with replicated borders.
Image warp(const Image& src, const Affine& forward) {
  const double det = forward.a00 * forward.a11 - forward.a01 * forward.a10;
  const double i00 = forward.a11 / det, i01 = -forward.a01 / det;
  const double i10 = -forward.a10 / det, i11 = forward.a00 / det;
  const double cx = (src.width - 1) / 2.0;
  const double cy = (src.height - 1) / 2.0;
  // Destination -> source map.
  const cv::Matx23d inverse(i00, i01, cx - i00 * (cx + forward.b0) - i01 * (cy + forward.b1),
                            i10, i11, cy - i10 * (cx + forward.b0) - i11 * (cy + forward.b1));
  Image out(src.height, src.width, src.channels);
  const cv::Mat in(src.height, src.width, CV_32FC3, const_cast<float*>(src.pixels.data()));
  cv::Mat dst(out.height, out.width, CV_32FC3, out.pixels.data());
  cv::warpAffine(in, dst, inverse, dst.size(), cv::INTER_LINEAR | cv::WARP_INVERSE_MAP, cv::BORDER_REPLICATE);
  return out;
}

}  // namespace

Image augment(const Image& image, const AugmentationSpec& spec, std::mt19937_64& rng) {
  if (image.empty()) throw ValidationError("augment: empty image");
  if (image.channels != 3) throw ValidationError("augment: expected a 3-channel image");
  spec.validate();

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  constexpr double kDeg = std::numbers::pi / 180.0;

  // Every draw happens regardless of magnitude so the stream layout is fixed.
  const double angle = spec.max_rotation_deg * unit(rng) * kDeg;
  const bool flip_h = coin(rng) && spec.horizontal_flip;
  const bool flip_v = coin(rng) && spec.vertical_flip;
  const double tx = spec.width_shift_frac * unit(rng) * image.width;
  const double ty = spec.height_shift_frac * unit(rng) * image.height;
  const double shear = spec.shear_deg * unit(rng) * kDeg;
  std::array<double, 3> channel_shift{};
  for (auto& s : channel_shift) s = spec.channel_shift_max * unit(rng);

  Affine rotation{std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle), 0, 0};
  Affine flips{flip_h ? -1.0 : 1.0, 0, 0, flip_v ? -1.0 : 1.0, 0, 0};
  Affine shift{1, 0, 0, 1, tx, ty};
  Affine shearing{1, -std::sin(shear), 0, std::cos(shear), 0, 0};
  const Affine transform = shearing.then(shift.then(flips.then(rotation)));

  Image out = transform.identity() ? image : warp(image, transform);
  if (spec.channel_shift_max > 0) {
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      const auto c = i % 3;
      out.pixels[i] = static_cast<float>(std::clamp(out.pixels[i] + channel_shift[c], 0.0, 255.0));
    }
  }
  return resize_bilinear(out, spec.output_height, spec.output_width);
}

Image preprocess(const Image& image, const AugmentationSpec& spec) {
  if (image.channels != 3) throw ValidationError("preprocess: expected a 3-channel image");
  return resize_bilinear(image, spec.output_height, spec.output_width);
}

}  // namespace crowdmt
