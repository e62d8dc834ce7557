#include "crowdmt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "crowdmt/errors.hpp"
#include "crowdmt/image.hpp"

namespace crowdmt {

void SyntheticConfig::validate() const {
  if (lesions < 8) throw ConfigError("synthetic dataset needs at least 8 lesions");
  if (image_size < 8) throw ConfigError("synthetic image size must be at least 8");
  if (!(malignant_fraction > 0.0 && malignant_fraction < 1.0)) throw ConfigError("malignant_fraction must be in (0,1)");
  if (!(annotated_fraction > 0.0 && annotated_fraction <= 1.0)) throw ConfigError("annotated_fraction must be in (0,1]");
  for (double f : feature_fraction) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("feature fractions must be in [0,1]");
  }
  if (annotator_groups < 1) throw ConfigError("need at least one annotator group");
}

namespace {

int round_count(double x) { return static_cast<int>(std::nearbyint(x)); }

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string lesion_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "SYN_%05d", i);
  return buf;
}

Image render_lesion(int size, double asym, double border, double colour, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 4.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = unit(rng) * std::numbers::pi;
  const double phase = unit(rng) * 2.0 * std::numbers::pi;
  const double radius = size * (0.22 + 0.06 * unit(rng));
  const double elongation = 1.0 + 0.6 * logistic(1.5 * asym);
  const double lobe_offset = 0.35 * logistic(1.5 * asym) * radius;
  const double ripple = 0.04 + 0.22 * logistic(1.5 * border);
  const int lobes = 5 + static_cast<int>(unit(rng) * 4.0);
  const double dark = 0.25 + 0.6 * logistic(1.5 * colour);
  const double c = (size - 1) / 2.0;

  Image img(size, size, 3);
  const double skin[3] = {226.0, 184.0, 162.0};
  const double brown[3] = {150.0, 98.0, 66.0};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - c, dy = y - c;
      // Rotate into the lesion frame.
      const double u = std::cos(angle) * dx + std::sin(angle) * dy;
      const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
      const double theta = std::atan2(v, u);
      const double rad = radius * (1.0 + ripple * std::sin(lobes * theta + phase));
      const double main = std::hypot(u / elongation, v) / rad;
      const double lobe = std::hypot((u - lobe_offset) / (0.6 * elongation), v / 0.6) / rad;
      const double inside = std::min(main, lobe);
      const double t = std::clamp(1.3 - inside, 0.0, 1.0);  // soft edge
      const double core = std::clamp(1.0 - main / 0.55, 0.0, 1.0);
      for (int ch = 0; ch < 3; ++ch) {
        const double lesion_colour = brown[ch] * (1.0 - dark * (0.6 + 0.4 * core));
        img.at(y, x, ch) = static_cast<float>(std::clamp(skin[ch] * (1 - t) + lesion_colour * t + noise(rng), 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace

SyntheticSummary expected_synthetic_summary(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticSummary s;
  s.lesions = cfg.lesions;
  s.malignant = std::clamp(round_count(cfg.malignant_fraction * cfg.lesions), 1, cfg.lesions - 1);
  s.annotated = std::clamp(round_count(cfg.annotated_fraction * cfg.lesions), 1, cfg.lesions);
  for (int f = 0; f < 3; ++f) s.feature_counts[f] = round_count(cfg.feature_fraction[f] * s.annotated);
  // Group sizes are drawn from [3, 6] deterministically from the seed.
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  std::uniform_int_distribution<int> group_size(3, 6);
  for (int g = 0; g < cfg.annotator_groups; ++g) s.annotators += group_size(rng);
  return s;
}

SyntheticSummary generate_synthetic_dataset(const SyntheticConfig& cfg, const std::filesystem::path& dir) {
  const SyntheticSummary summary = expected_synthetic_summary(cfg);
  std::filesystem::create_directories(dir / "images");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Labels: exact malignant count, shuffled; malignant lesions are split
  // between melanoma and seborrheic keratosis in the source ratio 374:254.
  std::vector<int> labels(cfg.lesions, 0);
  std::fill(labels.begin(), labels.begin() + summary.malignant, 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::array<double, 3>> latent(cfg.lesions);
  {
    std::ofstream out(dir / "labels.csv", std::ios::binary);
    out << "lesion_id,diagnosis\n";
    for (int i = 0; i < cfg.lesions; ++i) {
      for (auto& z : latent[i]) z = gauss(rng) + cfg.class_shift * labels[i];
      const char* dx = labels[i] == 0 ? "nevus" : unit(rng) < 374.0 / 628.0 ? "melanoma" : "seborrheic_keratosis";
      out << lesion_id(i) << ',' << dx << '\n';
      write_image_png(dir / "images" / (lesion_id(i) + ".png"),
                      render_lesion(cfg.image_size, latent[i][0], latent[i][1], latent[i][2], rng));
    }
  }

  // Annotated subset and, within it, the subsets carrying each feature.
  std::vector<int> order(cfg.lesions);
  for (int i = 0; i < cfg.lesions; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> annotated(order.begin(), order.begin() + summary.annotated);
  std::sort(annotated.begin(), annotated.end());
  std::array<std::vector<std::uint8_t>, 3> has{};
  for (int f = 0; f < 3; ++f) {
    std::vector<int> pick = annotated;
    std::shuffle(pick.begin(), pick.end(), rng);
    has[f].assign(cfg.lesions, 0);
    for (int j = 0; j < summary.feature_counts[f]; ++j) has[f][pick[j]] = 1;
  }

  // Annotator groups; each group scores a disjoint block of lesions.
  std::mt19937_64 group_rng(cfg.seed ^ 0x5eedULL);
  std::uniform_int_distribution<int> group_size(3, 6);
  struct Annotator {
    std::string id;
    double offset, scale;
  };
  std::vector<std::vector<Annotator>> groups(cfg.annotator_groups);
  int next_id = 0;
  for (auto& g : groups) {
    const int n = group_size(group_rng);
    for (int k = 0; k < n; ++k) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "S%02d", ++next_id);
      g.push_back({buf, 2.0 + 4.0 * unit(rng), 0.5 + 1.5 * unit(rng)});
    }
  }

  std::ofstream out(dir / "annotations.csv", std::ios::binary);
  out << "lesion_id,annotator_id,feature,score\n";
  for (std::size_t j = 0; j < annotated.size(); ++j) {
    const int i = annotated[j];
    const auto& group = groups[j * groups.size() / annotated.size()];
    for (const auto& a : group) {
      for (int f = 0; f < 3; ++f) {
        if (!has[f][i]) continue;
        const double score = a.offset + a.scale * (latent[i][f] + 0.7 * gauss(rng));
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", score);
        out << lesion_id(i) << ',' << a.id << ',' << "ABC"[f] << ',' << buf << '\n';
      }
    }
  }
  return summary;
}

}  // namespace crowdmt
