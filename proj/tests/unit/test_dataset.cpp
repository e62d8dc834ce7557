#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "crowdmt/dataset.hpp"
#include "crowdmt/errors.hpp"
#include "crowdmt/image.hpp"
#include "support.hpp"

using namespace crowdmt;
namespace fs = std::filesystem;

namespace {

DatasetManifest make_manifest(int malignant, int benign) {
  std::vector<LesionRecord> records;
  // Interleave the classes so manifest order differs from class order.
  int m = 0, b = 0;
  while (m < malignant || b < benign) {
    if (m < malignant && (b >= benign || (m + b) % 3 == 0)) {
      records.push_back({"M" + std::to_string(m++), {}, Diagnosis::melanoma, 1});
    } else {
      records.push_back({"B" + std::to_string(b++), {}, Diagnosis::nevus, 0});
    }
  }
  return DatasetManifest(std::move(records));
}

Image gradient_image(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<float>(4 * x % 256);
      img.at(y, x, 1) = static_cast<float>(3 * y % 256);
      img.at(y, x, 2) = static_cast<float>((x * y) % 256);
    }
  }
  return img;
}

AugmentationSpec identity_spec(int h, int w) {
  AugmentationSpec s;
  s.max_rotation_deg = 0;
  s.horizontal_flip = s.vertical_flip = false;
  s.width_shift_frac = s.height_shift_frac = 0;
  s.shear_deg = 0;
  s.channel_shift_max = 0;
  s.output_height = h;
  s.output_width = w;
  return s;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("label binarization") {
    CHECK(label_of(*parse_diagnosis("melanoma")) == 1);
    CHECK(label_of(*parse_diagnosis("seborrheic_keratosis")) == 1);
    CHECK(label_of(*parse_diagnosis("nevus")) == 0);
    CHECK_FALSE(parse_diagnosis("basal_cell").has_value());
  }

  TEST_CASE("load manifest") {
    testing::TempDir dir("manifest");
    testing::write_text(dir / "labels.csv", "lesion_id,diagnosis\nL1,melanoma\nL2,nevus\n");
    fs::create_directories(dir / "img");
    Image img(4, 4, 3, 10.0f);
    write_image_png(dir / "img" / "L1.png", img);
    write_image_png(dir / "img" / "L2.png", img);
    const auto m = load_manifest(dir / "labels.csv", dir / "img");
    REQUIRE(m.size() == 2);
    CHECK(m.at("L1").label == 1);
    CHECK(m.at("L2").label == 0);
    CHECK(m.at("L1").image_path == dir / "img" / "L1.png");
    CHECK(m.labels() == std::vector<int>{1, 0});
    CHECK(read_image(m.at("L2").image_path) == img);

    testing::write_text(dir / "bad.csv", "lesion_id,diagnosis\nL3,basal_cell\n");
    CHECK_THROWS_AS(load_manifest(dir / "bad.csv", ""), ValidationError);

    testing::write_text(dir / "more.csv", "lesion_id,diagnosis\nL1,melanoma\nL7,nevus\nL8,nevus\n");
    CHECK_THROWS_WITH_AS(load_manifest(dir / "more.csv", dir / "img"), doctest::Contains("L7, L8"), ValidationError);

    testing::write_text(dir / "dup.csv", "lesion_id,diagnosis\nL1,melanoma\nL1,nevus\n");
    CHECK_THROWS_AS(load_manifest(dir / "dup.csv", ""), ValidationError);
  }

  TEST_CASE("splits reproduce the 1400/350/250 protocol") {
    const auto m = make_manifest(628, 1372);
    const auto folds = stratified_splits(m, 5, {}, 42);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
      CHECK(f.train_ids.size() == 1400);
      CHECK(f.val_ids.size() == 350);
      CHECK(f.test_ids.size() == 250);
      for (const auto* subset : {&f.train_ids, &f.val_ids, &f.test_ids}) {
        const auto mal = std::count_if(subset->begin(), subset->end(), [](const auto& id) { return id[0] == 'M'; });
        CHECK(std::abs(static_cast<double>(mal) / subset->size() - 0.314) <= 1.0 / subset->size());
      }
    }
    CHECK(folds[0].test_ids != folds[1].test_ids);
  }

  TEST_CASE("split invariants on random class counts") {
    for (int trial = 0; trial < 20; ++trial) {
      const int mal = 10 + 7 * trial, ben = 25 + 11 * trial;
      const auto m = make_manifest(mal, ben);
      const auto folds = stratified_splits(m, 3, {}, trial);
      const auto ids = m.lesion_ids();
      for (const auto& f : folds) {
        std::vector<std::string> all;
        for (const auto* s : {&f.train_ids, &f.val_ids, &f.test_ids}) {
          CHECK(!s->empty());
          all.insert(all.end(), s->begin(), s->end());
          // Manifest order within each subset.
          std::vector<std::size_t> pos;
          for (const auto& id : *s) pos.push_back(std::find(ids.begin(), ids.end(), id) - ids.begin());
          CHECK(std::is_sorted(pos.begin(), pos.end()));
        }
        std::sort(all.begin(), all.end());
        CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
        CHECK(all.size() == ids.size());
      }
      CHECK(stratified_splits(m, 3, {}, trial) == folds);
    }
  }

  TEST_CASE("split errors") {
    const auto m = make_manifest(30, 60);
    CHECK_THROWS_AS(stratified_splits(m, 0, {}, 1), ConfigError);
    CHECK_THROWS_AS(stratified_splits(m, 1, {1.0, 0.0, 0.0}, 1), ConfigError);
    CHECK_THROWS_AS(stratified_splits(m, 1, {0.5, 0.3, 0.3}, 1), ConfigError);
    CHECK_THROWS_AS(stratified_splits(make_manifest(2, 60), 1, {}, 1), ValidationError);
  }

  TEST_CASE("fold json round trip") {
    const auto f = stratified_splits(make_manifest(20, 40), 2, {}, 9)[1];
    const auto text = fold_split_to_json(f);
    CHECK(fold_split_from_json(text) == f);
    CHECK(text.find("\"train\"") != std::string::npos);
  }

  TEST_CASE("class weights") {
    std::vector<int> labels(2000, 0);
    std::fill(labels.begin(), labels.begin() + 628, 1);
    auto w = compute_class_weights(labels);
    CHECK(w.malignant == doctest::Approx(2000.0 / (2 * 628)).epsilon(1e-12));
    CHECK(w.benign == doctest::Approx(2000.0 / (2 * 1372)).epsilon(1e-12));
    CHECK(std::abs(w.malignant - 1.59236) < 1e-5);
    CHECK(std::abs(w.benign - 0.72886) < 1e-5);

    w = compute_class_weights({0, 1, 0, 1});
    CHECK(w.malignant == 1.0);
    CHECK(w.benign == 1.0);
    w = compute_class_weights({1, 0, 0, 0});
    CHECK(w.malignant == 2.0);
    CHECK(w.benign == doctest::Approx(2.0 / 3.0));
    CHECK(w(1) == 2.0);
    CHECK_THROWS_AS(compute_class_weights({0, 0}), ValidationError);
  }

  TEST_CASE("augment identity with zero magnitudes") {
    const Image img = gradient_image(24, 20);
    std::mt19937_64 rng(3);
    CHECK(augment(img, identity_spec(24, 20), rng) == img);
  }

  TEST_CASE("augment shape, range and determinism") {
    const Image img = gradient_image(31, 27);
    AugmentationSpec spec;
    spec.output_height = 16;
    spec.output_width = 18;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 a(seed), b(seed);
      const Image out = augment(img, spec, a);
      CHECK(out.height == 16);
      CHECK(out.width == 18);
      CHECK(out.channels == 3);
      for (float v : out.pixels) CHECK((v >= 0.0f && v <= 255.0f));
      CHECK(augment(img, spec, b) == out);
    }
    Image gray(8, 8, 1);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(augment(gray, spec, rng), ValidationError);
  }

  TEST_CASE("augment flips only mirror the image") {
    const Image img = gradient_image(10, 12);
    auto spec = identity_spec(10, 12);
    spec.horizontal_flip = true;
    int mirrored = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const Image out = augment(img, spec, rng);
      if (out == img) continue;
      ++mirrored;
      for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 12; ++x) CHECK(out.at(y, x, 0) == img.at(y, 11 - x, 0));
      }
    }
    CHECK(mirrored > 0);
    CHECK(mirrored < 20);
  }

  TEST_CASE("augment channel shift is a clipped per-channel offset") {
    const Image img = gradient_image(9, 9);
    auto spec = identity_spec(9, 9);
    spec.channel_shift_max = 20;
    std::mt19937_64 rng(8);
    const Image out = augment(img, spec, rng);
    for (int c = 0; c < 3; ++c) {
      // Find an unclipped pixel to read the offset from.
      double offset = 0;
      bool found = false;
      for (int y = 0; y < 9 && !found; ++y) {
        for (int x = 0; x < 9 && !found; ++x) {
          if (out.at(y, x, c) > 0.0f && out.at(y, x, c) < 255.0f) {
            offset = out.at(y, x, c) - img.at(y, x, c);
            found = true;
          }
        }
      }
      REQUIRE(found);
      CHECK(std::abs(offset) <= 20.0);
      for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 9; ++x) {
          const double expect = std::clamp(img.at(y, x, c) + offset, 0.0, 255.0);
          CHECK(out.at(y, x, c) == doctest::Approx(expect).epsilon(1e-4));
        }
      }
    }
  }

  TEST_CASE("augment rotation preserves constant images") {
    Image img(16, 16, 3, 77.0f);
    AugmentationSpec spec = identity_spec(16, 16);
    spec.max_rotation_deg = 180;
    spec.shear_deg = 0.2;
    spec.width_shift_frac = spec.height_shift_frac = 0.1;
    std::mt19937_64 rng(2);
    for (float v : augment(img, spec, rng).pixels) CHECK(v == doctest::Approx(77.0f));
  }

  TEST_CASE("preprocess resizes deterministically") {
    const Image img = gradient_image(20, 20);
    auto spec = identity_spec(10, 10);
    const Image out = preprocess(img, spec);
    CHECK(out.height == 10);
    CHECK(preprocess(img, spec) == out);
    // Half-pixel centers: each output pixel averages a 2x2 block.
    CHECK(out.at(0, 0, 0) == doctest::Approx((img.at(0, 0, 0) + img.at(0, 1, 0) + img.at(1, 0, 0) + img.at(1, 1, 0)) / 4));
    CHECK(preprocess(img, identity_spec(20, 20)) == img);
  }

  TEST_CASE("bilinear resize upsampling") {
    const Image img = gradient_image(4, 4);
    const Image up = resize_bilinear(img, 8, 8);
    // Half-pixel centers: output (1,1) maps to source (0.25,0.25); edges replicate.
    const double expect = 0.5625 * img.at(0, 0, 1) + 0.1875 * img.at(0, 1, 1) + 0.1875 * img.at(1, 0, 1) +
                          0.0625 * img.at(1, 1, 1);
    CHECK(up.at(1, 1, 1) == doctest::Approx(expect).epsilon(1e-5));
    CHECK(up.at(0, 0, 0) == img.at(0, 0, 0));
    CHECK_THROWS(resize_bilinear(img, 0, 3));
  }
}
