#include <doctest.h>

#include <random>

#include "crowdmt/crowd_annotations.hpp"
#include "crowdmt/errors.hpp"
#include "crowdmt/evaluation.hpp"
#include "crowdmt/image.hpp"
#include "support.hpp"

using namespace crowdmt;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

std::vector<FoldScores> full_grid(int folds) {
  std::vector<FoldScores> cells;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.6, 0.9);
  for (const auto& row : kTableRows) {
    for (Variant v : {Variant::frozen, Variant::nonfrozen}) {
      std::vector<double> aucs(folds);
      for (double& a : aucs) a = u(rng);
      cells.push_back(make_fold_scores(std::string(row.key), v, aucs));
    }
  }
  return cells;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("auc examples") {
    CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
    CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, 1, 1}) == 0.5);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
    CHECK_THROWS(roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}));
  }

  TEST_CASE("auc equals pairwise enumeration with ties") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> level(0, 12);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 2 + trial % 150;
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) {
        s[i] = level(rng) / 12.0;
        y[i] = i % 2 == 0 ? 1 : (level(rng) % 3 == 0);
      }
      y[1] = 0;
      CHECK(std::abs(roc_auc(s, y) - pairwise_auc(s, y)) < 1e-12);
    }
  }

  TEST_CASE("fold scores") {
    const auto f = make_fold_scores("baseline", Variant::nonfrozen, {0.8, 0.79, 0.81, 0.78, 0.82});
    CHECK(f.mean == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(f.std == doctest::Approx(std::sqrt(0.0002)).epsilon(1e-9));
    CHECK(std::abs(f.std - 0.01414) < 1e-5);
    CHECK(make_fold_scores("A", Variant::frozen, {0.7, 0.7, 0.7}).std == 0.0);
  }

  TEST_CASE("results table") {
    const auto table = summarize(full_grid(5));
    CHECK(table.cells.size() == 12);
    CHECK(table.warnings.empty());
    const auto text = table.to_text();
    for (const auto& row : kTableRows) CHECK(text.find(std::string(row.display)) != std::string::npos);
    CHECK(text.find("AUC Non Frozen") != std::string::npos);
    const auto csv = table.to_csv();
    CHECK(csv.rfind("model,variant,auc_mean,auc_std,fold_aucs\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
    CHECK(table.find("de", Variant::frozen)->aucs.size() == 5);
  }

  TEST_CASE("results table with missing cells") {
    auto cells = full_grid(3);
    cells.erase(std::remove_if(cells.begin(), cells.end(), [](const FoldScores& f) { return f.model_name == "de"; }),
                cells.end());
    CHECK_THROWS_WITH_AS(summarize(cells), doctest::Contains("Optimized weighted averaging"), ValidationError);
    const auto partial = summarize(cells, true);
    CHECK(partial.cells.size() == 10);
    CHECK_FALSE(partial.warnings.empty());
    CHECK(partial.to_text().find("n/a") != std::string::npos);

    cells = full_grid(3);
    cells[0] = make_fold_scores(cells[0].model_name, cells[0].variant, {0.7, 0.8});
    CHECK_THROWS(summarize(cells));
  }

  TEST_CASE("box statistics") {
    const auto b = box_stats({1, 2, 3, 4, 5});
    CHECK(b.median == 3);
    CHECK(b.q1 == 2);
    CHECK(b.q3 == 4);
    CHECK(b.whisker_low == 1);
    CHECK(b.whisker_high == 5);
    const auto outlier = box_stats({1, 2, 3, 4, 100});
    CHECK(outlier.whisker_high == 4);
    CHECK(outlier.max == 100);
    const auto one = box_stats({0.7});
    CHECK((one.min == 0.7 && one.max == 0.7 && one.median == 0.7 && one.q1 == 0.7));
  }

  TEST_CASE("plot emission round trip") {
    testing::TempDir dir("plots");
    const auto cells = summarize(full_grid(5)).cells;
    std::vector<RawAnnotation> z;
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) {
      ids.push_back("L" + std::to_string(i));
      for (Feature f : kFeatures) z.push_back({ids.back(), "S", f, 0.3 * i * (1 + static_cast<int>(f))});
    }
    const auto dens = feature_density_summary(aggregate_per_lesion(z, ids), {0, 1, 0, 1, 0, 1, 0, 1});
    const auto written = emit_plots(cells, dens, dir.path());
    for (const auto& p : written) CHECK(std::filesystem::exists(p));
    CHECK(read_image(dir / "boxplot.png").width > 0);
    CHECK(read_image(dir / "density.png").width > 0);

    const auto back = read_fold_aucs_csv(dir / "fold_aucs.csv");
    REQUIRE(back.size() == 12);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].model_name == cells[i].model_name);
      CHECK(back[i].aucs == cells[i].aucs);
    }
    const auto boxes = testing::read_text(dir / "boxplot.csv");
    CHECK(std::count(boxes.begin(), boxes.end(), '\n') == 13);
  }

  TEST_CASE("single-fold boxes are degenerate") {
    testing::TempDir dir("plots1");
    emit_plots(summarize(full_grid(1)).cells, {}, dir.path());
    const auto boxes = testing::read_text(dir / "boxplot.csv");
    std::istringstream in(boxes);
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      REQUIRE(f.size() == 10);
      CHECK(f[3] == f[5]);
      CHECK(f[5] == f[7]);
      ++rows;
    }
    CHECK(rows == 12);
  }

  TEST_CASE("unwritable plot directory") {
    testing::TempDir dir("plotsbad");
    testing::write_text(dir / "file", "x");
    CHECK_THROWS(emit_plots(summarize(full_grid(2)).cells, {}, dir / "file" / "sub"));
  }
}
