#include "crowdmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "crowdmt/errors.hpp"
#include "csv_util.hpp"

namespace crowdmt {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("roc_auc: labels must be 0 or 1");
    if (std::isnan(scores[i])) throw ValidationError("roc_auc: NaN score");
    n_pos += labels[i] == 1;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("AUC undefined: only one class present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum += mid_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::string_view variant_name(Variant v) { return v == Variant::frozen ? "frozen" : "nonfrozen"; }

Variant parse_variant(std::string_view s) {
  if (s == "frozen") return Variant::frozen;
  if (s == "nonfrozen") return Variant::nonfrozen;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected frozen or nonfrozen)");
}

FoldScores make_fold_scores(std::string model_name, Variant variant, std::vector<double> aucs) {
  FoldScores s;
  s.model_name = std::move(model_name);
  s.variant = variant;
  s.aucs = std::move(aucs);
  if (!s.aucs.empty()) {
    // Shifted by the first value so constant vectors give exactly 0 spread.
    const double ref = s.aucs.front();
    double sum = 0.0;
    for (double a : s.aucs) sum += a - ref;
    s.mean = ref + sum / static_cast<double>(s.aucs.size());
    double ss = 0.0;
    for (double a : s.aucs) ss += (a - s.mean) * (a - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.aucs.size()));
  }
  return s;
}

const FoldScores* ResultsTable::find(std::string_view model, Variant variant) const {
  for (const auto& c : cells) {
    if (c.model_name == model && c.variant == variant) return &c;
  }
  return nullptr;
}

ResultsTable summarize(const std::vector<FoldScores>& cells, bool allow_missing) {
  ResultsTable table;
  std::vector<std::string> missing;
  std::size_t folds = 0;
  for (const auto& row : kTableRows) {
    for (Variant v : {Variant::frozen, Variant::nonfrozen}) {
      auto it = std::find_if(cells.begin(), cells.end(),
                             [&](const FoldScores& c) { return c.model_name == row.key && c.variant == v; });
      if (it == cells.end() || it->aucs.empty()) {
        missing.push_back(std::string(row.display) + " (" + std::string(variant_name(v)) + ")");
        continue;
      }
      if (folds == 0) folds = it->aucs.size();
      if (it->aucs.size() != folds) {
        throw ValidationError("unequal fold counts: " + std::string(row.display) + " (" +
                              std::string(variant_name(v)) + ") has " + std::to_string(it->aucs.size()) +
                              " folds, expected " + std::to_string(folds));
      }
      table.cells.push_back(make_fold_scores(it->model_name, v, it->aucs));
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    if (!allow_missing) throw ValidationError("missing results for: " + list);
    table.warnings.push_back("missing results for: " + list);
  }
  return table;
}

namespace {

std::string mean_pm_std(const FoldScores* c) {
  if (!c) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f \xC2\xB1 %.3f", c->mean, c->std);
  return buf;
}

}  // namespace

std::string ResultsTable::to_text() const {
  std::ostringstream out;
  std::size_t width = 5;
  for (const auto& row : kTableRows) width = std::max(width, row.display.size());
  auto pad = [](std::string s, std::size_t w) {
    // "±" is two bytes but one column.
    std::size_t cols = s.size() - (s.find("\xC2\xB1") != std::string::npos ? 1 : 0);
    if (cols < w) s.append(w - cols, ' ');
    return s;
  };
  out << pad("Model", width) << " | " << pad("AUC Frozen", 15) << " | AUC Non Frozen\n";
  out << std::string(width, '-') << "-+-" << std::string(15, '-') << "-+-" << std::string(15, '-') << "\n";
  for (const auto& row : kTableRows) {
    out << pad(std::string(row.display), width) << " | " << pad(mean_pm_std(find(row.key, Variant::frozen)), 15)
        << " | " << mean_pm_std(find(row.key, Variant::nonfrozen)) << "\n";
  }
  out << "\nmean \xC2\xB1 population std of per-fold test AUC\n";
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string ResultsTable::to_csv() const {
  std::ostringstream out;
  out << "model,variant,auc_mean,auc_std,fold_aucs\n";
  for (const auto& c : cells) {
    out << c.model_name << ',' << variant_name(c.variant) << ',' << detail::format_double(c.mean) << ','
        << detail::format_double(c.std) << ',';
    for (std::size_t i = 0; i < c.aucs.size(); ++i) out << (i ? ";" : "") << detail::format_double(c.aucs[i]);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) throw ValidationError("box statistics need at least one value");
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
  };
  BoxStats s{v.front(), quantile(0.25), quantile(0.5), quantile(0.75), v.back(), v.front(), v.back()};
  const double iqr = s.q3 - s.q1;
  for (double x : v) {
    if (x >= s.q1 - 1.5 * iqr) {
      s.whisker_low = x;
      break;
    }
  }
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    if (*it <= s.q3 + 1.5 * iqr) {
      s.whisker_high = *it;
      break;
    }
  }
  return s;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

const cv::Scalar kBlue(180, 119, 31);   // BGR
const cv::Scalar kRed(40, 39, 214);
const cv::Scalar kOrange(14, 127, 255);
const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrey(200, 200, 200);

void put_text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.4) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, kBlack, 1, cv::LINE_AA);
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void render_boxplot(const std::vector<FoldScores>& scores, const std::filesystem::path& path) {
  const int w = 1000, h = 520, left = 70, right = 20, top = 40, bottom = 80;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = 1.0, hi = 0.0;
  for (const auto& s : scores) {
    for (double a : s.aucs) {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  }
  lo = std::max(0.0, lo - 0.02);
  hi = std::min(1.0, hi + 0.02);
  if (hi <= lo) hi = lo + 0.01;
  auto y_of = [&](double v) { return static_cast<int>(top + (hi - v) / (hi - lo) * (h - top - bottom)); };

  cv::rectangle(img, {left, top}, {w - right, h - bottom}, kBlack, 1);
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    cv::line(img, {left, y_of(v)}, {w - right, y_of(v)}, kGrey, 1);
    put_text(img, fixed(v, 3), {8, y_of(v) + 4});
  }
  put_text(img, "AUC per fold (blue: frozen, orange: non frozen)", {left, 24}, 0.5);

  const int groups = static_cast<int>(std::size(kTableRows));
  const double slot = static_cast<double>(w - left - right) / groups;
  for (int g = 0; g < groups; ++g) {
    const auto& row = kTableRows[g];
    const int cx = static_cast<int>(left + slot * (g + 0.5));
    std::string label(row.display);
    if (label.size() > 18) label = "Opt. weighted avg";
    put_text(img, label, {cx - static_cast<int>(label.size()) * 3, h - bottom + 20});
    for (Variant v : {Variant::frozen, Variant::nonfrozen}) {
      auto it = std::find_if(scores.begin(), scores.end(),
                             [&](const FoldScores& s) { return s.model_name == row.key && s.variant == v; });
      if (it == scores.end() || it->aucs.empty()) continue;
      const BoxStats b = box_stats(it->aucs);
      const int x = cx + (v == Variant::frozen ? -22 : 22);
      const cv::Scalar colour = v == Variant::frozen ? kBlue : kOrange;
      cv::line(img, {x, y_of(b.whisker_low)}, {x, y_of(b.whisker_high)}, colour, 1);
      cv::rectangle(img, {x - 14, y_of(b.q3)}, {x + 14, y_of(b.q1)}, colour, 2);
      cv::line(img, {x - 14, y_of(b.median)}, {x + 14, y_of(b.median)}, kBlack, 2);
      for (double a : it->aucs) cv::circle(img, {x, y_of(a)}, 2, colour, cv::FILLED);
    }
  }
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

void render_densities(const std::vector<DensitySummary>& densities, const std::filesystem::path& path) {
  const int panel_w = 360, h = 320, margin = 40;
  cv::Mat img(h, panel_w * 3, CV_8UC3, cv::Scalar(255, 255, 255));
  for (Feature f : kFeatures) {
    const int x0 = static_cast<int>(f) * panel_w;
    double gx_lo = 1e300, gx_hi = -1e300, dmax = 0.0;
    for (const auto& d : densities) {
      if (d.feature != f || d.cls == DensityClass::all || d.grid.empty()) continue;
      gx_lo = std::min(gx_lo, d.grid.front());
      gx_hi = std::max(gx_hi, d.grid.back());
      dmax = std::max(dmax, *std::max_element(d.density.begin(), d.density.end()));
    }
    cv::rectangle(img, {x0 + margin, margin}, {x0 + panel_w - 10, h - margin}, kBlack, 1);
    put_text(img, std::string("f(") + feature_letter(f) + ")", {x0 + margin, 24}, 0.5);
    if (dmax <= 0.0) continue;
    auto px = [&](double x) {
      return x0 + margin + static_cast<int>((x - gx_lo) / (gx_hi - gx_lo) * (panel_w - 10 - margin));
    };
    auto py = [&](double y) { return h - margin - static_cast<int>(y / dmax * (h - 2 * margin)); };
    put_text(img, fixed(gx_lo, 1), {x0 + margin, h - margin + 16});
    put_text(img, fixed(gx_hi, 1), {x0 + panel_w - 40, h - margin + 16});
    for (const auto& d : densities) {
      if (d.feature != f || d.cls == DensityClass::all) continue;
      const bool malignant = d.cls == DensityClass::malignant;
      for (std::size_t i = 1; i < d.grid.size(); ++i) {
        // Malignant is drawn dashed.
        if (malignant && (i / 6) % 2 == 1) continue;
        cv::line(img, {px(d.grid[i - 1]), py(d.density[i - 1])}, {px(d.grid[i]), py(d.density[i])},
                 malignant ? kRed : kBlue, 2, cv::LINE_AA);
      }
    }
  }
  if (!cv::imwrite(path.string(), img)) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::vector<FoldScores>& scores,
                                              const std::vector<DensitySummary>& densities,
                                              const std::filesystem::path& out_dir) {
  if (scores.empty() && densities.empty()) throw ValidationError("nothing to plot");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw std::runtime_error("cannot create plot directory " + out_dir.string());
  }
  std::vector<std::filesystem::path> written;

  if (!scores.empty()) {
    std::ostringstream folds, boxes;
    folds << "model,variant,fold,auc\n";
    boxes << "model,variant,n,min,q1,median,q3,max,whisker_low,whisker_high\n";
    for (const auto& s : scores) {
      for (std::size_t i = 0; i < s.aucs.size(); ++i) {
        folds << s.model_name << ',' << variant_name(s.variant) << ',' << i << ',' << detail::format_double(s.aucs[i])
              << '\n';
      }
      if (s.aucs.empty()) continue;
      const BoxStats b = box_stats(s.aucs);
      boxes << s.model_name << ',' << variant_name(s.variant) << ',' << s.aucs.size();
      for (double v : {b.min, b.q1, b.median, b.q3, b.max, b.whisker_low, b.whisker_high}) {
        boxes << ',' << detail::format_double(v);
      }
      boxes << '\n';
    }
    write_text(out_dir / "fold_aucs.csv", folds.str());
    write_text(out_dir / "boxplot.csv", boxes.str());
    render_boxplot(scores, out_dir / "boxplot.png");
    written.insert(written.end(), {out_dir / "fold_aucs.csv", out_dir / "boxplot.csv", out_dir / "boxplot.png"});
  }

  if (!densities.empty()) {
    std::ostringstream out;
    out << "feature,class,x,density\n";
    for (const auto& d : densities) {
      for (std::size_t i = 0; i < d.grid.size(); ++i) {
        out << feature_letter(d.feature) << ',' << density_class_name(d.cls) << ','
            << detail::format_double(d.grid[i]) << ',' << detail::format_double(d.density[i]) << '\n';
      }
    }
    write_text(out_dir / "density.csv", out.str());
    render_densities(densities, out_dir / "density.png");
    written.insert(written.end(), {out_dir / "density.csv", out_dir / "density.png"});
  }
  return written;
}

std::vector<FoldScores> read_fold_aucs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_line(in, line, line_no) || detail::trim(line) != "model,variant,fold,auc") {
    throw ParseError("expected header 'model,variant,fold,auc'", line_no);
  }
  std::vector<std::pair<std::string, Variant>> order;
  std::map<std::pair<std::string, Variant>, std::vector<double>> aucs;
  while (detail::next_line(in, line, line_no)) {
    auto cols = detail::split_csv(line);
    if (cols.size() != 4) throw ParseError("expected 4 columns", line_no);
    auto key = std::make_pair(std::string(cols[0]), parse_variant(cols[1]));
    auto v = detail::parse_double(cols[3]);
    if (!v) throw ParseError("bad AUC value", line_no);
    if (!aucs.count(key)) order.push_back(key);
    aucs[key].push_back(*v);
  }
  std::vector<FoldScores> out;
  for (const auto& key : order) out.push_back(make_fold_scores(key.first, key.second, aucs[key]));
  return out;
}

}  // namespace crowdmt
