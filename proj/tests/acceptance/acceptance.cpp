// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance --cli <path to crowdmt> --work <scratch dir> [--only N]
//
// Criterion 8 needs the real dermoscopy data and VGG16 weights; it runs only
// when CROWDMT_FULL_CONFIG points at a pipeline config for them.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "crowdmt/crowd_annotations.hpp"
#include "crowdmt/dataset.hpp"
#include "crowdmt/ensemble.hpp"
#include "crowdmt/evaluation.hpp"
#include "crowdmt/losses.hpp"
#include "crowdmt/model.hpp"
#include "crowdmt/training.hpp"

namespace fs = std::filesystem;
using namespace crowdmt;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status{Status::fail};
  std::string detail;
};

Outcome pass(std::string d) { return {Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::fail, std::move(d)}; }

std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = cli + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path artifact_root(const fs::path& out) {
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.is_directory() && e.path().filename().string().rfind("synthetic-data-", 0) != 0) return e.path();
  }
  return {};
}

// Relative path -> bytes for every regular file under `root` matching `keep`.
std::map<std::string, std::string> snapshot(const fs::path& root, const std::function<bool(const fs::path&)>& keep) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && keep(e.path())) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

// ---------------------------------------------------------------------------
// 1. masked loss
// ---------------------------------------------------------------------------

Outcome masked_loss_oracle() {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> size(1, 64);
  double worst = 0.0;
  int masked_positions = 0;
  for (int b = 0; b < 1000; ++b) {
    const int sz = size(rng);
    const double missing = b % 10 == 0 ? 1.0 : b % 10 == 1 ? 0.0 : u(rng);
    std::vector<double> t(sz), p(sz);
    std::vector<std::uint8_t> m(sz);
    for (int i = 0; i < sz; ++i) {
      t[i] = n(rng);
      p[i] = n(rng);
      m[i] = u(rng) >= missing;
    }
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < sz; ++i) {
      if (m[i]) {
        sum += (p[i] - t[i]) * (p[i] - t[i]);
        ++count;
      }
    }
    const double oracle = count ? sum / count : 0.0;
    worst = std::max(worst, std::abs(masked_mse(t, p, m) - oracle));
    const auto g = masked_mse_gradient(t, p, m);
    for (int i = 0; i < sz; ++i) {
      if (m[i]) continue;
      ++masked_positions;
      if (g[i] != 0.0) return fail("nonzero gradient at a masked-out position");
    }
  }
  if (worst > 1e-10) return fail("max |masked_mse - oracle| = " + fmt(worst));
  return pass("1000 batches, max deviation " + fmt(worst) + ", " + std::to_string(masked_positions) +
              " masked-out gradients all exactly 0");
}

// ---------------------------------------------------------------------------
// 2. standardization
// ---------------------------------------------------------------------------

std::vector<RawAnnotation> as_group(const std::vector<double>& xs, Feature f) {
  std::vector<RawAnnotation> out;
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back({"L" + std::to_string(i), "S", f, xs[i]});
  return out;
}

Outcome standardization_invariants() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> size(2, 60), score(1, 10), pow2(1, 6);
  double worst_mean = 0.0, worst_std = 0.0;
  int degenerate = 0;
  // All 500 groups go through one call so the grouping logic is exercised.
  std::vector<RawAnnotation> all;
  std::vector<std::size_t> starts;
  for (int g = 0; g < 500; ++g) {
    const int sz = size(rng);
    const double scale = std::exp(2 * n(rng)), shift = 10 * n(rng);
    starts.push_back(all.size());
    const bool constant = g % 50 == 0;
    for (int i = 0; i < sz; ++i) {
      all.push_back({"L" + std::to_string(i), "S" + std::to_string(g), kFeatures[g % 3],
                     constant ? shift : shift + scale * n(rng)});
    }
  }
  starts.push_back(all.size());
  const auto z = standardize_per_annotator(all);
  for (std::size_t g = 0; g + 1 < starts.size(); ++g) {
    const std::size_t a = starts[g], b = starts[g + 1];
    double m = 0.0, v = 0.0;
    for (std::size_t i = a; i < b; ++i) m += z[i].score;
    m /= static_cast<double>(b - a);
    for (std::size_t i = a; i < b; ++i) v += (z[i].score - m) * (z[i].score - m);
    const double sd = std::sqrt(v / static_cast<double>(b - a));
    if (g % 50 == 0) {
      ++degenerate;
      for (std::size_t i = a; i < b; ++i) {
        if (z[i].score != 0.0) return fail("zero-spread group not mapped to 0");
      }
      continue;
    }
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(sd - 1.0));
  }
  if (worst_mean >= 1e-9 || worst_std >= 1e-9) {
    return fail("max |mean| " + fmt(worst_mean) + ", max |std-1| " + fmt(worst_std));
  }

  // Metamorphic: integer scores in power-of-two groups keep every
  // intermediate exact, so shifted/scaled/permuted inputs must agree bitwise.
  int metamorphic = 0;
  for (int g = 0; g < 500; ++g) {
    std::vector<double> xs(std::size_t{1} << pow2(rng));
    for (double& x : xs) x = score(rng);
    const auto base = standardize_per_annotator(as_group(xs, Feature::A));
    auto shifted = xs, scaled = xs;
    for (double& x : shifted) x += 32;
    for (double& x : scaled) x *= 8;
    const auto zs = standardize_per_annotator(as_group(shifted, Feature::A));
    const auto zk = standardize_per_annotator(as_group(scaled, Feature::A));
    auto perm = as_group(xs, Feature::A);
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<RawAnnotation> permuted;
    for (std::size_t i : idx) permuted.push_back(perm[i]);
    const auto zp = standardize_per_annotator(permuted);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (zs[i].score != base[i].score || zk[i].score != base[i].score || zp[i].score != base[idx[i]].score) {
        return fail("metamorphic mismatch in group " + std::to_string(g));
      }
    }
    ++metamorphic;
  }
  return pass("500 groups (" + std::to_string(degenerate) + " zero-spread): max |mean| " + fmt(worst_mean, 3) +
              ", max |std-1| " + fmt(worst_std, 3) + "; " + std::to_string(metamorphic) +
              " shift/scale/permutation checks exact");
}

// ---------------------------------------------------------------------------
// 3. AUC
// ---------------------------------------------------------------------------

Outcome auc_oracle() {
  const double worked = roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1});
  if (worked != 0.75) return fail("worked case gave " + fmt(worked));
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> size(2, 200);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int n = size(rng);
    std::uniform_int_distribution<int> level(0, t % 2 ? 5 : 1000);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(rng) / 7.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    double good = 0.0, pairs = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1;
          good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
      }
    }
    worst = std::max(worst, std::abs(roc_auc(s, y) - good / pairs));
  }
  if (worst > 1e-12) return fail("max deviation " + fmt(worst));
  return pass("worked case 0.75; 200 instances, max deviation " + fmt(worst));
}

// ---------------------------------------------------------------------------
// 4. stratification
// ---------------------------------------------------------------------------

DatasetManifest class_count_manifest() {
  std::vector<LesionRecord> records;
  std::mt19937_64 rng(404);
  std::vector<int> labels(2000, 0);
  std::fill(labels.begin(), labels.begin() + 628, 1);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (int i = 0; i < 2000; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "ISIC_%07d", i);
    records.push_back({id, {}, labels[i] ? Diagnosis::melanoma : Diagnosis::nevus, labels[i]});
  }
  return DatasetManifest(std::move(records));
}

Outcome stratification() {
  const auto manifest = class_count_manifest();
  const auto folds = stratified_splits(manifest, 5, {0.70, 0.175, 0.125}, 42);
  if (folds.size() != 5) return fail("expected 5 folds");
  double worst = 0.0;
  for (const auto& f : folds) {
    if (f.train_ids.size() != 1400 || f.val_ids.size() != 350 || f.test_ids.size() != 250) {
      return fail("fold " + std::to_string(f.fold_index) + " sizes " + std::to_string(f.train_ids.size()) + "/" +
                  std::to_string(f.val_ids.size()) + "/" + std::to_string(f.test_ids.size()));
    }
    for (const auto* s : {&f.train_ids, &f.val_ids, &f.test_ids}) {
      double mal = 0;
      for (const auto& id : *s) mal += manifest.at(id).label;
      const double dev = std::abs(mal / s->size() - 0.314);
      if (dev > 1.0 / s->size()) return fail("malignant fraction off by " + fmt(dev));
      worst = std::max(worst, dev * s->size());
    }
  }
  return pass("5 folds of 1400/350/250; worst |fraction-0.314| = " + fmt(worst, 3) + "/|subset|");
}

// ---------------------------------------------------------------------------
// 5. differential evolution
// ---------------------------------------------------------------------------

PredictionMatrix make_matrix(const std::vector<std::vector<double>>& cols, const std::vector<int>& labels) {
  PredictionMatrix pm;
  for (std::size_t i = 0; i < labels.size(); ++i) pm.lesion_ids.push_back("L" + std::to_string(i));
  pm.labels = labels;
  pm.add_column("A", cols[0]);
  pm.add_column("B", cols[1]);
  pm.add_column("C", cols[2]);
  return pm;
}

std::vector<PredictionMatrix> de_instances() {
  std::vector<PredictionMatrix> out;
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) y[i] = i < 14 ? 1 : 0;
    std::shuffle(y.begin(), y.end(), rng);
    std::vector<std::vector<double>> cols(3, std::vector<double>(40));
    const double strength[3] = {u(rng), u(rng), u(rng)};
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 40; ++i) {
        cols[c][i] = 1.0 / (1.0 + std::exp(-(strength[c] * 1.5 * y[i] + n(rng))));
      }
    }
    out.push_back(make_matrix(cols, y));
  }
  return out;
}

PredictionMatrix planted_instance() {
  std::mt19937_64 rng(506);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  std::vector<int> y(40);
  std::vector<std::vector<double>> cols(3, std::vector<double>(40));
  for (int i = 0; i < 40; ++i) {
    y[i] = i % 3 == 0;
    cols[0][i] = y[i] ? 0.55 + 0.4 * u(rng) : 0.05 + 0.4 * u(rng);
    cols[1][i] = u(rng);
    cols[2][i] = u(rng);
  }
  return make_matrix(cols, y);
}

double grid_search(const PredictionMatrix& pm) {
  double best = 0.0;
  for (int a = 0; a <= 100; ++a) {
    for (int b = 0; a + b <= 100; ++b) {
      const auto w = normalize_weights({a / 100.0, b / 100.0, (100 - a - b) / 100.0});
      best = std::max(best, roc_auc(weighted_ensemble(pm, w), pm.labels));
    }
  }
  return best;
}

std::vector<std::string> de_weight_files() {
  std::vector<std::string> files;
  const auto instances = de_instances();
  for (std::size_t k = 0; k < instances.size(); ++k) {
    DEConfig cfg;
    cfg.seed = k;
    const auto r = optimize_weights_de(instances[k], cfg);
    files.push_back(weights_to_json(static_cast<int>(k), r.weights, "val", r.achieved_auc));
  }
  return files;
}

Outcome de_quality() {
  const auto instances = de_instances();
  double worst_gap = -1.0, worst_dominance = 1.0;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    DEConfig cfg;
    cfg.seed = k;
    const auto r = optimize_weights_de(instances[k], cfg);
    const double grid = grid_search(instances[k]);
    if (r.achieved_auc < r.equal_weight_auc) return fail("instance " + std::to_string(k) + " below equal weights");
    if (r.achieved_auc < grid - 0.01) {
      return fail("instance " + std::to_string(k) + ": DE " + fmt(r.achieved_auc) + " vs grid " + fmt(grid));
    }
    worst_gap = std::max(worst_gap, grid - r.achieved_auc);
    worst_dominance = std::min(worst_dominance, r.achieved_auc - r.equal_weight_auc);
  }
  const auto planted = optimize_weights_de(planted_instance(), DEConfig{});
  if (planted.achieved_auc < 0.99 || planted.weights.w[0] < 0.8) {
    return fail("planted instance: AUC " + fmt(planted.achieved_auc) + ", w1 " + fmt(planted.weights.w[0]));
  }
  return pass("50 instances: min (DE - equal) " + fmt(worst_dominance, 4) + ", max (grid - DE) " + fmt(worst_gap, 4) +
              "; planted AUC " + fmt(planted.achieved_auc, 4) + ", w1 " + fmt(planted.weights.w[0], 4));
}

// ---------------------------------------------------------------------------
// 6. freeze regression
// ---------------------------------------------------------------------------

Outcome freeze_regression() {
  ModelConfig cfg;
  cfg.kind = ModelKind::multitask;
  cfg.auxiliary_feature = Feature::A;
  cfg.hidden_units = 32;
  cfg.encoder.name = EncoderName::tiny_test;
  cfg.encoder.input_height = cfg.encoder.input_width = 32;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<float> u(0.0f, 255.0f);
  std::vector<BatchExample> batch;
  for (int i = 0; i < 8; ++i) {
    Image img(32, 32);
    for (float& v : img.pixels) v = u(rng);
    batch.push_back({img, i % 2, 0.5 * i - 1.0, static_cast<std::uint8_t>(i % 3 != 0)});
  }
  auto steps = [&](bool trainable) {
    Model m(cfg, 7);
    set_encoder_trainable(m, trainable);
    RmsProp opt(1e-3, 0.9, 1e-7);
    const auto before = m.encoder_checksum();
    const auto head_before = m.head_parameters().front()->value;
    for (int s = 0; s < 10; ++s) train_step(m, opt, batch, ClassWeights{0.73, 1.59});
    return std::tuple{before, m.encoder_checksum(), head_before != m.head_parameters().front()->value};
  };
  const auto [fb, fa, frozen_head_moved] = steps(false);
  const auto [tb, ta, open_head_moved] = steps(true);
  if (fb != fa) return fail("frozen encoder checksum changed");
  if (tb == ta) return fail("trainable encoder checksum did not change");
  if (!frozen_head_moved || !open_head_moved) return fail("head parameters did not train");
  char buf[96];
  std::snprintf(buf, sizeof buf, "frozen %016llx == %016llx; trainable %016llx -> %016llx",
                static_cast<unsigned long long>(fb), static_cast<unsigned long long>(fa),
                static_cast<unsigned long long>(tb), static_cast<unsigned long long>(ta));
  return pass(buf);
}

// ---------------------------------------------------------------------------
// 7. end-to-end synthetic run
// ---------------------------------------------------------------------------

struct EndToEnd {
  std::string cli;
  fs::path work;
  fs::path first_root;
};

Outcome end_to_end(EndToEnd& e2e, const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out);
  const int code = run_cli(e2e.cli, "--synthetic --out " + out.string() + " all", out / "log.txt");
  if (code != 0) return fail("pipeline exited with " + std::to_string(code) + "; see " + (out / "log.txt").string());
  const fs::path root = artifact_root(out);
  std::ifstream csv(root / "report" / "results.csv");
  std::string line;
  std::getline(csv, line);
  int cells = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (f.size() != 5) return fail("malformed results row: " + line);
    std::stringstream aucs(f[4]);
    int folds = 0;
    for (std::string a; std::getline(aucs, a, ';');) {
      const double v = std::stod(a);
      if (!(v >= 0.0 && v <= 1.0)) return fail("AUC out of range in " + line);
      ++folds;
    }
    if (folds != 2) return fail("expected 2 folds in " + line);
    ++cells;
  }
  if (cells != 12) return fail("results table has " + std::to_string(cells) + " of 12 cells");

  double min_margin = 1.0;
  for (const char* v : {"frozen", "nonfrozen"}) {
    for (int fold = 0; fold < 2; ++fold) {
      const std::string stem = std::string("-") + v + "-fold" + std::to_string(fold);
      const auto w = weights_from_json(read_file(root / "ensemble" / ("de" + stem + "-weights.json")));
      const auto avg = to_subset_predictions(read_predictions_csv(root / "ensemble" / ("avg" + stem + "-val.csv")));
      const auto de = to_subset_predictions(read_predictions_csv(root / "ensemble" / ("de" + stem + "-val.csv")));
      const double equal_auc = roc_auc(avg.probabilities, avg.labels);
      const double de_auc = roc_auc(de.probabilities, de.labels);
      if (w.optimized_on != "val" || de_auc < equal_auc || std::abs(de_auc - w.achieved_auc) > 1e-12) {
        return fail(std::string(v) + " fold " + std::to_string(fold) + ": DE val AUC " + fmt(de_auc) +
                    " vs equal " + fmt(equal_auc));
      }
      min_margin = std::min(min_margin, de_auc - equal_auc);
    }
  }
  e2e.first_root = root;
  return pass("complete 6x2 table, all AUCs in [0,1]; DE val AUC >= equal-weight val AUC per fold (min margin " +
              fmt(min_margin, 4) + ")");
}

// ---------------------------------------------------------------------------
// 8. full-scale run (opt-in)
// ---------------------------------------------------------------------------

Outcome full_scale(const EndToEnd& e2e) {
  const char* config = std::getenv("CROWDMT_FULL_CONFIG");
  if (!config || !*config) {
    return {Status::skip, "needs ISIC 2017 images, the crowd annotation files and VGG16 weights; "
                          "set CROWDMT_FULL_CONFIG to a pipeline config to run it"};
  }
  const fs::path out = e2e.work / "full";
  fs::create_directories(out);
  const char* jobs = std::getenv("CROWDMT_FULL_JOBS");
  const int code = run_cli(e2e.cli, std::string("--config ") + config + " --out " + out.string() + " all --jobs " +
                                        (jobs ? jobs : "1"),
                           out / "log.txt");
  if (code != 0) return fail("pipeline exited with " + std::to_string(code));
  const auto scores = read_fold_aucs_csv(artifact_root(out) / "report" / "fold_aucs.csv");
  std::map<std::pair<std::string, std::string>, double> mean;
  for (const auto& s : scores) {
    mean[{s.model_name, std::string(variant_name(s.variant))}] = make_fold_scores(s.model_name, s.variant, s.aucs).mean;
  }
  std::ostringstream why;
  bool ok = true;
  for (const char* arm : {"baseline", "A", "B", "C", "avg", "de"}) {
    if (mean[{arm, "nonfrozen"}] < mean[{arm, "frozen"}]) {
      ok = false;
      why << arm << " frozen > nonfrozen; ";
    }
  }
  for (const char* ens : {"avg", "de"}) {
    if (mean[{ens, "nonfrozen"}] < mean[{"baseline", "nonfrozen"}]) {
      ok = false;
      why << ens << " below baseline; ";
    }
  }
  const double base = mean[{"baseline", "nonfrozen"}], de = mean[{"de", "nonfrozen"}];
  if (std::abs(base - 0.794) > 0.05) {
    ok = false;
    why << "baseline " << base << " not within 0.05 of 0.794; ";
  }
  if (std::abs(de - 0.811) > 0.05) {
    ok = false;
    why << "optimized ensemble " << de << " not within 0.05 of 0.811; ";
  }
  return ok ? pass("baseline " + fmt(base, 3) + ", optimized ensemble " + fmt(de, 3)) : fail(why.str());
}

// ---------------------------------------------------------------------------
// 9. determinism
// ---------------------------------------------------------------------------

Outcome determinism(EndToEnd& e2e) {
  const auto manifest = class_count_manifest();
  const auto a = stratified_splits(manifest, 5, {}, 42), b = stratified_splits(manifest, 5, {}, 42);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (fold_split_to_json(a[i]) != fold_split_to_json(b[i])) return fail("split files differ");
  }
  if (de_weight_files() != de_weight_files()) return fail("DE weight files differ");

  if (e2e.first_root.empty()) {
    const auto first = end_to_end(e2e, e2e.work / "e2e");
    if (first.status != Status::pass) return fail("first end-to-end run failed: " + first.detail);
  }
  const auto second = end_to_end(e2e, e2e.work / "e2e-repeat");
  if (second.status != Status::pass) return fail("repeat end-to-end run failed: " + second.detail);
  const fs::path again = artifact_root(e2e.work / "e2e-repeat");
  auto keep = [](const fs::path& p) {
    const auto ext = p.extension();
    return ext == ".json" || ext == ".csv";
  };
  const auto x = snapshot(e2e.first_root, keep), y = snapshot(again, keep);
  if (x.size() != y.size()) return fail("artifact sets differ");
  std::size_t splits = 0, weights = 0, predictions = 0;
  for (const auto& [name, bytes] : x) {
    auto it = y.find(name);
    if (it == y.end() || it->second != bytes) return fail("artifact differs: " + name);
    if (name.rfind("splits/", 0) == 0) ++splits;
    if (name.find("-weights.json") != std::string::npos) ++weights;
    if (name.find("predictions.csv") != std::string::npos || name.rfind("ensemble/", 0) == 0) ++predictions;
  }
  return pass("splits (k=5 and pipeline: " + std::to_string(splits) + " files), 50+" + std::to_string(weights) +
              " weight files and " + std::to_string(predictions) + " prediction CSVs byte-identical; " +
              std::to_string(x.size()) + " JSON/CSV artifacts compared");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowdmt acceptance suite"};
  EndToEnd e2e;
  std::string work = (fs::temp_directory_path() / "crowdmt-acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", e2e.cli, "Path to the crowdmt executable")->required();
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  e2e.work = work;
  fs::create_directories(e2e.work);

  struct Criterion {
    int id;
    std::string name;
    double limit_s;  // 0 = no limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "masked-loss oracle equivalence", 10, masked_loss_oracle},
      {2, "standardization invariants", 5, standardization_invariants},
      {3, "AUC oracle equivalence", 10, auc_oracle},
      {4, "stratification", 1, stratification},
      {5, "DE dominance and near-optimality", 120, de_quality},
      {6, "freeze regression", 30, freeze_regression},
      {7, "end-to-end synthetic pipeline", 600, [&] { return end_to_end(e2e, e2e.work / "e2e"); }},
      {8, "full-scale reproduction", 0, [&] { return full_scale(e2e); }},
      {9, "determinism", 0, [&] { return determinism(e2e); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.status == Status::pass && c.limit_s > 0 && secs > c.limit_s) {
      o = fail("took " + fmt(secs, 3) + " s, limit " + fmt(c.limit_s) + " s; " + o.detail);
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::skip ? "SKIP" : "FAIL";
    std::cout << "[" << tag << "] " << c.id << ". " << c.name << " (" << fmt(secs, 3) << " s";
    if (c.limit_s > 0) std::cout << ", limit " << fmt(c.limit_s) << " s";
    std::cout << "): " << o.detail << std::endl;
    if (o.status == Status::fail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
