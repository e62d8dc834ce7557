// crowdmt: command-line driver for the crowd-feature multi-task pipeline.
//
//   crowdmt [--config FILE] [--set section.key=value]... [--synthetic] [--out DIR] <command>
//
// Commands: prepare, split, train, ensemble, report, all.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdmt/crowd_annotations.hpp"
#include "crowdmt/dataset.hpp"
#include "crowdmt/ensemble.hpp"
#include "crowdmt/errors.hpp"
#include "crowdmt/evaluation.hpp"
#include "crowdmt/pipeline_config.hpp"
#include "crowdmt/synthetic.hpp"
#include "crowdmt/training.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace crowdmt;

namespace {

struct GlobalOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  bool synthetic{false};
  std::string out_dir;
};

struct TrainOptions {
  std::string arm{"all"};
  std::string variant{"all"};
  std::string fold{"all"};
  int jobs{1};
};

struct EnsembleOptions {
  std::string strategy{"all"};
  std::string variant{"all"};
  std::string fold{"all"};
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("missing artifact: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

// Artifact layout under <output>/<config hash>/.
struct Layout {
  fs::path root;
  fs::path prepare() const { return root / "prepare"; }
  fs::path features() const { return prepare() / "features.csv"; }
  fs::path density() const { return prepare() / "density.json"; }
  fs::path splits() const { return root / "splits"; }
  fs::path split(int fold) const { return splits() / ("fold_" + std::to_string(fold) + ".json"); }
  fs::path run(const std::string& arm, Variant v, int fold) const {
    return root / "train" / (arm + "-" + std::string(variant_name(v)) + "-fold" + std::to_string(fold));
  }
  fs::path ensemble(const std::string& strategy, Variant v, int fold, const std::string& suffix) const {
    return root / "ensemble" / (strategy + "-" + std::string(variant_name(v)) + "-fold" + std::to_string(fold) + suffix);
  }
  fs::path report() const { return root / "report"; }
};

class Pipeline {
 public:
  Pipeline(GlobalOptions opts) : opts_(std::move(opts)) {
    std::vector<std::string> overrides = opts_.overrides;
    if (!opts_.out_dir.empty()) overrides.push_back("paths.output=" + opts_.out_dir);
    cfg_ = load_pipeline_config(opts_.config_file, overrides, opts_.synthetic);
    cfg_.validate(/*check_paths=*/false);
    layout_.root = cfg_.artifact_root();
  }

  const PipelineConfig& config() const { return cfg_; }
  const Layout& layout() const { return layout_; }

  void ensure_inputs() {
    if (cfg_.synthetic && !fs::exists(cfg_.paths.labels)) {
      const auto dir = cfg_.synthetic_dir();
      std::cerr << "generating synthetic dataset in " << dir << "\n";
      const auto tmp = dir.string() + ".partial";
      fs::remove_all(tmp);
      generate_synthetic_dataset(cfg_.synthetic_data, tmp);
      fs::remove_all(dir);
      fs::rename(tmp, dir);
    }
    cfg_.validate(/*check_paths=*/true);
  }

  const DatasetManifest& manifest() {
    if (!manifest_) {
      ensure_inputs();
      manifest_ = load_manifest(cfg_.paths.labels, cfg_.paths.images);
    }
    return *manifest_;
  }

  // ---------------------------------------------------------------------
  void prepare() {
    const auto& m = manifest();
    const auto raw = ingest_annotations(cfg_.paths.annotations);
    const auto standardized = standardize_per_annotator(raw);
    const auto table = aggregate_per_lesion(standardized, m.lesion_ids());
    const auto densities = feature_density_summary(table, m.labels());

    fs::create_directories(layout_.prepare());
    write_feature_table_csv(table, layout_.features());
    write_file(layout_.density(), density_summaries_to_json(densities) + "\n");

    std::ostringstream stats;
    stats << "annotator_id,feature,mean,std,count\n";
    std::set<std::string> annotators;
    for (const auto& s : annotator_stats(raw)) {
      annotators.insert(s.annotator_id);
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu", s.mean, s.std, s.count);
      stats << s.annotator_id << ',' << feature_letter(s.feature) << ',' << buf << '\n';
    }
    write_file(layout_.prepare() / "annotator_stats.csv", stats.str());

    std::size_t annotated = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table.available(Feature::A, i) || table.available(Feature::B, i) || table.available(Feature::C, i)) {
        ++annotated;
      }
    }
    nlohmann::ordered_json report;
    report["lesions"] = m.size();
    const auto labels = m.labels();
    report["malignant"] = std::count(labels.begin(), labels.end(), 1);
    report["annotations"] = raw.size();
    report["annotators"] = annotators.size();
    report["annotated_lesions"] = annotated;
    report["feature_counts"] = {{"A", table.available_count(Feature::A)},
                                {"B", table.available_count(Feature::B)},
                                {"C", table.available_count(Feature::C)}};
    report["isic2017_reference_counts"] = {{"annotated_lesions", 745}, {"A", 744}, {"B", 745}, {"C", 445}};
    if (cfg_.synthetic) {
      const auto expected = expected_synthetic_summary(cfg_.synthetic_data);
      report["generator_counts"] = {{"annotated_lesions", expected.annotated},
                                    {"A", expected.feature_counts[0]},
                                    {"B", expected.feature_counts[1]},
                                    {"C", expected.feature_counts[2]}};
      report["matches_generator"] =
          static_cast<int>(table.available_count(Feature::A)) == expected.feature_counts[0] &&
          static_cast<int>(table.available_count(Feature::B)) == expected.feature_counts[1] &&
          static_cast<int>(table.available_count(Feature::C)) == expected.feature_counts[2] &&
          static_cast<int>(annotated) == expected.annotated;
    }
    nlohmann::ordered_json dens = nlohmann::ordered_json::array();
    for (const auto& d : densities) {
      dens.push_back({{"feature", std::string(1, feature_letter(d.feature))},
                      {"class", density_class_name(d.cls)},
                      {"mean", d.mean},
                      {"std", d.std}});
    }
    report["density_moments"] = dens;
    write_file(layout_.prepare() / "report.json", report.dump(1) + "\n");

    std::cout << "prepare: " << m.size() << " lesions, " << annotated << " annotated; A=" << table.available_count(Feature::A)
              << " B=" << table.available_count(Feature::B) << " C=" << table.available_count(Feature::C) << "\n"
              << "  -> " << layout_.prepare().string() << "\n";
  }

  // ---------------------------------------------------------------------
  void split() {
    const auto folds = stratified_splits(manifest(), cfg_.folds, cfg_.fractions, cfg_.seed);
    fs::create_directories(layout_.splits());
    for (const auto& f : folds) write_file(layout_.split(f.fold_index), fold_split_to_json(f));
    std::cout << "split: " << folds.size() << " folds (" << folds.front().train_ids.size() << "/"
              << folds.front().val_ids.size() << "/" << folds.front().test_ids.size() << ")\n  -> "
              << layout_.splits().string() << "\n";
  }

  FoldSplit load_split(int fold) { return fold_split_from_json(read_file(layout_.split(fold))); }

  std::vector<int> fold_list(const std::string& spec) const {
    if (spec == "all") {
      std::vector<int> all(cfg_.folds);
      for (int i = 0; i < cfg_.folds; ++i) all[i] = i;
      return all;
    }
    auto v = std::stoi(spec);
    if (v < 0 || v >= cfg_.folds) throw ConfigError("--fold must be in [0, " + std::to_string(cfg_.folds) + ")");
    return {v};
  }

  static std::vector<Variant> variant_list(const std::string& spec) {
    if (spec == "all") return {Variant::frozen, Variant::nonfrozen};
    return {parse_variant(spec)};
  }

  static std::vector<Arm> arm_list(const std::string& spec) {
    if (spec == "all") return {std::begin(kArms), std::end(kArms)};
    auto a = parse_arm(spec);
    if (!a) throw ConfigError("unknown arm '" + spec + "' (expected baseline, A, B, C or all)");
    return {*a};
  }

  // ---------------------------------------------------------------------
  void train(const TrainOptions& t) {
    const auto arms = arm_list(t.arm);
    const auto variants = variant_list(t.variant);
    const auto folds = fold_list(t.fold);
    for (int f : folds) {
      if (!fs::exists(layout_.split(f))) throw ValidationError("missing artifact: " + layout_.split(f).string() + " (run split)");
    }
    const bool mt = std::any_of(arms.begin(), arms.end(), [](Arm a) { return a != Arm::baseline; });
    if (mt && !fs::exists(layout_.features())) {
      throw ValidationError("missing artifact: " + layout_.features().string() + " (run prepare)");
    }

    struct Job {
      Arm arm;
      Variant variant;
      int fold;
    };
    std::vector<Job> jobs;
    for (int f : folds) {
      for (Variant v : variants) {
        for (Arm a : arms) jobs.push_back({a, v, f});
      }
    }
    if (t.jobs > 1 && jobs.size() > 1) {
      run_parallel(jobs.size(), t.jobs, [&](std::size_t i) {
        return std::vector<std::string>{"train", "--arm", arm_name(jobs[i].arm), "--variant",
                                        std::string(variant_name(jobs[i].variant)), "--fold",
                                        std::to_string(jobs[i].fold)};
      });
      return;
    }

    const auto& m = manifest();
    FeatureTable table;
    if (fs::exists(layout_.features())) table = read_feature_table_csv(layout_.features());
    ManifestImageSource images(m);
    TrainingData data{&m, mt ? &table : nullptr, &images, cfg_.augmentation};
    for (const auto& job : jobs) {
      const FoldSplit split = load_split(job.fold);
      TrainingConfig tc = cfg_.training;
      tc.seed = cfg_.training.seed + static_cast<std::uint64_t>(job.fold);
      Model model(model_config_for(job.arm, job.variant, cfg_.model), tc.seed);
      const RunRecord rec = train_one(model, split, data, tc);

      const fs::path dir = layout_.run(arm_name(job.arm), job.variant, job.fold);
      fs::create_directories(dir);
      write_file(dir / "run.json", run_record_to_json(rec));
      write_predictions_csv(dir / "predictions.csv", job.fold, arm_name(job.arm), job.variant, rec.test);
      write_predictions_csv(dir / "val_predictions.csv", job.fold, arm_name(job.arm), job.variant, rec.validation);
      fs::path ckpt = dir / "checkpoint";
      if (const char* cache = std::getenv("CROWDMT_CACHE_DIR"); cache && *cache) {
        ckpt = fs::path(cache) / cfg_.hash() / dir.filename();
      }
      model.save(ckpt);
      std::cout << "train: " << dir.filename().string() << " test AUC "
                << roc_auc(rec.test.probabilities, rec.test.labels) << " (final loss " << rec.train_loss.back()
                << ")\n";
    }
  }

  template <typename ArgsFor>
  void run_parallel(std::size_t count, int max_jobs, ArgsFor args_for) {
    std::vector<std::string> base{"crowdmt"};
    if (!opts_.config_file.empty()) base.insert(base.end(), {"--config", opts_.config_file});
    for (const auto& o : opts_.overrides) base.insert(base.end(), {"--set", o});
    if (opts_.synthetic) base.push_back("--synthetic");
    if (!opts_.out_dir.empty()) base.insert(base.end(), {"--out", opts_.out_dir});
    // Children would race on generating the synthetic data.
    ensure_inputs();

    std::size_t next = 0, running = 0, failed = 0;
    while (next < count || running > 0) {
      while (next < count && running < static_cast<std::size_t>(max_jobs)) {
        std::vector<std::string> args = base;
        for (auto& a : args_for(next)) args.push_back(std::move(a));
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        pid_t pid;
        if (posix_spawn(&pid, "/proc/self/exe", nullptr, nullptr, argv.data(), environ) != 0) {
          throw std::runtime_error("failed to spawn worker process");
        }
        ++next;
        ++running;
      }
      int status = 0;
      if (wait(&status) > 0) {
        --running;
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failed;
      }
    }
    if (failed) throw std::runtime_error(std::to_string(failed) + " training run(s) failed");
  }

  // ---------------------------------------------------------------------
  PredictionMatrix load_mt_matrix(Variant v, int fold, const std::string& file) {
    PredictionMatrix pm;
    for (Feature f : kFeatures) {
      const std::string name(1, feature_letter(f));
      const fs::path p = layout_.run(name, v, fold) / file;
      if (!fs::exists(p)) {
        throw ValidationError("ensemble needs all three multi-task predictions; missing " + p.string());
      }
      const auto preds = to_subset_predictions(read_predictions_csv(p));
      if (pm.lesion_ids.empty()) {
        pm.lesion_ids = preds.lesion_ids;
        pm.labels = preds.labels;
      } else if (pm.lesion_ids != preds.lesion_ids) {
        throw ValidationError("multi-task prediction files disagree on lesions: " + p.string());
      }
      pm.add_column(name, preds.probabilities);
    }
    pm.validate();
    return pm;
  }

  void ensemble(const EnsembleOptions& e) {
    if (e.strategy != "avg" && e.strategy != "de" && e.strategy != "all") {
      throw ConfigError("--strategy must be avg, de or all");
    }
    for (int fold : fold_list(e.fold)) {
      for (Variant v : variant_list(e.variant)) {
        const PredictionMatrix test = load_mt_matrix(v, fold, "predictions.csv");
        const PredictionMatrix val = load_mt_matrix(v, fold, "val_predictions.csv");
        auto write_blend = [&](const std::string& strategy, const PredictionMatrix& pm, const std::vector<double>& p,
                               const std::string& suffix) {
          SubsetPredictions sp{pm.lesion_ids, p, pm.labels};
          fs::create_directories(layout_.root / "ensemble");
          write_predictions_csv(layout_.ensemble(strategy, v, fold, suffix), fold, strategy, v, sp);
        };
        if (e.strategy == "avg" || e.strategy == "all") {
          write_blend("avg", test, average_ensemble(test), ".csv");
          write_blend("avg", val, average_ensemble(val), "-val.csv");
          std::cout << "ensemble avg " << variant_name(v) << " fold " << fold << ": test AUC "
                    << roc_auc(average_ensemble(test), test.labels) << "\n";
        }
        if (e.strategy == "de" || e.strategy == "all") {
          const PredictionMatrix& target = cfg_.optimize_on == "test" ? test : val;
          DEConfig de = cfg_.de;
          de.seed = cfg_.de.seed + static_cast<std::uint64_t>(fold);
          const DEResult r = optimize_weights_de(target, de);
          write_file(layout_.ensemble("de", v, fold, "-weights.json"),
                     weights_to_json(fold, r.weights, cfg_.optimize_on, r.achieved_auc));
          write_blend("de", test, weighted_ensemble(test, r.weights), ".csv");
          write_blend("de", val, weighted_ensemble(val, r.weights), "-val.csv");
          std::cout << "ensemble de " << variant_name(v) << " fold " << fold << ": weights [" << r.weights.w[0] << ", "
                    << r.weights.w[1] << ", " << r.weights.w[2] << "], " << cfg_.optimize_on << " AUC "
                    << r.achieved_auc << " (equal weights " << r.equal_weight_auc << "), test AUC "
                    << roc_auc(weighted_ensemble(test, r.weights), test.labels)
                    << (cfg_.optimize_on == "test" ? " [weights fit on the test set]" : "") << "\n";
        }
      }
    }
  }

  // ---------------------------------------------------------------------
  void report(const std::string& format) {
    if (format != "txt" && format != "csv") throw ConfigError("--format must be txt or csv");
    std::vector<FoldScores> cells;
    for (const auto& row : kTableRows) {
      for (Variant v : {Variant::frozen, Variant::nonfrozen}) {
        std::vector<double> aucs;
        bool complete = true;
        for (int fold = 0; fold < cfg_.folds; ++fold) {
          const std::string key(row.key);
          const fs::path p = (key == "avg" || key == "de") ? layout_.ensemble(key, v, fold, ".csv")
                                                           : layout_.run(key, v, fold) / "predictions.csv";
          if (!fs::exists(p)) {
            complete = false;
            break;
          }
          const auto preds = to_subset_predictions(read_predictions_csv(p));
          aucs.push_back(roc_auc(preds.probabilities, preds.labels));
        }
        if (complete) cells.push_back(make_fold_scores(std::string(row.key), v, aucs));
      }
    }
    const ResultsTable table = summarize(cells, /*allow_missing=*/true);
    fs::create_directories(layout_.report());
    write_file(layout_.report() / "results.txt", table.to_text());
    write_file(layout_.report() / "results.csv", table.to_csv());
    std::vector<DensitySummary> densities;
    if (fs::exists(layout_.density())) densities = density_summaries_from_json(read_file(layout_.density()));
    if (!table.cells.empty() || !densities.empty()) emit_plots(table.cells, densities, layout_.report());
    if (format == "csv") {
      for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
    }
    std::cout << (format == "csv" ? table.to_csv() : table.to_text());
    std::cout << "  -> " << layout_.report().string() << "\n";
  }

 private:
  GlobalOptions opts_;
  PipelineConfig cfg_;
  Layout layout_;
  std::optional<DatasetManifest> manifest_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task skin lesion classification with crowdsourced ABC features"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_file, "INI-style configuration file");
  app.add_option("--set", g.overrides, "Override a setting: section.key=value")->take_all();
  app.add_flag("--synthetic", g.synthetic, "Use the built-in synthetic dataset and desk-scale defaults");
  app.add_option("--out", g.out_dir, "Output root (paths.output)");

  auto* prepare = app.add_subcommand("prepare", "Standardize and aggregate crowd annotations");
  auto* split = app.add_subcommand("split", "Write stratified fold splits");
  std::optional<int> split_folds;
  split->add_option("--folds", split_folds, "Number of folds (data.folds)");

  TrainOptions t;
  auto* train = app.add_subcommand("train", "Train experiment arms");
  train->add_option("--arm", t.arm, "baseline, A, B, C or all");
  train->add_option("--variant", t.variant, "frozen, nonfrozen or all");
  train->add_option("--fold", t.fold, "Fold index or all");
  train->add_option("--jobs", t.jobs, "Parallel training processes")->check(CLI::PositiveNumber);

  EnsembleOptions e;
  auto* ens = app.add_subcommand("ensemble", "Combine the multi-task models");
  ens->add_option("--strategy", e.strategy, "avg, de or all");
  ens->add_option("--variant", e.variant, "frozen, nonfrozen or all");
  ens->add_option("--fold", e.fold, "Fold index or all");

  std::string format = "txt";
  auto* report = app.add_subcommand("report", "Results table and plots");
  report->add_option("--format", format, "txt or csv");

  int all_jobs = 1;
  auto* all = app.add_subcommand("all", "prepare, split, train, ensemble and report in sequence");
  all->add_option("--jobs", all_jobs, "Parallel training processes")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (split_folds) {
      if (*split_folds < 1) throw ConfigError("--folds must be >= 1");
      g.overrides.push_back("data.folds=" + std::to_string(*split_folds));
    }
    Pipeline pipeline(g);
    if (*prepare) pipeline.prepare();
    if (*split) pipeline.split();
    if (*train) pipeline.train(t);
    if (*ens) pipeline.ensemble(e);
    if (*report) pipeline.report(format);
    if (*all) {
      pipeline.prepare();
      pipeline.split();
      TrainOptions every;
      every.jobs = all_jobs;
      pipeline.train(every);
      pipeline.ensemble(EnsembleOptions{});
      pipeline.report("txt");
    }
    return 0;
  } catch (const ConfigError& err) {
    std::cerr << "crowdmt: configuration error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "crowdmt: error: " << err.what() << "\n";
    return 1;
  }
}
