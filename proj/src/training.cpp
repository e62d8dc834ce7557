#include "crowdmt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "crowdmt/errors.hpp"
#include "crowdmt/losses.hpp"
#include "csv_util.hpp"

namespace crowdmt {

void TrainingConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

void RmsProp::step(const std::vector<nn::Parameter*>& params) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    auto& ms = mean_square_[p];
    if (ms.empty()) ms.assign(p->value.size(), 0.0);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      ms[i] = rho_ * ms[i] + (1.0 - rho_) * g * g;
      p->value[i] -= lr_ * g / (std::sqrt(ms[i]) + eps_);
    }
  }
}

std::string arm_name(Arm arm) {
  switch (arm) {
    case Arm::baseline: return "baseline";
    case Arm::A: return "A";
    case Arm::B: return "B";
    case Arm::C: return "C";
  }
  return "?";
}

std::optional<Arm> parse_arm(std::string_view s) {
  if (s == "baseline") return Arm::baseline;
  if (s == "A" || s == "asymmetry") return Arm::A;
  if (s == "B" || s == "border") return Arm::B;
  if (s == "C" || s == "color") return Arm::C;
  return std::nullopt;
}

ModelConfig model_config_for(Arm arm, Variant variant, const ModelConfig& base) {
  ModelConfig cfg = base;
  if (arm == Arm::baseline) {
    cfg.kind = ModelKind::baseline;
    cfg.auxiliary_feature.reset();
  } else {
    cfg.kind = ModelKind::multitask;
    cfg.auxiliary_feature = arm == Arm::A ? Feature::A : arm == Arm::B ? Feature::B : Feature::C;
  }
  cfg.encoder.trainable = variant == Variant::nonfrozen;
  return cfg;
}

Image ManifestImageSource::load(const std::string& lesion_id) const {
  if (auto it = cache_.find(lesion_id); it != cache_.end()) return it->second;
  Image img = read_image(manifest_.at(lesion_id).image_path);
  const std::size_t bytes = img.pixels.size() * sizeof(float);
  if (used_ + bytes <= budget_) {
    used_ += bytes;
    cache_.emplace(lesion_id, img);
  }
  return img;
}

Image InMemoryImageSource::load(const std::string& lesion_id) const {
  auto it = images_.find(lesion_id);
  if (it == images_.end()) throw ValidationError("no image for lesion '" + lesion_id + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

double compute_gradients(Model& model, std::span<const BatchExample> batch, const ClassWeights& weights) {
  model.zero_grad();
  const bool frozen = !model.encoder_trainable();
  const bool mt = model.multitask();

  LossBatch lb;
  lb.class_weights = weights;
  std::vector<nn::Tensor> features;
  for (const auto& ex : batch) {
    SampleOutput out;
    if (frozen) {
      features.push_back(model.encode(ex.image));
      out = model.forward_from_features(features.back());
    } else {
      out = model.infer(ex.image);
    }
    lb.y_true.push_back(ex.label);
    lb.p_pred.push_back(out.probability);
    if (mt) {
      lb.aux_true.push_back(ex.aux_target);
      lb.aux_pred.push_back(out.regression);
      lb.aux_mask.push_back(ex.aux_mask);
    }
  }
  const double loss = combined_loss(lb);
  const LossGradients grads = combined_loss_gradients(lb);

  // Per-sample gradients depend only on the sample's own outputs and on
  // batch-level constants, so each sample is re-run and back-propagated on
  // its own.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (frozen) {
      model.forward_from_features(features[i]);
    } else {
      model.forward(batch[i].image);
    }
    model.backward(grads.d_probability[i], mt ? grads.d_auxiliary[i] : 0.0);
  }
  return loss;
}

double train_step(Model& model, RmsProp& optimizer, std::span<const BatchExample> batch, const ClassWeights& weights) {
  const double loss = compute_gradients(model, batch, weights);
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss");
  optimizer.step(model.parameters());
  return loss;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace {

BatchExample make_example(const std::string& id, Image image, const TrainingData& data, const Model& model) {
  BatchExample ex;
  ex.image = std::move(image);
  ex.label = data.manifest->at(id).label;
  if (model.multitask()) {
    const Feature f = *model.config().auxiliary_feature;
    if (auto idx = data.features->find(id)) {
      ex.aux_mask = data.features->available(f, *idx) ? 1 : 0;
      ex.aux_target = ex.aux_mask ? data.features->value(f, *idx) : 0.0;
    }
  }
  return ex;
}

std::vector<BatchExample> load_plain(const std::vector<std::string>& ids, const TrainingData& data,
                                     const Model& model) {
  std::vector<BatchExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(make_example(id, preprocess(data.images->load(id), data.augmentation), data, model));
  return out;
}

double evaluate_loss(const Model& model, const std::vector<BatchExample>& examples, const ClassWeights& weights) {
  LossBatch lb;
  lb.class_weights = weights;
  for (const auto& ex : examples) {
    const SampleOutput out = model.infer(ex.image);
    lb.y_true.push_back(ex.label);
    lb.p_pred.push_back(out.probability);
    if (model.multitask()) {
      lb.aux_true.push_back(ex.aux_target);
      lb.aux_pred.push_back(out.regression);
      lb.aux_mask.push_back(ex.aux_mask);
    }
  }
  return combined_loss(lb);
}

SubsetPredictions predict_subset(const Model& model, const std::vector<std::string>& ids,
                                 const std::vector<BatchExample>& examples) {
  SubsetPredictions out;
  out.lesion_ids = ids;
  std::vector<Image> images;
  images.reserve(examples.size());
  for (const auto& ex : examples) {
    images.push_back(ex.image);
    out.labels.push_back(ex.label);
  }
  out.probabilities = model.predict(images).classification;
  return out;
}

void check_fold(const FoldSplit& fold, const DatasetManifest& manifest) {
  for (const auto* ids : {&fold.train_ids, &fold.val_ids, &fold.test_ids}) {
    for (const auto& id : *ids) {
      if (!manifest.contains(id)) throw ValidationError("fold references unknown lesion '" + id + "'");
    }
  }
  std::vector<std::string> all = fold.train_ids;
  all.insert(all.end(), fold.val_ids.begin(), fold.val_ids.end());
  all.insert(all.end(), fold.test_ids.begin(), fold.test_ids.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw ValidationError("fold " + std::to_string(fold.fold_index) + " subsets overlap");
  }
  if (fold.train_ids.empty() || fold.val_ids.empty() || fold.test_ids.empty()) {
    throw ValidationError("fold " + std::to_string(fold.fold_index) + " has an empty subset");
  }
}

}  // namespace

RunRecord train_one(Model& model, const FoldSplit& fold, const TrainingData& data, const TrainingConfig& cfg) {
  cfg.validate();
  if (!data.manifest || !data.images) throw ValidationError("training data needs a manifest and an image source");
  if (model.multitask() && !data.features) {
    throw ValidationError("multi-task training needs the aggregated feature table");
  }
  check_fold(fold, *data.manifest);
  data.augmentation.validate();

  RunRecord rec;
  rec.model = model.config();
  rec.model_name = model.multitask() ? std::string(1, feature_letter(*model.config().auxiliary_feature)) : "baseline";
  rec.auxiliary_feature = model.config().auxiliary_feature;
  rec.frozen = !model.encoder_trainable();
  rec.fold_index = fold.fold_index;
  rec.training = cfg;
  rec.encoder_checksum_before = model.encoder_checksum();

  if (cfg.use_class_weights) {
    std::vector<int> labels;
    if (cfg.global_class_weights) {
      labels = data.manifest->labels();
    } else {
      for (const auto& id : fold.train_ids) labels.push_back(data.manifest->at(id).label);
    }
    rec.class_weights = compute_class_weights(labels);
  }

  const std::vector<BatchExample> val = load_plain(fold.val_ids, data, model);
  std::mt19937_64 rng(cfg.seed);
  RmsProp optimizer(cfg.learning_rate, cfg.rho, cfg.epsilon);
  std::vector<std::string> order = fold.train_ids;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<BatchExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(make_example(order[i], augment(data.images->load(order[i]), data.augmentation, rng), data, model));
      }
      const double loss = compute_gradients(model, batch, rec.class_weights);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(batches + 1) + " (" + rec.model_name + ", fold " +
                            std::to_string(fold.fold_index) + ")");
      }
      optimizer.step(model.parameters());
      loss_sum += loss;
      ++batches;
      ++rec.steps;
    }
    rec.train_loss.push_back(loss_sum / static_cast<double>(batches));
    rec.val_loss.push_back(evaluate_loss(model, val, rec.class_weights));
  }

  rec.validation = predict_subset(model, fold.val_ids, val);
  rec.test = predict_subset(model, fold.test_ids, load_plain(fold.test_ids, data, model));
  rec.encoder_checksum_after = model.encoder_checksum();
  return rec;
}

RunRecord train_one(const ModelConfig& config, const FoldSplit& fold, const TrainingData& data,
                    const TrainingConfig& cfg) {
  Model model(config, cfg.seed);
  return train_one(model, fold, data, cfg);
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

PredictionMatrix build_prediction_matrix(const std::vector<RunRecord>& runs, int fold, Variant variant,
                                         Subset subset) {
  PredictionMatrix pm;
  for (Feature f : kFeatures) {
    const std::string name(1, feature_letter(f));
    auto it = std::find_if(runs.begin(), runs.end(), [&](const RunRecord& r) {
      return r.fold_index == fold && r.variant() == variant && r.model_name == name;
    });
    if (it == runs.end()) {
      throw ValidationError("missing multi-task run " + name + " (" + std::string(variant_name(variant)) +
                            ", fold " + std::to_string(fold) + ")");
    }
    const SubsetPredictions& p = subset == Subset::test ? it->test : it->validation;
    if (pm.lesion_ids.empty()) {
      pm.lesion_ids = p.lesion_ids;
      pm.labels = p.labels;
    } else if (pm.lesion_ids != p.lesion_ids) {
      throw ValidationError("multi-task runs disagree on lesion order for fold " + std::to_string(fold));
    }
    pm.add_column(name, p.probabilities);
  }
  pm.validate();
  return pm;
}

CrossValidationResult run_cross_validation(const ExperimentPlan& plan, const std::vector<FoldSplit>& folds,
                                           const TrainingData& data, const TrainingConfig& cfg) {
  if (folds.empty()) throw ValidationError("no fold splits available; run the split step first");
  const bool needs_features =
      std::any_of(plan.arms.begin(), plan.arms.end(), [](Arm a) { return a != Arm::baseline; });
  if (needs_features && !data.features) {
    throw ValidationError("aggregated feature table missing; run the prepare step first");
  }
  CrossValidationResult result;
  for (const auto& fold : folds) {
    for (Variant variant : plan.variants) {
      for (Arm arm : plan.arms) {
        TrainingConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(fold.fold_index);
        result.runs.push_back(train_one(model_config_for(arm, variant, plan.base_model), fold, data, run_cfg));
      }
      const bool all_mt = std::all_of(kFeatures.begin(), kFeatures.end(), [&](Feature f) {
        return std::find(plan.arms.begin(), plan.arms.end(),
                         f == Feature::A ? Arm::A : f == Feature::B ? Arm::B : Arm::C) != plan.arms.end();
      });
      if (all_mt) {
        result.test_matrices[{variant, fold.fold_index}] =
            build_prediction_matrix(result.runs, fold.fold_index, variant, Subset::test);
        result.validation_matrices[{variant, fold.fold_index}] =
            build_prediction_matrix(result.runs, fold.fold_index, variant, Subset::validation);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_predictions_csv(const std::filesystem::path& path, int fold, const std::string& model, Variant variant,
                           const SubsetPredictions& predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "lesion_id,fold,model,variant,probability,label\n";
  for (std::size_t i = 0; i < predictions.lesion_ids.size(); ++i) {
    out << predictions.lesion_ids[i] << ',' << fold << ',' << model << ',' << variant_name(variant) << ','
        << detail::format_double(predictions.probabilities[i]) << ',' << predictions.labels[i] << '\n';
  }
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_line(in, line, line_no) ||
      detail::trim(line) != "lesion_id,fold,model,variant,probability,label") {
    throw ParseError("bad predictions header in " + path.string(), line_no);
  }
  std::vector<PredictionRow> rows;
  while (detail::next_line(in, line, line_no)) {
    auto cols = detail::split_csv(line);
    if (cols.size() != 6) throw ParseError("expected 6 columns", line_no);
    PredictionRow r;
    r.lesion_id = std::string(cols[0]);
    auto fold = detail::parse_int(cols[1]);
    auto p = detail::parse_double(cols[4]);
    auto y = detail::parse_int(cols[5]);
    if (!fold || !p || !y) throw ParseError("bad numeric field", line_no);
    r.fold = static_cast<int>(*fold);
    r.model = std::string(cols[2]);
    r.variant = parse_variant(cols[3]);
    r.probability = *p;
    r.label = static_cast<int>(*y);
    rows.push_back(std::move(r));
  }
  return rows;
}

SubsetPredictions to_subset_predictions(const std::vector<PredictionRow>& rows) {
  SubsetPredictions s;
  for (const auto& r : rows) {
    s.lesion_ids.push_back(r.lesion_id);
    s.probabilities.push_back(r.probability);
    s.labels.push_back(r.label);
  }
  return s;
}

std::string run_record_to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model_name;
  j["auxiliary_feature"] = r.auxiliary_feature ? nlohmann::ordered_json(std::string(1, feature_letter(*r.auxiliary_feature)))
                                               : nlohmann::ordered_json(nullptr);
  j["variant"] = variant_name(r.variant());
  j["frozen"] = r.frozen;
  j["fold"] = r.fold_index;
  j["config"] = {
      {"epochs", r.training.epochs},
      {"batch_size", r.training.batch_size},
      {"optimizer", "rmsprop"},
      {"learning_rate", r.training.learning_rate},
      {"rho", r.training.rho},
      {"epsilon", r.training.epsilon},
      {"seed", r.training.seed},
      {"use_class_weights", r.training.use_class_weights},
      {"global_class_weights", r.training.global_class_weights},
      {"encoder", encoder_name(r.model.encoder.name)},
      {"input_size", {r.model.encoder.input_height, r.model.encoder.input_width, 3}},
      {"hidden_units", r.model.hidden_units},
  };
  j["class_weights"] = {{"benign", r.class_weights.benign}, {"malignant", r.class_weights.malignant}};
  j["steps"] = r.steps;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(r.encoder_checksum_before));
  j["encoder_checksum_before"] = buf;
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(r.encoder_checksum_after));
  j["encoder_checksum_after"] = buf;
  j["test_predictions"] = "predictions.csv";
  j["val_predictions"] = "val_predictions.csv";
  return j.dump(1) + "\n";
}

}  // namespace crowdmt
