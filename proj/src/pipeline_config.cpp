#include "crowdmt/pipeline_config.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "crowdmt/errors.hpp"
#include "csv_util.hpp"

namespace crowdmt {

namespace {

namespace pt = boost::property_tree;

std::string fmt(double v) { return detail::format_double(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double as_double(const std::string& key, const std::string& v) {
  auto d = detail::parse_double(v);
  if (!d) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

int as_int(const std::string& key, const std::string& v) {
  auto i = detail::parse_int(v);
  if (!i) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<int>(*i);
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  auto i = detail::parse_int(v);
  if (!i || *i < 0) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(*i);
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

// Every recognised key with its setter and getter.
struct Field {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
  bool hashed{true};
};

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
#define CROWDMT_FIELD(KEY, MEMBER, PARSE)                                            \
  t[KEY] = Field{[](PipelineConfig& c, const std::string& v) { c.MEMBER = PARSE(KEY, v); }, \
                 [](const PipelineConfig& c) { return fmt(c.MEMBER); }, true}
    CROWDMT_FIELD("data.folds", folds, as_int);
    CROWDMT_FIELD("data.train_fraction", fractions.train, as_double);
    CROWDMT_FIELD("data.val_fraction", fractions.val, as_double);
    CROWDMT_FIELD("data.test_fraction", fractions.test, as_double);
    CROWDMT_FIELD("augmentation.max_rotation_deg", augmentation.max_rotation_deg, as_double);
    CROWDMT_FIELD("augmentation.horizontal_flip", augmentation.horizontal_flip, as_bool);
    CROWDMT_FIELD("augmentation.vertical_flip", augmentation.vertical_flip, as_bool);
    CROWDMT_FIELD("augmentation.width_shift_frac", augmentation.width_shift_frac, as_double);
    CROWDMT_FIELD("augmentation.height_shift_frac", augmentation.height_shift_frac, as_double);
    CROWDMT_FIELD("augmentation.shear_deg", augmentation.shear_deg, as_double);
    CROWDMT_FIELD("augmentation.channel_shift_max", augmentation.channel_shift_max, as_double);
    CROWDMT_FIELD("augmentation.output_height", augmentation.output_height, as_int);
    CROWDMT_FIELD("augmentation.output_width", augmentation.output_width, as_int);
    CROWDMT_FIELD("model.hidden_units", model.hidden_units, as_int);
    CROWDMT_FIELD("training.epochs", training.epochs, as_int);
    CROWDMT_FIELD("training.batch_size", training.batch_size, as_int);
    CROWDMT_FIELD("training.learning_rate", training.learning_rate, as_double);
    CROWDMT_FIELD("training.rho", training.rho, as_double);
    CROWDMT_FIELD("training.epsilon", training.epsilon, as_double);
    CROWDMT_FIELD("training.use_class_weights", training.use_class_weights, as_bool);
    CROWDMT_FIELD("training.global_class_weights", training.global_class_weights, as_bool);
    CROWDMT_FIELD("ensemble.tolerance", de.tolerance, as_double);
    CROWDMT_FIELD("ensemble.max_iterations", de.max_iterations, as_int);
    CROWDMT_FIELD("ensemble.population_per_dim", de.population_per_dim, as_int);
    CROWDMT_FIELD("ensemble.mutation_min", de.mutation_min, as_double);
    CROWDMT_FIELD("ensemble.mutation_max", de.mutation_max, as_double);
    CROWDMT_FIELD("ensemble.crossover", de.crossover, as_double);
    CROWDMT_FIELD("synthetic.lesions", synthetic_data.lesions, as_int);
    CROWDMT_FIELD("synthetic.image_size", synthetic_data.image_size, as_int);
    CROWDMT_FIELD("synthetic.malignant_fraction", synthetic_data.malignant_fraction, as_double);
    CROWDMT_FIELD("synthetic.annotated_fraction", synthetic_data.annotated_fraction, as_double);
    CROWDMT_FIELD("synthetic.a_fraction", synthetic_data.feature_fraction[0], as_double);
    CROWDMT_FIELD("synthetic.b_fraction", synthetic_data.feature_fraction[1], as_double);
    CROWDMT_FIELD("synthetic.c_fraction", synthetic_data.feature_fraction[2], as_double);
    CROWDMT_FIELD("synthetic.annotator_groups", synthetic_data.annotator_groups, as_int);
    CROWDMT_FIELD("synthetic.class_shift", synthetic_data.class_shift, as_double);
    CROWDMT_FIELD("run.seed", seed, as_u64);
#undef CROWDMT_FIELD
    t["ensemble.optimize_on"] = Field{[](PipelineConfig& c, const std::string& v) {
                                        if (v != "val" && v != "test") {
                                          throw ConfigError("ensemble.optimize_on must be 'val' or 'test'");
                                        }
                                        c.optimize_on = v;
                                      },
                                      [](const PipelineConfig& c) { return c.optimize_on; }, true};
    t["model.encoder"] = Field{[](PipelineConfig& c, const std::string& v) { c.model.encoder.name = parse_encoder_name(v); },
                               [](const PipelineConfig& c) { return std::string(encoder_name(c.model.encoder.name)); },
                               true};
    t["model.encoder_weights"] = Field{[](PipelineConfig& c, const std::string& v) { c.model.encoder.weights_path = v; },
                                       [](const PipelineConfig& c) { return c.model.encoder.weights_path.string(); },
                                       true};
    t["paths.labels"] = Field{[](PipelineConfig& c, const std::string& v) { c.paths.labels = v; },
                              [](const PipelineConfig& c) { return c.paths.labels.string(); }, true};
    t["paths.annotations"] = Field{[](PipelineConfig& c, const std::string& v) { c.paths.annotations = v; },
                                   [](const PipelineConfig& c) { return c.paths.annotations.string(); }, true};
    t["paths.images"] = Field{[](PipelineConfig& c, const std::string& v) { c.paths.images = v; },
                              [](const PipelineConfig& c) { return c.paths.images.string(); }, true};
    t["paths.output"] = Field{[](PipelineConfig& c, const std::string& v) { c.paths.output = v; },
                              [](const PipelineConfig& c) { return c.paths.output.string(); }, false};
    return t;
  }();
  return table;
}

void set_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.set(cfg, std::string(detail::trim(value)));
}

void apply_synthetic_preset(PipelineConfig& c) {
  c.synthetic = true;
  c.folds = 2;
  c.model.encoder.name = EncoderName::tiny_test;
  c.augmentation.output_height = 64;
  c.augmentation.output_width = 64;
  c.training.epochs = 2;
  c.training.learning_rate = 1e-3;
}

}  // namespace

void PipelineConfig::validate(bool check_paths) const {
  if (folds < 1) throw ConfigError("data.folds must be >= 1");
  if (!(fractions.train > 0 && fractions.val > 0 && fractions.test > 0)) {
    throw ConfigError("data fractions must all be positive");
  }
  if (std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("data fractions must sum to 1");
  }
  augmentation.validate();
  training.validate();
  de.validate(3);
  if (synthetic) synthetic_data.validate();
  ModelConfig probe = model;
  probe.encoder.input_height = augmentation.output_height;
  probe.encoder.input_width = augmentation.output_width;
  probe.validate();
  if (!check_paths) return;
  auto require = [](const std::filesystem::path& p, const char* key) {
    if (p.empty()) throw ConfigError(std::string(key) + " is not set");
    if (!std::filesystem::exists(p)) throw ConfigError(std::string(key) + " not found: " + p.string());
  };
  require(paths.labels, "paths.labels");
  require(paths.annotations, "paths.annotations");
  require(paths.images, "paths.images");
  if (model.encoder.name == EncoderName::vgg16_pretrained) require(model.encoder.weights_path, "model.encoder_weights");
}

std::string PipelineConfig::canonical() const {
  std::ostringstream out;
  out << "synthetic=" << (synthetic ? "true" : "false") << '\n';
  for (const auto& [key, field] : fields()) {
    if (!field.hashed) continue;
    if (!synthetic && key.rfind("synthetic.", 0) == 0) continue;
    std::string value = field.get(*this);
    if (synthetic && key.rfind("paths.", 0) == 0) {
      const std::string generated = synthetic_dir().string();
      if (value.rfind(generated, 0) == 0) value = "<synthetic>" + value.substr(generated.size());
    }
    out << key << '=' << value << '\n';
  }
  return out.str();
}

std::string PipelineConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path PipelineConfig::artifact_root() const { return paths.output / hash(); }

std::filesystem::path PipelineConfig::synthetic_dir() const {
  // Keyed by the generator settings only, so every pipeline configuration
  // sharing them reuses one copy.
  std::ostringstream key;
  for (const auto& [k, field] : fields()) {
    if (k.rfind("synthetic.", 0) == 0) key << k << '=' << field.get(*this) << '\n';
  }
  key << "run.seed=" << seed << '\n';
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : key.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return paths.output / (std::string("synthetic-data-") + buf);
}

PipelineConfig load_pipeline_config(const std::filesystem::path& file, const std::vector<std::string>& overrides,
                                    bool synthetic) {
  PipelineConfig cfg;
  cfg.model.encoder.name = EncoderName::vgg16_pretrained;
  if (synthetic) apply_synthetic_preset(cfg);

  if (!file.empty()) {
    if (!std::filesystem::exists(file)) throw ConfigError("config file not found: " + file.string());
    pt::ptree tree;
    try {
      pt::read_ini(file.string(), tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("config key '" + section + "' must live inside a [section]");
      for (const auto& [key, value] : body) set_key(cfg, section + "." + key, value.data());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form section.key=value");
    set_key(cfg, std::string(detail::trim(o.substr(0, eq))), o.substr(eq + 1));
  }

  cfg.synthetic_data.seed = cfg.seed;
  cfg.model.encoder.input_height = cfg.augmentation.output_height;
  cfg.model.encoder.input_width = cfg.augmentation.output_width;
  cfg.de.seed = cfg.seed;
  cfg.training.seed = cfg.seed;
  if (cfg.synthetic) {
    const auto dir = cfg.synthetic_dir();
    if (cfg.paths.labels.empty()) cfg.paths.labels = dir / "labels.csv";
    if (cfg.paths.annotations.empty()) cfg.paths.annotations = dir / "annotations.csv";
    if (cfg.paths.images.empty()) cfg.paths.images = dir / "images";
  }
  return cfg;
}

}  // namespace crowdmt
