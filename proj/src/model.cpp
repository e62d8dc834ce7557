#include "crowdmt/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "crowdmt/errors.hpp"

namespace crowdmt {

std::string_view encoder_name(EncoderName e) {
  return e == EncoderName::vgg16_pretrained ? "vgg16_pretrained" : "tiny_test";
}

EncoderName parse_encoder_name(std::string_view s) {
  if (s == "vgg16_pretrained") return EncoderName::vgg16_pretrained;
  if (s == "tiny_test") return EncoderName::tiny_test;
  throw ConfigError("unknown encoder '" + std::string(s) + "' (expected vgg16_pretrained or tiny_test)");
}

std::vector<std::vector<int>> EncoderSpec::blocks() const {
  if (name == EncoderName::vgg16_pretrained) {
    return {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
  }
  return {{8}, {16}, {16}};
}

int EncoderSpec::feature_dim() const {
  int h = input_height, w = input_width, c = 3;
  for (const auto& block : blocks()) {
    c = block.back();
    h /= 2;
    w /= 2;
  }
  return c * h * w;
}

void ModelConfig::validate() const {
  if (kind == ModelKind::baseline && auxiliary_feature) {
    throw ConfigError("baseline model must not have an auxiliary feature");
  }
  if (kind == ModelKind::multitask && !auxiliary_feature) {
    throw ConfigError("multi-task model requires an auxiliary feature");
  }
  if (hidden_units <= 0) throw ConfigError("hidden_units must be positive");
  if (encoder.feature_dim() <= 0) throw ConfigError("encoder input size too small for its pooling stages");
}

Model::Model(ModelConfig config, std::uint64_t seed, bool load_pretrained) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 encoder_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 head_rng(seed);

  int channels = 3;
  int layer = 0;
  int block_index = 0;
  for (const auto& block : config_.encoder.blocks()) {
    ++block_index;
    int conv_index = 0;
    for (int width : block) {
      auto conv = std::make_unique<nn::Conv3x3>(
          channels, width, "block" + std::to_string(block_index) + "_conv" + std::to_string(++conv_index));
      conv->init_glorot(encoder_rng);
      encoder_.add(std::move(conv));
      encoder_.add(std::make_unique<nn::Relu>());
      channels = width;
      ++layer;
    }
    encoder_.add(std::make_unique<nn::MaxPool2>());
  }

  auto trunk = std::make_unique<nn::Dense>(config_.encoder.feature_dim(), config_.hidden_units, "trunk");
  trunk->init_glorot(head_rng);
  trunk_.add(std::move(trunk));
  trunk_.add(std::make_unique<nn::Sigmoid>());

  auto cls = std::make_unique<nn::Dense>(config_.hidden_units, 1, "classification");
  cls->init_glorot(head_rng);
  classifier_.add(std::move(cls));
  classifier_.add(std::make_unique<nn::Sigmoid>());

  if (multitask()) {
    auto reg = std::make_unique<nn::Dense>(config_.hidden_units, 1, "regression");
    reg->init_glorot(head_rng);
    regressor_.add(std::move(reg));
  }

  if (config_.encoder.name == EncoderName::vgg16_pretrained && load_pretrained) {
    load_vgg16_weights(config_.encoder.weights_path);
  }
  set_encoder_trainable(config_.encoder.trainable);
}

void Model::load_vgg16_weights(const std::filesystem::path& path) {
  if (path.empty()) throw ConfigError("vgg16_pretrained needs a weights file (model.encoder_weights)");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open VGG16 weights " + path.string());
  std::vector<float> buf;
  for (auto* p : encoder_.parameters()) {
    buf.resize(p->value.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw ValidationError("VGG16 weights file is truncated at " + p->name);
    std::copy(buf.begin(), buf.end(), p->value.begin());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("VGG16 weights file has trailing data");
}

nn::Tensor Model::to_input(const Image& image) const {
  if (image.channels != 3 || image.height != config_.encoder.input_height ||
      image.width != config_.encoder.input_width) {
    throw std::invalid_argument("model input must be " + std::to_string(config_.encoder.input_height) + "x" +
                                std::to_string(config_.encoder.input_width) + "x3, got " +
                                std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                                std::to_string(image.channels));
  }
  nn::Tensor t(3, image.height, image.width);
  const std::size_t hw = static_cast<std::size_t>(image.height) * image.width;
  const bool caffe = config_.encoder.name == EncoderName::vgg16_pretrained;
  // Caffe-style VGG input: BGR order, ImageNet channel means removed.
  static constexpr double kBgrMean[3] = {103.939, 116.779, 123.68};
  for (std::size_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = image.pixels[i * 3 + c];
      if (caffe) {
        const int bgr = 2 - c;
        t.data[bgr * hw + i] = v - kBgrMean[bgr];
      } else {
        t.data[c * hw + i] = v / 255.0;
      }
    }
  }
  return t;
}

nn::Tensor Model::encode(const Image& image) const { return encoder_.infer(to_input(image)); }

SampleOutput Model::infer(const Image& image) const {
  const nn::Tensor features = encode(image);
  const nn::Tensor hidden = trunk_.infer(features);
  SampleOutput out;
  out.probability = classifier_.infer(hidden).data[0];
  if (multitask()) out.regression = regressor_.infer(hidden).data[0];
  return out;
}

ModelOutputs Model::predict(std::span<const Image> images) const {
  constexpr double kEdge = 1e-12;
  ModelOutputs out;
  out.classification.reserve(images.size());
  if (multitask()) out.regression.emplace();
  for (const auto& image : images) {
    const SampleOutput s = infer(image);
    out.classification.push_back(std::clamp(s.probability, kEdge, 1.0 - kEdge));
    if (multitask()) out.regression->push_back(s.regression);
  }
  return out;
}

SampleOutput Model::heads_forward(const nn::Tensor& features) {
  const nn::Tensor hidden = trunk_.forward(features);
  SampleOutput out;
  out.probability = classifier_.forward(hidden).data[0];
  if (multitask()) out.regression = regressor_.forward(hidden).data[0];
  return out;
}

SampleOutput Model::forward(const Image& image) {
  if (encoder_trainable()) {
    encoder_cached_ = true;
    return heads_forward(encoder_.forward(to_input(image)));
  }
  encoder_cached_ = false;
  return heads_forward(encode(image));
}

SampleOutput Model::forward_from_features(const nn::Tensor& features) {
  encoder_cached_ = false;
  return heads_forward(features);
}

void Model::backward(double grad_probability, double grad_regression) {
  nn::Tensor g(1, 1, 1, grad_probability);
  nn::Tensor grad_hidden = classifier_.backward(g, true);
  if (multitask()) {
    nn::Tensor gr(1, 1, 1, grad_regression);
    const nn::Tensor extra = regressor_.backward(gr, true);
    for (std::size_t i = 0; i < grad_hidden.data.size(); ++i) grad_hidden.data[i] += extra.data[i];
  }
  const bool into_encoder = encoder_trainable();
  if (into_encoder && !encoder_cached_) {
    throw std::logic_error("backward into a trainable encoder needs a caching forward pass");
  }
  nn::Tensor grad_features = trunk_.backward(grad_hidden, into_encoder);
  if (into_encoder) encoder_.backward(grad_features, false);
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void Model::set_encoder_trainable(bool trainable) {
  config_.encoder.trainable = trainable;
  // The flag is applied to every parameter inside the encoder, not only to
  // the encoder as a whole.
  for (auto* p : encoder_.parameters()) p->trainable = trainable;
  if (!trainable) encoder_cached_ = false;
}

std::vector<nn::Parameter*> Model::head_parameters() {
  std::vector<nn::Parameter*> out = trunk_.parameters();
  for (auto* p : classifier_.parameters()) out.push_back(p);
  for (auto* p : regressor_.parameters()) out.push_back(p);
  return out;
}

std::vector<nn::Parameter*> Model::parameters() {
  std::vector<nn::Parameter*> out = encoder_.parameters();
  for (auto* p : head_parameters()) out.push_back(p);
  return out;
}

std::vector<const nn::Parameter*> Model::parameters() const {
  std::vector<const nn::Parameter*> out = encoder_.parameters();
  for (const auto* seq : {&trunk_, &classifier_, &regressor_}) {
    for (const auto* p : seq->parameters()) out.push_back(p);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

std::uint64_t Model::encoder_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : encoder_.parameters()) {
    for (double v : p->value) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void Model::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["kind"] = config_.kind == ModelKind::baseline ? "baseline" : "multitask";
  j["auxiliary_feature"] =
      config_.auxiliary_feature ? nlohmann::ordered_json(std::string(1, feature_letter(*config_.auxiliary_feature)))
                                : nlohmann::ordered_json(nullptr);
  j["hidden_units"] = config_.hidden_units;
  j["encoder"] = {{"name", encoder_name(config_.encoder.name)},
                  {"input_height", config_.encoder.input_height},
                  {"input_width", config_.encoder.input_width},
                  {"feature_dim", config_.encoder.feature_dim()}};
  j["encoder_trainable"] = config_.encoder.trainable;
  j["parameter_count"] = parameter_count();
  {
    std::ofstream meta(dir / "model.json", std::ios::binary);
    meta << j.dump(1) << "\n";
  }
  std::ofstream out(dir / "params.bin", std::ios::binary);
  for (const auto* p : parameters()) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + dir.string());
}

Model Model::load(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "model.json");
  if (!meta) throw ValidationError("checkpoint sidecar missing in " + dir.string());
  auto j = nlohmann::json::parse(meta);
  ModelConfig cfg;
  cfg.kind = j.at("kind").get<std::string>() == "baseline" ? ModelKind::baseline : ModelKind::multitask;
  if (!j.at("auxiliary_feature").is_null()) cfg.auxiliary_feature = parse_feature(j["auxiliary_feature"].get<std::string>());
  cfg.hidden_units = j.at("hidden_units").get<int>();
  cfg.encoder.name = parse_encoder_name(j.at("encoder").at("name").get<std::string>());
  cfg.encoder.input_height = j["encoder"].at("input_height").get<int>();
  cfg.encoder.input_width = j["encoder"].at("input_width").get<int>();
  cfg.encoder.trainable = j.at("encoder_trainable").get<bool>();
  Model model(cfg, 0, /*load_pretrained=*/false);

  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw ValidationError("checkpoint parameters missing in " + dir.string());
  for (auto* p : model.parameters()) {
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!in) throw ValidationError("checkpoint parameters truncated in " + dir.string());
  }
  return model;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

void set_encoder_trainable(Model& model, bool trainable) { model.set_encoder_trainable(trainable); }

}  // namespace crowdmt
