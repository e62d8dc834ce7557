#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdmt/crowd_annotations.hpp"
#include "crowdmt/image.hpp"
#include "crowdmt/nn.hpp"

namespace crowdmt {

enum class EncoderName : std::uint8_t { vgg16_pretrained, tiny_test };

std::string_view encoder_name(EncoderName e);
// Throws ConfigError on an unknown name.
EncoderName parse_encoder_name(std::string_view s);

struct EncoderSpec {
  EncoderName name{EncoderName::tiny_test};
  bool trainable{true};
  int input_height{384};
  int input_width{384};
  // Raw little-endian float32 VGG16 convolution weights; required for
  // vgg16_pretrained. Layout per conv layer: kernel[out][in][3][3], bias[out].
  std::filesystem::path weights_path;

  // Channel widths per conv block; each block ends in a 2x2 max pool.
  std::vector<std::vector<int>> blocks() const;
  // Flattened encoder output size for the configured input.
  int feature_dim() const;
};

enum class ModelKind : std::uint8_t { baseline, multitask };

struct ModelConfig {
  ModelKind kind{ModelKind::baseline};
  std::optional<Feature> auxiliary_feature;
  int hidden_units{256};
  EncoderSpec encoder;

  void validate() const;
};

struct ModelOutputs {
  std::vector<double> classification;
  std::optional<std::vector<double>> regression;
};

struct SampleOutput {
  double probability{0.5};
  double regression{0.0};  // 0 for baseline models
};

// Encoder -> flatten -> dense(hidden, sigmoid) -> dense(1, sigmoid)
// [-> dense(1, linear) regression head for multi-task models, sharing the
// hidden layer].
class Model {
 public:
  // Builds and initializes the network. vgg16_pretrained loads its
  // convolution weights from encoder.weights_path unless
  // `load_pretrained` is false (used when restoring a checkpoint).
  Model(ModelConfig config, std::uint64_t seed, bool load_pretrained = true);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  bool multitask() const { return config_.kind == ModelKind::multitask; }

  // Deterministic batch inference; classification scores are kept strictly
  // inside (0,1).
  ModelOutputs predict(std::span<const Image> images) const;
  SampleOutput infer(const Image& image) const;

  // Encoder features without caching.
  nn::Tensor encode(const Image& image) const;
  // Caching forward pass for a subsequent backward(). The encoder is cached
  // only when it is trainable.
  SampleOutput forward(const Image& image);
  // Caching forward pass over the heads only, from precomputed features.
  // Only valid for backward() when the encoder is frozen.
  SampleOutput forward_from_features(const nn::Tensor& features);
  // Accumulates gradients given d(loss)/d(probability) and
  // d(loss)/d(regression) for the last forward sample. Encoder gradients are
  // computed only when the encoder is trainable.
  void backward(double grad_probability, double grad_regression);

  void zero_grad();

  void set_encoder_trainable(bool trainable);
  bool encoder_trainable() const { return config_.encoder.trainable; }

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::vector<nn::Parameter*> encoder_parameters() { return encoder_.parameters(); }
  std::vector<const nn::Parameter*> encoder_parameters() const { return encoder_.parameters(); }
  std::vector<nn::Parameter*> head_parameters();
  std::size_t parameter_count() const;

  // FNV-1a over the bit patterns of every encoder parameter value.
  std::uint64_t encoder_checksum() const;

  // Checkpoint: `params.bin` plus a `model.json` sidecar with the config and
  // the trainability flag.
  void save(const std::filesystem::path& dir) const;
  static Model load(const std::filesystem::path& dir);

 private:
  nn::Tensor to_input(const Image& image) const;
  SampleOutput heads_forward(const nn::Tensor& features);
  void load_vgg16_weights(const std::filesystem::path& path);

  ModelConfig config_;
  nn::Sequential encoder_;
  nn::Sequential trunk_;
  nn::Sequential classifier_;
  nn::Sequential regressor_;
  bool encoder_cached_{false};
};

Model build_model(const ModelConfig& config, std::uint64_t seed);
void set_encoder_trainable(Model& model, bool trainable);

}  // namespace crowdmt
