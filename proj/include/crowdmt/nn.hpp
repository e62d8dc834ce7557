#pragma once

// Minimal dense/convolutional building blocks with manual backpropagation.
// Layers keep the activations of their last caching forward pass, so a
// backward call must follow the forward call for the same sample.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace crowdmt::nn {

// Channel-major activations (C x H x W). Dense layers use h = w = 1.
struct Tensor {
  int c{0}, h{1}, w{1};
  std::vector<double> data;

  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0)
      : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, fill) {}
  std::size_t size() const { return data.size(); }
};

struct Parameter {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable{true};

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  // Read-only evaluation; safe to call concurrently.
  virtual Tensor infer(const Tensor& x) const = 0;
  // Evaluation that keeps what backward needs.
  virtual Tensor forward(const Tensor& x) = 0;
  // Accumulates parameter gradients and returns d(loss)/d(input) unless
  // `need_input_grad` is false, in which case an empty tensor is returned.
  virtual Tensor backward(const Tensor& grad_out, bool need_input_grad) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual std::vector<const Parameter*> parameters() const { return {}; }
};

// 3x3 convolution, stride 1, zero "same" padding.
class Conv3x3 : public Layer {
 public:
  Conv3x3(int in_channels, int out_channels, std::string name);
  void init_glorot(std::mt19937_64& rng);

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const override { return {&weight_, &bias_}; }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_, out_;
  Parameter weight_;  // out x (in * 9), row-major
  Parameter bias_;
  Tensor input_;
};

class Relu : public Layer {
 public:
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;

 private:
  Tensor output_;
};

class Sigmoid : public Layer {
 public:
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;

 private:
  Tensor output_;
};

// 2x2 max pooling, stride 2, floor on odd sizes.
class MaxPool2 : public Layer {
 public:
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;

 private:
  int in_c_{0}, in_h_{0}, in_w_{0};
  std::vector<std::uint32_t> argmax_;
};

class Dense : public Layer {
 public:
  Dense(int in_features, int out_features, std::string name);
  void init_glorot(std::mt19937_64& rng);

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  std::vector<const Parameter*> parameters() const override { return {&weight_, &bias_}; }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  Parameter weight_;  // out x in, row-major
  Parameter bias_;
  Tensor input_;
};

// Ordered chain of layers.
class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(const Tensor& x);
  Tensor infer(const Tensor& x) const;
  // Backward through every layer; the first layer's input gradient is
  // skipped unless requested.
  Tensor backward(const Tensor& grad_out, bool need_input_grad);
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace crowdmt::nn
