#include "crowdmt/nn.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace crowdmt::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void glorot_uniform(std::vector<double>& w, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w) v = dist(rng);
}

// (C*9) x (H*W) patch matrix for a 3x3 same-padded convolution.
RowMatrix im2col(const Tensor& x) {
  const int hw = x.h * x.w;
  RowMatrix col = RowMatrix::Zero(static_cast<Eigen::Index>(x.c) * 9, hw);
  for (int ci = 0; ci < x.c; ++ci) {
    const double* src = x.data.data() + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < x.h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= x.h) continue;
          for (int xx = 0; xx < x.w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= x.w) continue;
            dst[y * x.w + xx] = src[sy * x.w + sx];
          }
        }
      }
    }
  }
  return col;
}

Tensor col2im(const RowMatrix& col, int c, int h, int w) {
  Tensor out(c, h, w);
  const int hw = h * w;
  for (int ci = 0; ci < c; ++ci) {
    double* dst = out.data.data() + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = col.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= w) continue;
            dst[sy * w + sx] += src[y * w + xx];
          }
        }
      }
    }
  }
  return out;
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------

Conv3x3::Conv3x3(int in_channels, int out_channels, std::string name) : in_(in_channels), out_(out_channels) {
  weight_.name = name + ".kernel";
  weight_.value.assign(static_cast<std::size_t>(out_) * in_ * 9, 0.0);
  weight_.grad.assign(weight_.value.size(), 0.0);
  bias_.name = name + ".bias";
  bias_.value.assign(out_, 0.0);
  bias_.grad.assign(out_, 0.0);
}

void Conv3x3::init_glorot(std::mt19937_64& rng) {
  glorot_uniform(weight_.value, in_ * 9.0, out_ * 9.0, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Conv3x3::infer(const Tensor& x) const {
  if (x.c != in_) throw std::invalid_argument("Conv3x3: channel mismatch");
  const RowMatrix col = im2col(x);
  Tensor y(out_, x.h, x.w);
  MatrixMap out(y.data.data(), out_, static_cast<Eigen::Index>(x.h) * x.w);
  ConstMatrixMap w(weight_.value.data(), out_, static_cast<Eigen::Index>(in_) * 9);
  out.noalias() = w * col;
  for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[o];
  return y;
}

Tensor Conv3x3::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Conv3x3::backward(const Tensor& grad_out, bool need_input_grad) {
  const auto hw = static_cast<Eigen::Index>(input_.h) * input_.w;
  ConstMatrixMap g(grad_out.data.data(), out_, hw);
  const RowMatrix col = im2col(input_);
  MatrixMap gw(weight_.grad.data(), out_, static_cast<Eigen::Index>(in_) * 9);
  gw.noalias() += g * col.transpose();
  for (int o = 0; o < out_; ++o) bias_.grad[o] += g.row(o).sum();
  if (!need_input_grad) return {};
  ConstMatrixMap w(weight_.value.data(), out_, static_cast<Eigen::Index>(in_) * 9);
  const RowMatrix gcol = w.transpose() * g;
  return col2im(gcol, input_.c, input_.h, input_.w);
}

// ---------------------------------------------------------------------------

Tensor Relu::infer(const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor Relu::forward(const Tensor& x) {
  output_ = infer(x);
  return output_;
}

Tensor Relu::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(output_.data[i] > 0.0)) g.data[i] = 0.0;
  }
  return g;
}

Tensor Sigmoid::infer(const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.data) v = stable_sigmoid(v);
  return y;
}

Tensor Sigmoid::forward(const Tensor& x) {
  output_ = infer(x);
  return output_;
}

Tensor Sigmoid::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= output_.data[i] * (1.0 - output_.data[i]);
  return g;
}

// ---------------------------------------------------------------------------

Tensor MaxPool2::infer(const Tensor& x) const {
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.c, oh, ow);
  for (int c = 0; c < x.c; ++c) {
    const double* src = x.data.data() + static_cast<std::size_t>(c) * x.h * x.w;
    double* dst = y.data.data() + static_cast<std::size_t>(c) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const double* p = src + (2 * i) * x.w + 2 * j;
        dst[i * ow + j] = std::max(std::max(p[0], p[1]), std::max(p[x.w], p[x.w + 1]));
      }
    }
  }
  return y;
}

Tensor MaxPool2::forward(const Tensor& x) {
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.c, oh, ow);
  argmax_.assign(y.size(), 0);
  for (int c = 0; c < x.c; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * x.h * x.w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * x.w + 2 * j;
        for (std::size_t cand : {best + 1, best + x.w, best + x.w + 1}) {
          if (x.data[cand] > x.data[best]) best = cand;
        }
        const std::size_t o = (static_cast<std::size_t>(c) * oh + i) * ow + j;
        y.data[o] = x.data[best];
        argmax_[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& grad_out, bool need_input_grad) {
  if (!need_input_grad) return {};
  Tensor g(in_c_, in_h_, in_w_);
  for (std::size_t o = 0; o < grad_out.data.size(); ++o) g.data[argmax_[o]] += grad_out.data[o];
  return g;
}

// ---------------------------------------------------------------------------

Dense::Dense(int in_features, int out_features, std::string name) : in_(in_features), out_(out_features) {
  weight_.name = name + ".kernel";
  weight_.value.assign(static_cast<std::size_t>(out_) * in_, 0.0);
  weight_.grad.assign(weight_.value.size(), 0.0);
  bias_.name = name + ".bias";
  bias_.value.assign(out_, 0.0);
  bias_.grad.assign(out_, 0.0);
}

void Dense::init_glorot(std::mt19937_64& rng) {
  glorot_uniform(weight_.value, in_, out_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Dense::infer(const Tensor& x) const {
  if (static_cast<int>(x.size()) != in_) throw std::invalid_argument("Dense: input size mismatch");
  Tensor y(out_, 1, 1);
  Eigen::Map<Eigen::VectorXd> out(y.data.data(), out_);
  ConstMatrixMap w(weight_.value.data(), out_, in_);
  Eigen::Map<const Eigen::VectorXd> in(x.data.data(), in_);
  Eigen::Map<const Eigen::VectorXd> b(bias_.value.data(), out_);
  out.noalias() = w * in + b;
  return y;
}

Tensor Dense::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Dense::backward(const Tensor& grad_out, bool need_input_grad) {
  Eigen::Map<const Eigen::VectorXd> g(grad_out.data.data(), out_);
  Eigen::Map<const Eigen::VectorXd> in(input_.data.data(), in_);
  MatrixMap gw(weight_.grad.data(), out_, in_);
  gw.noalias() += g * in.transpose();
  Eigen::Map<Eigen::VectorXd>(bias_.grad.data(), out_) += g;
  if (!need_input_grad) return {};
  Tensor gx(input_.c, input_.h, input_.w);
  ConstMatrixMap w(weight_.value.data(), out_, in_);
  Eigen::Map<Eigen::VectorXd>(gx.data.data(), in_).noalias() = w.transpose() * g;
  return gx;
}

// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x) {
  Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur);
  return cur;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor cur = x;
  for (const auto& layer : layers_) cur = layer->infer(cur);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, bool need_input_grad) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, i > 0 || need_input_grad);
  }
  return g;
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> Sequential::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& layer : layers_) {
    for (const auto* p : static_cast<const Layer&>(*layer).parameters()) out.push_back(p);
  }
  return out;
}

}  // namespace crowdmt::nn
