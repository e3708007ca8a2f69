#include "lssa/nn.hpp"

#include <cmath>

#include "lssa/error.hpp"

namespace lssa::nn {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Matrix lecun_normal(int rows, int cols, int fan_in, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

}  // namespace

Conv2d make_conv(int in_channels, int out_channels, int kernel, Rng& rng) {
  Conv2d conv;
  conv.in_channels = in_channels;
  conv.out_channels = out_channels;
  conv.kernel = kernel;
  const int fan_in = in_channels * kernel * kernel;
  conv.weight = lecun_normal(out_channels, fan_in, fan_in, rng);
  conv.bias = Matrix::Zero(1, out_channels);
  return conv;
}

Dense make_dense(int in_features, int out_features, Rng& rng) {
  Dense dense;
  dense.in_features = in_features;
  dense.out_features = out_features;
  dense.weight = lecun_normal(out_features, in_features, in_features, rng);
  dense.bias = Matrix::Zero(1, out_features);
  return dense;
}

FeatureMap Conv2d::forward(const FeatureMap& in, Matrix* scratch) const {
  require(in.features() == in_channels, ErrorCode::kShapeMismatch,
          "conv expects " + std::to_string(in_channels) + " channels, got " + std::to_string(in.features()));
  const int h = in.height;
  const int w = in.width;
  const int pad = kernel / 2;
  Matrix cols = Matrix::Zero(Eigen::Index(h) * w, Eigen::Index(in_channels) * kernel * kernel);
  for (int ci = 0; ci < in_channels; ++ci) {
    const double* src = in.values.col(ci).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* dst = cols.col((Eigen::Index(ci) * kernel + ky) * kernel + kx).data();
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          const double* s = src + (y + dy) * w + dx;
          double* d = dst + y * w;
          for (int x = x0; x < x1; ++x) d[x] = s[x];
        }
      }
    }
  }
  FeatureMap out;
  out.height = h;
  out.width = w;
  out.values.noalias() = cols * weight.transpose();
  out.values.rowwise() += bias.row(0);
  *scratch = std::move(cols);
  return out;
}

FeatureMap Conv2d::backward(const FeatureMap& in, const Matrix& scratch, const FeatureMap& grad_out,
                            Matrix* grad_weight, Matrix* grad_bias) const {
  if (grad_weight != nullptr) grad_weight->noalias() += grad_out.values.transpose() * scratch;
  if (grad_bias != nullptr) *grad_bias += grad_out.values.colwise().sum();
  const Matrix dcols = grad_out.values * weight;
  const int h = in.height;
  const int w = in.width;
  const int pad = kernel / 2;
  FeatureMap grad_in;
  grad_in.height = h;
  grad_in.width = w;
  grad_in.values = Matrix::Zero(Eigen::Index(h) * w, in_channels);
  for (int ci = 0; ci < in_channels; ++ci) {
    double* dst = grad_in.values.col(ci).data();
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* src = dcols.col((Eigen::Index(ci) * kernel + ky) * kernel + kx).data();
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          double* d = dst + (y + dy) * w + dx;
          const double* s = src + y * w;
          for (int x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
    }
  }
  return grad_in;
}

FeatureMap AvgPool2::forward(const FeatureMap& in) const {
  require(in.height % 2 == 0 && in.width % 2 == 0, ErrorCode::kShapeMismatch, "avgpool needs even dimensions");
  const int h = in.height / 2;
  const int w = in.width / 2;
  FeatureMap out;
  out.height = h;
  out.width = w;
  out.values.resize(Eigen::Index(h) * w, in.features());
  for (int c = 0; c < in.features(); ++c) {
    const double* s = in.values.col(c).data();
    double* d = out.values.col(c).data();
    for (int y = 0; y < h; ++y) {
      const double* r0 = s + (2 * y) * in.width;
      const double* r1 = r0 + in.width;
      for (int x = 0; x < w; ++x) {
        d[y * w + x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return out;
}

FeatureMap AvgPool2::backward(const FeatureMap& in, const FeatureMap& grad_out) const {
  FeatureMap grad_in;
  grad_in.height = in.height;
  grad_in.width = in.width;
  grad_in.values.resize(in.values.rows(), in.values.cols());
  const int w = grad_out.width;
  for (int c = 0; c < in.features(); ++c) {
    const double* s = grad_out.values.col(c).data();
    double* d = grad_in.values.col(c).data();
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) d[y * in.width + x] = 0.25 * s[(y / 2) * w + x / 2];
    }
  }
  return grad_in;
}

FeatureMap Silu::forward(const FeatureMap& in, Matrix* scratch) const {
  Matrix sigmoid = (1.0 + (-in.values.array()).exp()).inverse().matrix();
  FeatureMap out{(in.values.array() * sigmoid.array()).matrix(), in.height, in.width};
  *scratch = std::move(sigmoid);
  return out;
}

FeatureMap Silu::backward(const FeatureMap& in, const Matrix& scratch, const FeatureMap& grad_out) const {
  const auto s = scratch.array();
  const auto derivative = s * (1.0 + in.values.array() * (1.0 - s));
  return {(grad_out.values.array() * derivative).matrix(), in.height, in.width};
}

FeatureMap Flatten::forward(const FeatureMap& in) const {
  return {in.values.reshaped(1, in.values.size()), 1, 1};
}

FeatureMap Flatten::backward(const FeatureMap& in, const FeatureMap& grad_out) const {
  return {grad_out.values.reshaped(in.values.rows(), in.values.cols()), in.height, in.width};
}

FeatureMap Patchify::forward(const FeatureMap& in) const {
  require(in.height % patch == 0 && in.width % patch == 0, ErrorCode::kShapeMismatch,
          "image dimensions must be divisible by the patch size");
  const int ph = in.height / patch;
  const int pw = in.width / patch;
  const int pp = patch * patch;
  FeatureMap out;
  out.height = ph;
  out.width = pw;
  out.values.resize(Eigen::Index(ph) * pw, Eigen::Index(in.features()) * pp);
  for (int c = 0; c < in.features(); ++c) {
    for (int py = 0; py < ph; ++py) {
      for (int px = 0; px < pw; ++px) {
        for (int dy = 0; dy < patch; ++dy) {
          for (int dx = 0; dx < patch; ++dx) {
            out.values(py * pw + px, c * pp + dy * patch + dx) =
                in.values((py * patch + dy) * in.width + px * patch + dx, c);
          }
        }
      }
    }
  }
  return out;
}

FeatureMap Patchify::backward(const FeatureMap& in, const FeatureMap& grad_out) const {
  const int pw = in.width / patch;
  const int pp = patch * patch;
  FeatureMap grad_in;
  grad_in.height = in.height;
  grad_in.width = in.width;
  grad_in.values.resize(in.values.rows(), in.values.cols());
  for (int c = 0; c < in.features(); ++c) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        grad_in.values(y * in.width + x, c) =
            grad_out.values((y / patch) * pw + x / patch, c * pp + (y % patch) * patch + x % patch);
      }
    }
  }
  return grad_in;
}

FeatureMap Dense::forward(const FeatureMap& in) const {
  require(in.features() == in_features, ErrorCode::kShapeMismatch,
          "dense expects " + std::to_string(in_features) + " features, got " + std::to_string(in.features()));
  FeatureMap out;
  out.height = in.height;
  out.width = in.width;
  out.values.noalias() = in.values * weight.transpose();
  out.values.rowwise() += bias.row(0);
  return out;
}

FeatureMap Dense::backward(const FeatureMap& in, const FeatureMap& grad_out, Matrix* grad_weight,
                           Matrix* grad_bias) const {
  if (grad_weight != nullptr) grad_weight->noalias() += grad_out.values.transpose() * in.values;
  if (grad_bias != nullptr) *grad_bias += grad_out.values.colwise().sum();
  FeatureMap grad_in;
  grad_in.height = in.height;
  grad_in.width = in.width;
  grad_in.values.noalias() = grad_out.values * weight;
  return grad_in;
}

FeatureMap Sequential::forward(const FeatureMap& in) const {
  Tape tape;
  forward(in, tape);
  return std::move(tape.inputs.back());
}

void Sequential::forward(const FeatureMap& in, Tape& tape) const {
  tape.inputs.resize(layers_.size() + 1);
  tape.scratch.resize(layers_.size());
  tape.inputs[0] = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const FeatureMap& x = tape.inputs[i];
    Matrix* scratch = &tape.scratch[i];
    tape.inputs[i + 1] = std::visit(
        Overloaded{
            [&](const Conv2d& l) { return l.forward(x, scratch); },
            [&](const Silu& l) { return l.forward(x, scratch); },
            [&](const auto& l) { return l.forward(x); },
        },
        layers_[i]);
  }
}

FeatureMap Sequential::backward(const Tape& tape, const FeatureMap& grad_out, std::vector<Matrix>* param_grads) const {
  FeatureMap grad = grad_out;
  // Parameter gradients are laid out in layer order, weight before bias.
  std::size_t slot = 0;
  std::vector<std::size_t> first_slot(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    first_slot[i] = slot;
    if (std::holds_alternative<Conv2d>(layers_[i]) || std::holds_alternative<Dense>(layers_[i])) slot += 2;
  }
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const FeatureMap& x = tape.inputs[k];
    Matrix* gw = param_grads != nullptr ? &(*param_grads)[first_slot[k]] : nullptr;
    Matrix* gb = param_grads != nullptr ? &(*param_grads)[first_slot[k] + 1] : nullptr;
    grad = std::visit(
        Overloaded{
            [&](const Conv2d& l) { return l.backward(x, tape.scratch[k], grad, gw, gb); },
            [&](const Dense& l) { return l.backward(x, grad, gw, gb); },
            [&](const Silu& l) { return l.backward(x, tape.scratch[k], grad); },
            [&](const auto& l) { return l.backward(x, grad); },
        },
        layers_[k]);
  }
  return grad;
}

std::vector<Matrix*> Sequential::parameters() {
  std::vector<Matrix*> params;
  for (auto& layer : layers_) {
    if (auto* conv = std::get_if<Conv2d>(&layer)) {
      params.push_back(&conv->weight);
      params.push_back(&conv->bias);
    } else if (auto* dense = std::get_if<Dense>(&layer)) {
      params.push_back(&dense->weight);
      params.push_back(&dense->bias);
    }
  }
  return params;
}

std::vector<const Matrix*> Sequential::parameters() const {
  std::vector<const Matrix*> params;
  for (const auto& layer : layers_) {
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      params.push_back(&conv->weight);
      params.push_back(&conv->bias);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      params.push_back(&dense->weight);
      params.push_back(&dense->bias);
    }
  }
  return params;
}

std::vector<Matrix> zeros_like(const std::vector<const Matrix*>& params) {
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const Matrix* p : params) grads.push_back(Matrix::Zero(p->rows(), p->cols()));
  return grads;
}

Adam::Adam(const std::vector<const Matrix*>& params, double learning_rate, double beta1, double beta2,
           double epsilon)
    : learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon),
      m_(zeros_like(params)), v_(zeros_like(params)) {}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  require(params.size() == m_.size() && grads.size() == m_.size(), ErrorCode::kShapeMismatch,
          "adam parameter list changed size");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i]->array() -= learning_rate_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + epsilon_);
  }
}

}  // namespace lssa::nn
