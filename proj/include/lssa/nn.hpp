#pragma once

#include <Eigen/Core>

#include <string>
#include <variant>
#include <vector>

#include "lssa/rng.hpp"

namespace lssa::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Activations of one sample. Rows are spatial positions in row-major order
/// (y * width + x); columns are features. Vectors are 1 x F.
struct FeatureMap {
  Matrix values;
  int height = 1;
  int width = 1;

  int positions() const { return height * width; }
  int features() const { return static_cast<int>(values.cols()); }
};

/// Same-padding, stride-1 convolution evaluated as im2col followed by a GEMM.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  Matrix weight;  // out x (in * kernel * kernel)
  Matrix bias;    // 1 x out

  FeatureMap forward(const FeatureMap& in, Matrix* scratch) const;
  FeatureMap backward(const FeatureMap& in, const Matrix& scratch, const FeatureMap& grad_out,
                      Matrix* grad_weight, Matrix* grad_bias) const;
};

/// 2x2 average pooling; height and width must be even.
struct AvgPool2 {
  FeatureMap forward(const FeatureMap& in) const;
  FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out) const;
};

/// x * sigmoid(x). Smooth everywhere, so finite differences of the input
/// gradient converge without kink artifacts.
struct Silu {
  FeatureMap forward(const FeatureMap& in, Matrix* scratch) const;
  FeatureMap backward(const FeatureMap& in, const Matrix& scratch, const FeatureMap& grad_out) const;
};

/// (positions x features) -> 1 x (positions * features), column-major order.
struct Flatten {
  FeatureMap forward(const FeatureMap& in) const;
  FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out) const;
};

/// Non-overlapping patch extraction: each output row is one patch holding
/// channel-major (c, dy, dx) pixels.
struct Patchify {
  int patch = 8;

  FeatureMap forward(const FeatureMap& in) const;
  FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out) const;
};

/// Affine map applied to every row independently.
struct Dense {
  int in_features = 0;
  int out_features = 0;
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out

  FeatureMap forward(const FeatureMap& in) const;
  FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out, Matrix* grad_weight,
                      Matrix* grad_bias) const;
};

using Layer = std::variant<Conv2d, AvgPool2, Silu, Flatten, Patchify, Dense>;

Conv2d make_conv(int in_channels, int out_channels, int kernel, Rng& rng);
Dense make_dense(int in_features, int out_features, Rng& rng);

/// Record of a forward pass: inputs[i] feeds layer i, inputs.back() is the
/// network output; scratch[i] is layer-private state for the backward pass.
struct Tape {
  std::vector<FeatureMap> inputs;
  std::vector<Matrix> scratch;

  const FeatureMap& output() const { return inputs.back(); }
};

class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  FeatureMap forward(const FeatureMap& in) const;
  void forward(const FeatureMap& in, Tape& tape) const;

  /// Back-propagates grad_out through the recorded tape. When param_grads
  /// is non-null it must be shaped like parameters() and is accumulated into.
  FeatureMap backward(const Tape& tape, const FeatureMap& grad_out, std::vector<Matrix>* param_grads) const;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

 private:
  std::vector<Layer> layers_;
};

/// Zero-filled gradient buffers shaped like the given parameters.
std::vector<Matrix> zeros_like(const std::vector<const Matrix*>& params);

/// Adam with bias correction over a flat list of parameter matrices.
class Adam {
 public:
  Adam(const std::vector<const Matrix*>& params, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

 private:
  double learning_rate_;
  double beta1_;
  double beta2_;
  double epsilon_;
  int t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace lssa::nn
