#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lssa/error.hpp"
#include "lssa/image.hpp"
#include "lssa/rng.hpp"

namespace lssa {

enum class PositionMode { kRandom, kTopLeft, kTopRight, kBottomLeft, kBottomRight };

std::string_view to_string(PositionMode mode);
PositionMode parse_position_mode(std::string_view name);

struct ShuffleConfig {
  int N = 20;
  PositionMode position_mode = PositionMode::kRandom;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class SampleDistribution { kUniform };

struct SampleConfig {
  int M = 20;
  double eps0 = 1.0 / 255.0;
  SampleDistribution distribution = SampleDistribution::kUniform;
  std::uint64_t seed = 0;

  void validate() const;
};

using Permutation = std::vector<int>;

bool is_permutation(const Permutation& perm, int size);
Permutation inverse_permutation(const Permutation& perm);
/// Uniform over all size! orderings (Fisher-Yates).
Permutation random_permutation(int size, Rng& rng);

namespace detail {

/// Output block i takes input block perm[i]; blocks are bh x bw tiles laid
/// out row-major on a (rows x cols) grid starting at (y0, x0).
template <typename Scalar>
void permute_blocks(const BasicImage<Scalar>& in, BasicImage<Scalar>& out, int y0, int x0, int rows, int cols,
                    int bh, int bw, const Permutation& perm) {
  for (int c = 0; c < in.channels(); ++c) {
    const auto src = in.plane(c);
    auto dst = out.plane(c);
    for (int b = 0; b < rows * cols; ++b) {
      const int from = perm[static_cast<std::size_t>(b)];
      dst.block(y0 + (b / cols) * bh, x0 + (b % cols) * bw, bh, bw) =
          src.block(y0 + (from / cols) * bh, x0 + (from % cols) * bw, bh, bw);
    }
  }
}

}  // namespace detail

/// Quadrants and their 2x2 subblocks are both indexed row-major; quadrant 0
/// is the top-left h/2 x w/2 region.
template <typename Scalar>
BasicImage<Scalar> local_shuffle(const BasicImage<Scalar>& v, int quadrant, const Permutation& perm) {
  require(v.height() % 4 == 0 && v.width() % 4 == 0, ErrorCode::kInvalidArgument,
          "local_shuffle needs height and width divisible by 4, got " + v.shape_string());
  require(quadrant >= 0 && quadrant < 4, ErrorCode::kInvalidArgument,
          "quadrant index must lie in 0..3, got " + std::to_string(quadrant));
  require(is_permutation(perm, 4), ErrorCode::kInvalidArgument, "local_shuffle needs a permutation of {0,1,2,3}");
  BasicImage<Scalar> out = v;
  const int qh = v.height() / 2;
  const int qw = v.width() / 2;
  detail::permute_blocks(v, out, (quadrant / 2) * qh, (quadrant % 2) * qw, 2, 2, qh / 2, qw / 2, perm);
  return out;
}

template <typename Scalar>
BasicImage<Scalar> global_shuffle(const BasicImage<Scalar>& v, int rows, int cols, const Permutation& perm) {
  require(rows > 0 && cols > 0 && v.height() % rows == 0 && v.width() % cols == 0, ErrorCode::kInvalidArgument,
          "global_shuffle grid " + std::to_string(rows) + "x" + std::to_string(cols) + " does not divide image " +
              v.shape_string());
  require(is_permutation(perm, rows * cols), ErrorCode::kInvalidArgument,
          "global_shuffle needs a permutation of " + std::to_string(rows * cols) + " blocks");
  BasicImage<Scalar> out = v;
  detail::permute_blocks(v, out, 0, 0, rows, cols, v.height() / rows, v.width() / cols, perm);
  return out;
}

/// One drawn shuffle: enough to re-apply it or pull a gradient back through it.
struct ShuffleDraw {
  enum class Kind { kLocal, kGlobal } kind = Kind::kLocal;
  int quadrant = 0;
  Permutation perm;

  template <typename Scalar>
  BasicImage<Scalar> apply(const BasicImage<Scalar>& v) const {
    return kind == Kind::kLocal ? local_shuffle(v, quadrant, perm) : global_shuffle(v, 2, 2, perm);
  }

  /// Shuffles are pixel permutations, so the adjoint is the inverse shuffle.
  template <typename Scalar>
  BasicImage<Scalar> adjoint(const BasicImage<Scalar>& g) const {
    const Permutation inverse = inverse_permutation(perm);
    return kind == Kind::kLocal ? local_shuffle(g, quadrant, inverse) : global_shuffle(g, 2, 2, inverse);
  }
};

std::vector<ShuffleDraw> draw_local_shuffles(const ShuffleConfig& cfg, Rng& rng);
/// N uniform permutations of the 2x2 block grid of the whole image.
std::vector<ShuffleDraw> draw_global_shuffles(int n, Rng& rng);

template <typename Scalar>
std::vector<BasicImage<Scalar>> draw_shuffled_batch(const BasicImage<Scalar>& v, const ShuffleConfig& cfg, Rng& rng) {
  std::vector<BasicImage<Scalar>> batch;
  for (const ShuffleDraw& d : draw_local_shuffles(cfg, rng)) batch.push_back(d.apply(v));
  return batch;
}

/// Bilinear (half-pixel centers) sampling matrix taking `in` samples to `out`.
Eigen::MatrixXd bilinear_matrix(int out, int in);

/// Resize to (scale*H, scale*W) and back, as the linear map
/// plane -> A_y * plane * A_x^T applied per channel.
class ResizeOperator {
 public:
  ResizeOperator(int height, int width, double scale);

  double scale() const { return scale_; }
  int inner_height() const { return inner_h_; }
  int inner_width() const { return inner_w_; }

  template <typename Scalar>
  BasicImage<Scalar> apply(const BasicImage<Scalar>& v) const {
    return map(v, ay_, ax_);
  }
  template <typename Scalar>
  BasicImage<Scalar> adjoint(const BasicImage<Scalar>& g) const {
    return map(g, Eigen::MatrixXd(ay_.transpose()), Eigen::MatrixXd(ax_.transpose()));
  }

 private:
  template <typename Scalar>
  BasicImage<Scalar> map(const BasicImage<Scalar>& v, const Eigen::MatrixXd& ay, const Eigen::MatrixXd& ax) const {
    require(v.height() == ay.rows() && v.width() == ax.rows(), ErrorCode::kShapeMismatch,
            "resize operator built for a different image size than " + v.shape_string());
    BasicImage<Scalar> out(v.channels(), v.height(), v.width());
    for (int c = 0; c < v.channels(); ++c) {
      out.plane(c) = (ay.cast<Scalar>() * v.plane(c) * ax.cast<Scalar>().transpose()).eval();
    }
    return out;
  }

  double scale_;
  int inner_h_;
  int inner_w_;
  Eigen::MatrixXd ay_;  // H x H
  Eigen::MatrixXd ax_;  // W x W
};

inline const std::vector<double>& default_resize_scales() {
  static const std::vector<double> kScales = {0.50, 0.75, 1.00, 1.25, 1.50};
  return kScales;
}

template <typename Scalar>
std::vector<BasicImage<Scalar>> resize_set(const BasicImage<Scalar>& v, const std::vector<double>& scales) {
  std::vector<BasicImage<Scalar>> out;
  for (double s : scales) out.push_back(ResizeOperator(v.height(), v.width(), s).apply(v));
  return out;
}

/// clamp01(v_adv + u), u ~ U(-eps0, eps0) per pixel.
template <typename Scalar>
std::vector<BasicImage<Scalar>> sample_neighbors(const BasicImage<Scalar>& v_adv, const SampleConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<BasicImage<Scalar>> out;
  out.reserve(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) {
    BasicImage<Scalar> n = v_adv;
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      const Scalar u = static_cast<Scalar>(rng.uniform(-cfg.eps0, cfg.eps0));
      n.array()[i] = std::clamp(n.array()[i] + u, Scalar(0), Scalar(1));
    }
    out.push_back(std::move(n));
  }
  return out;
}

}  // namespace lssa
