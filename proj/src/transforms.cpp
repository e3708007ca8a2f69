#include "lssa/transforms.hpp"

#include <numeric>

namespace lssa {

std::string_view to_string(PositionMode mode) {
  switch (mode) {
    case PositionMode::kRandom: return "random";
    case PositionMode::kTopLeft: return "top_left";
    case PositionMode::kTopRight: return "top_right";
    case PositionMode::kBottomLeft: return "bottom_left";
    case PositionMode::kBottomRight: return "bottom_right";
  }
  return "?";
}

PositionMode parse_position_mode(std::string_view name) {
  for (PositionMode m : {PositionMode::kRandom, PositionMode::kTopLeft, PositionMode::kTopRight,
                         PositionMode::kBottomLeft, PositionMode::kBottomRight}) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorCode::kInvalidArgument, "unknown position mode '" + std::string(name) + "'");
}

void ShuffleConfig::validate() const {
  require(N >= 0, ErrorCode::kInvalidArgument, "shuffle count N must be non-negative, got " + std::to_string(N));
}

void SampleConfig::validate() const {
  require(M >= 0, ErrorCode::kInvalidArgument, "neighbor count M must be non-negative, got " + std::to_string(M));
  require(eps0 >= 0.0 && std::isfinite(eps0), ErrorCode::kInvalidArgument, "sampling boundary eps0 must be >= 0");
}

bool is_permutation(const Permutation& perm, int size) {
  if (static_cast<int>(perm.size()) != size) return false;
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || p >= size || seen[static_cast<std::size_t>(p)]) return false;
    seen[static_cast<std::size_t>(p)] = true;
  }
  return true;
}

Permutation inverse_permutation(const Permutation& perm) {
  require(is_permutation(perm, static_cast<int>(perm.size())), ErrorCode::kInvalidArgument,
          "cannot invert a non-permutation");
  Permutation inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inverse;
}

Permutation random_permutation(int size, Rng& rng) {
  Permutation perm(static_cast<std::size_t>(size));
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

std::vector<ShuffleDraw> draw_local_shuffles(const ShuffleConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<ShuffleDraw> draws;
  draws.reserve(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n) {
    ShuffleDraw d;
    d.kind = ShuffleDraw::Kind::kLocal;
    switch (cfg.position_mode) {
      case PositionMode::kRandom: d.quadrant = static_cast<int>(rng.below(4)); break;
      case PositionMode::kTopLeft: d.quadrant = 0; break;
      case PositionMode::kTopRight: d.quadrant = 1; break;
      case PositionMode::kBottomLeft: d.quadrant = 2; break;
      case PositionMode::kBottomRight: d.quadrant = 3; break;
    }
    d.perm = random_permutation(4, rng);
    draws.push_back(std::move(d));
  }
  return draws;
}

std::vector<ShuffleDraw> draw_global_shuffles(int n, Rng& rng) {
  require(n >= 0, ErrorCode::kInvalidArgument, "shuffle count must be non-negative");
  std::vector<ShuffleDraw> draws;
  for (int i = 0; i < n; ++i) {
    ShuffleDraw d;
    d.kind = ShuffleDraw::Kind::kGlobal;
    d.perm = random_permutation(4, rng);
    draws.push_back(std::move(d));
  }
  return draws;
}

Eigen::MatrixXd bilinear_matrix(int out, int in) {
  require(out > 0 && in > 0, ErrorCode::kInvalidArgument, "bilinear sizes must be positive");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out, in);
  const double ratio = static_cast<double>(in) / out;
  for (int j = 0; j < out; ++j) {
    const double src = std::clamp((j + 0.5) * ratio - 0.5, 0.0, in - 1.0);
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    const double f = src - i0;
    m(j, i0) += 1.0 - f;
    m(j, i1) += f;
  }
  return m;
}

ResizeOperator::ResizeOperator(int height, int width, double scale) : scale_(scale) {
  require(scale > 0.0 && std::isfinite(scale), ErrorCode::kInvalidArgument,
          "resize scale must be positive, got " + std::to_string(scale));
  inner_h_ = static_cast<int>(std::lround(scale * height));
  inner_w_ = static_cast<int>(std::lround(scale * width));
  require(inner_h_ >= 4 && inner_w_ >= 4, ErrorCode::kInvalidArgument,
          "resize scale " + std::to_string(scale) + " gives " + std::to_string(inner_h_) + "x" +
              std::to_string(inner_w_) + ", below the 4 px minimum");
  ay_ = bilinear_matrix(height, inner_h_) * bilinear_matrix(inner_h_, height);
  ax_ = bilinear_matrix(width, inner_w_) * bilinear_matrix(inner_w_, width);
}

}  // namespace lssa
