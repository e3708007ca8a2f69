#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>

#include "lssa/error.hpp"

namespace lssa {

/// Dense channel-major (C x H x W) image. Channel planes are stored row-major
/// and back to back, so `matrix()` views the whole grid as an (H*W) x C
/// column-major matrix with one column per channel.
template <typename Scalar>
class BasicImage {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Plane = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<Plane>;
  using ConstPlaneMap = Eigen::Map<const Plane>;
  using ChannelMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BasicImage() = default;
  BasicImage(int channels, int height, int width, Scalar fill = Scalar(0))
      : channels_(channels), height_(height), width_(width),
        data_(Storage::Constant(Eigen::Index(channels) * height * width, fill)) {
    require(channels > 0 && height > 0 && width > 0, ErrorCode::kInvalidArgument,
            "image dimensions must be positive");
  }
  BasicImage(int channels, int height, int width, Storage data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    require(data_.size() == Eigen::Index(channels) * height * width,
            ErrorCode::kShapeMismatch, "image storage does not match C*H*W");
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  Scalar operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  Eigen::Index index(int c, int y, int x) const {
    return (Eigen::Index(c) * height_ + y) * width_ + x;
  }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  PlaneMap plane(int c) { return PlaneMap(data_.data() + Eigen::Index(c) * height_ * width_, height_, width_); }
  ConstPlaneMap plane(int c) const {
    return ConstPlaneMap(data_.data() + Eigen::Index(c) * height_ * width_, height_, width_);
  }

  Eigen::Map<ChannelMatrix> matrix() {
    return Eigen::Map<ChannelMatrix>(data_.data(), Eigen::Index(height_) * width_, channels_);
  }
  Eigen::Map<const ChannelMatrix> matrix() const {
    return Eigen::Map<const ChannelMatrix>(data_.data(), Eigen::Index(height_) * width_, channels_);
  }

  bool same_shape(const BasicImage& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  friend bool operator==(const BasicImage& a, const BasicImage& b) {
    return a.same_shape(b) && (a.data_ == b.data_).all();
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  Storage data_;
};

using Image = BasicImage<double>;

template <typename Scalar>
void require_same_shape(const BasicImage<Scalar>& a, const BasicImage<Scalar>& b,
                        const char* what) {
  require(a.same_shape(b), ErrorCode::kShapeMismatch,
          std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

template <typename Scalar>
Scalar linf_distance(const BasicImage<Scalar>& a, const BasicImage<Scalar>& b) {
  require_same_shape(a, b, "linf_distance");
  return (a.array() - b.array()).abs().maxCoeff();
}

template <typename Scalar>
bool within_unit_range(const BasicImage<Scalar>& v) {
  return v.empty() || (v.array().minCoeff() >= Scalar(0) && v.array().maxCoeff() <= Scalar(1));
}

template <typename Scalar>
bool all_finite(const BasicImage<Scalar>& v) {
  return v.array().isFinite().all();
}

}  // namespace lssa
