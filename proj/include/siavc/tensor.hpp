#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace siavc {

struct VideoShape {
  int c = 0;  // channels
  int t = 0;  // frames
  int h = 0;  // height
  int w = 0;  // width

  bool operator==(const VideoShape&) const = default;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(c) * t * h * w;
  }
};

/// Dense rank-4 pixel array, axes (C, T, H, W), values expected in [0, 1].
class VideoTensor {
 public:
  VideoTensor() = default;

  VideoTensor(int c, int t, int h, int w, float fill = 0.0f)
      : shape_{c, t, h, w} {
    if (c < 1 || t < 1 || h < 1 || w < 1) {
      throw std::invalid_argument("VideoTensor: all dims must be >= 1");
    }
    data_.assign(static_cast<std::size_t>(shape_.numel()), fill);
  }

  static VideoTensor from_data(const VideoShape& shape,
                               std::vector<float> data) {
    VideoTensor v(shape.c, shape.t, shape.h, shape.w);
    if (data.size() != v.data_.size()) {
      throw std::invalid_argument("VideoTensor: payload size mismatch");
    }
    v.data_ = std::move(data);
    return v;
  }

  const VideoShape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  float& at(int c, int t, int y, int x) { return data_[index(c, t, y, x)]; }
  float at(int c, int t, int y, int x) const { return data_[index(c, t, y, x)]; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  bool same_shape(const VideoTensor& o) const { return shape_ == o.shape_; }

  bool operator==(const VideoTensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  void clamp01() {
    for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
  }

  /// Throws if any value is non-finite or outside [0, 1].
  void validate(const std::string& context = "VideoTensor") const {
    for (float v : data_) {
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
        throw std::invalid_argument(context + ": value out of [0,1]");
      }
    }
  }

 private:
  std::size_t index(int c, int t, int y, int x) const {
    return ((static_cast<std::size_t>(c) * shape_.t + t) * shape_.h + y) *
               shape_.w +
           x;
  }

  VideoShape shape_;
  std::vector<float> data_;
};

}  // namespace siavc
