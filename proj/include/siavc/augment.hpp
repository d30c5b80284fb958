#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "siavc/rng.hpp"
#include "siavc/tensor.hpp"

namespace siavc {

struct AugPair {
  VideoTensor weak;
  VideoTensor strong;
};

enum class AugOp : int {
  kIdentity = 0,
  kAutoContrast,
  kEqualize,
  kRotate,
  kSolarize,
  kColor,
  kPosterize,
  kContrast,
  kBrightness,
  kSharpness,
  kShearX,
  kShearY,
  kTranslateX,
  kTranslateY,
};

inline constexpr int kNumAugOps = 14;

inline std::string_view aug_op_name(AugOp op) {
  constexpr std::array<std::string_view, kNumAugOps> names = {
      "Identity",  "AutoContrast", "Equalize",   "Rotate",     "Solarize",
      "Color",     "Posterize",    "Contrast",   "Brightness", "Sharpness",
      "ShearX",    "ShearY",       "TranslateX", "TranslateY"};
  return names[static_cast<int>(op)];
}

namespace detail {

inline constexpr float kGeomFill = 0.5f;  // gray fill outside warped frames

inline float bilinear(const VideoTensor& v, int c, int t, double sy,
                      double sx) {
  const int h = v.shape().h, w = v.shape().w;
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const double fy = sy - y0, fx = sx - x0;
  auto px = [&](int y, int x) -> float {
    if (y < 0 || y >= h || x < 0 || x >= w) return kGeomFill;
    return v.at(c, t, y, x);
  };
  const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
  const double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

/// Inverse-maps every output pixel through (sy, sx) = f(y, x).
template <typename MapFn>
VideoTensor warp(const VideoTensor& v, MapFn&& map) {
  const auto& s = v.shape();
  VideoTensor out(s.c, s.t, s.h, s.w);
  for (int t = 0; t < s.t; ++t) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const auto [sy, sx] = map(y, x);
        for (int c = 0; c < s.c; ++c) {
          out.at(c, t, y, x) = bilinear(v, c, t, sy, sx);
        }
      }
    }
  }
  return out;
}

inline VideoTensor rotate(const VideoTensor& v, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (v.shape().h - 1) / 2.0, cx = (v.shape().w - 1) / 2.0;
  return warp(v, [=](int y, int x) {
    const double dy = y - cy, dx = x - cx;
    return std::pair{cy + sn * dx + cs * dy, cx + cs * dx - sn * dy};
  });
}

inline VideoTensor shear_x(const VideoTensor& v, double s) {
  const double cy = (v.shape().h - 1) / 2.0;
  return warp(v, [=](int y, int x) {
    return std::pair{static_cast<double>(y), x - s * (y - cy)};
  });
}

inline VideoTensor shear_y(const VideoTensor& v, double s) {
  const double cx = (v.shape().w - 1) / 2.0;
  return warp(v, [=](int y, int x) {
    return std::pair{y - s * (x - cx), static_cast<double>(x)};
  });
}

inline VideoTensor translate(const VideoTensor& v, int dy, int dx) {
  return warp(v, [=](int y, int x) {
    return std::pair{static_cast<double>(y - dy), static_cast<double>(x - dx)};
  });
}

inline VideoTensor autocontrast(const VideoTensor& v) {
  const auto& s = v.shape();
  VideoTensor out = v;
  for (int c = 0; c < s.c; ++c) {
    float lo = 1.0f, hi = 0.0f;
    for (int t = 0; t < s.t; ++t)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          lo = std::min(lo, v.at(c, t, y, x));
          hi = std::max(hi, v.at(c, t, y, x));
        }
    if (hi <= lo) continue;
    const float scale = 1.0f / (hi - lo);
    for (int t = 0; t < s.t; ++t)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          out.at(c, t, y, x) = (v.at(c, t, y, x) - lo) * scale;
        }
  }
  return out;
}

inline VideoTensor equalize(const VideoTensor& v) {
  const auto& s = v.shape();
  constexpr int kLevels = 256;
  VideoTensor out = v;
  const std::int64_t per_channel = static_cast<std::int64_t>(s.t) * s.h * s.w;
  for (int c = 0; c < s.c; ++c) {
    std::array<std::int64_t, kLevels> hist{};
    auto level = [](float x) {
      return std::min(kLevels - 1, static_cast<int>(x * kLevels));
    };
    for (int t = 0; t < s.t; ++t)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) ++hist[level(v.at(c, t, y, x))];
    std::array<double, kLevels> cdf{};
    std::int64_t acc = 0;
    for (int b = 0; b < kLevels; ++b) {
      acc += hist[b];
      cdf[b] = static_cast<double>(acc);
    }
    double cdf_min = 0.0;
    for (int b = 0; b < kLevels; ++b) {
      if (hist[b] > 0) {
        cdf_min = cdf[b];
        break;
      }
    }
    const double denom = static_cast<double>(per_channel) - cdf_min;
    if (denom <= 0.0) continue;  // flat channel
    for (int t = 0; t < s.t; ++t)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const double m = (cdf[level(v.at(c, t, y, x))] - cdf_min) / denom;
          out.at(c, t, y, x) = static_cast<float>(std::clamp(m, 0.0, 1.0));
        }
  }
  return out;
}

inline VideoTensor solarize(const VideoTensor& v, float threshold) {
  VideoTensor out = v;
  float* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (p[i] >= threshold) p[i] = 1.0f - p[i];
  }
  return out;
}

inline VideoTensor posterize(const VideoTensor& v, int bits) {
  const int levels = (1 << bits) - 1;
  VideoTensor out = v;
  float* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    p[i] = std::round(p[i] * levels) / levels;
  }
  return out;
}

inline float gray_at(const VideoTensor& v, int t, int y, int x) {
  if (v.shape().c == 3) {
    return 0.299f * v.at(0, t, y, x) + 0.587f * v.at(1, t, y, x) +
           0.114f * v.at(2, t, y, x);
  }
  float acc = 0.0f;
  for (int c = 0; c < v.shape().c; ++c) acc += v.at(c, t, y, x);
  return acc / v.shape().c;
}

inline VideoTensor color(const VideoTensor& v, float factor) {
  const auto& s = v.shape();
  VideoTensor out = v;
  for (int t = 0; t < s.t; ++t)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const float g = gray_at(v, t, y, x);
        for (int c = 0; c < s.c; ++c) {
          out.at(c, t, y, x) = g + factor * (v.at(c, t, y, x) - g);
        }
      }
  out.clamp01();
  return out;
}

inline VideoTensor contrast(const VideoTensor& v, float factor) {
  const auto& s = v.shape();
  double mean = 0.0;
  for (int t = 0; t < s.t; ++t)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) mean += gray_at(v, t, y, x);
  mean /= static_cast<double>(s.t) * s.h * s.w;
  VideoTensor out = v;
  float* p = out.data();
  const float m = static_cast<float>(mean);
  for (std::size_t i = 0; i < out.size(); ++i) {
    p[i] = m + factor * (p[i] - m);
  }
  out.clamp01();
  return out;
}

inline VideoTensor brightness(const VideoTensor& v, float factor) {
  VideoTensor out = v;
  float* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) p[i] *= factor;
  out.clamp01();
  return out;
}

inline VideoTensor sharpness(const VideoTensor& v, float factor) {
  const auto& s = v.shape();
  VideoTensor out = v;
  if (s.h < 3 || s.w < 3) return out;
  // 3x3 smoothing kernel, border pixels untouched.
  for (int c = 0; c < s.c; ++c)
    for (int t = 0; t < s.t; ++t)
      for (int y = 1; y < s.h - 1; ++y)
        for (int x = 1; x < s.w - 1; ++x) {
          float acc = 0.0f;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const float k = (dy == 0 && dx == 0) ? 5.0f : 1.0f;
              acc += k * v.at(c, t, y + dy, x + dx);
            }
          const float blurred = acc / 13.0f;
          out.at(c, t, y, x) = blurred + factor * (v.at(c, t, y, x) - blurred);
        }
  out.clamp01();
  return out;
}

}  // namespace detail

inline VideoTensor hflip(const VideoTensor& v) {
  const auto& s = v.shape();
  VideoTensor out(s.c, s.t, s.h, s.w);
  for (int c = 0; c < s.c; ++c)
    for (int t = 0; t < s.t; ++t)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          out.at(c, t, y, x) = v.at(c, t, y, s.w - 1 - x);
        }
  return out;
}

/// Weak augmentation: with probability 1/2 every frame is flipped
/// horizontally, otherwise the video passes through untouched.
inline VideoTensor weak_augment(const VideoTensor& v, RngStream& rng) {
  return rng.bernoulli(0.5) ? hflip(v) : v;
}

/// Applies one table op with magnitude in (0, 1] and direction sign to all
/// frames at once. Magnitude and sign are ignored by the parameter-free ops.
inline VideoTensor apply_aug_op(const VideoTensor& v, AugOp op,
                                double magnitude, int sign) {
  using namespace detail;
  const float dir = sign >= 0 ? 1.0f : -1.0f;
  const float m = static_cast<float>(magnitude);
  switch (op) {
    case AugOp::kIdentity:
      return v;
    case AugOp::kAutoContrast:
      return autocontrast(v);
    case AugOp::kEqualize:
      return equalize(v);
    case AugOp::kRotate:
      return rotate(v, dir * 30.0 * m);
    case AugOp::kSolarize:
      return solarize(v, 1.0f - m);
    case AugOp::kColor:
      return color(v, 1.0f + dir * 0.9f * m);
    case AugOp::kPosterize:
      return posterize(v, 8 - static_cast<int>(std::round(4.0 * m)));
    case AugOp::kContrast:
      return contrast(v, 1.0f + dir * 0.9f * m);
    case AugOp::kBrightness:
      return brightness(v, 1.0f + dir * 0.9f * m);
    case AugOp::kSharpness:
      return sharpness(v, 1.0f + dir * 0.9f * m);
    case AugOp::kShearX:
      return shear_x(v, dir * 0.3 * m);
    case AugOp::kShearY:
      return shear_y(v, dir * 0.3 * m);
    case AugOp::kTranslateX:
      return translate(
          v, 0, static_cast<int>(std::round(dir * 0.3 * m * v.shape().w)));
    case AugOp::kTranslateY:
      return translate(
          v, static_cast<int>(std::round(dir * 0.3 * m * v.shape().h)), 0);
  }
  throw std::invalid_argument("apply_aug_op: unknown op");
}

/// RandAugment: n_ops uniform draws from the 14-op table, each with a
/// uniform magnitude level in {1..10} and a random direction. One parameter
/// set per video, applied to every frame.
inline VideoTensor strong_augment(const VideoTensor& v, RngStream& rng,
                                  int n_ops = 2) {
  VideoTensor out = v;
  for (int i = 0; i < n_ops; ++i) {
    const auto op = static_cast<AugOp>(rng.uniform_int(kNumAugOps));
    const double magnitude = (1.0 + rng.uniform_int(10)) / 10.0;
    const int sign = rng.bernoulli(0.5) ? 1 : -1;
    out = apply_aug_op(out, op, magnitude, sign);
  }
  return out;
}

/// Adds i.i.d. zero-mean Gaussian noise, then clamps to [0, 1].
inline VideoTensor gaussian_noise(const VideoTensor& v, double sigma,
                                  RngStream& rng) {
  if (sigma < 0.0 || !std::isfinite(sigma)) {
    throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
  }
  if (sigma == 0.0) return v;
  VideoTensor out = v;
  float* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    p[i] = std::clamp(p[i] + static_cast<float>(sigma * rng.normal()), 0.0f,
                      1.0f);
  }
  return out;
}

/// Zeroes one axis-aligned rectangle per frame (or one shared rectangle when
/// per_frame is false) covering an area fraction uniform in [lo, hi].
inline VideoTensor random_mask(const VideoTensor& v, double lo, double hi,
                               RngStream& rng, bool per_frame = true) {
  if (!(0.0 <= lo && lo <= hi && hi <= 1.0)) {
    throw std::invalid_argument("random_mask: need 0 <= lo <= hi <= 1");
  }
  const auto& s = v.shape();
  VideoTensor out = v;
  auto draw_rect = [&](int& y0, int& x0, int& rh, int& rw) -> bool {
    const double frac = rng.uniform(lo, hi);
    const auto area =
        static_cast<std::int64_t>(std::llround(frac * s.h * s.w));
    if (area <= 0) return false;
    const std::int64_t rh_min = (area + s.w - 1) / s.w;
    const std::int64_t rh_max = std::min<std::int64_t>(s.h, area);
    rh = static_cast<int>(rh_min + rng.uniform_int(rh_max - rh_min + 1));
    rw = static_cast<int>(std::clamp<std::int64_t>(
        std::llround(static_cast<double>(area) / rh), 1, s.w));
    y0 = static_cast<int>(rng.uniform_int(s.h - rh + 1));
    x0 = static_cast<int>(rng.uniform_int(s.w - rw + 1));
    return true;
  };
  auto apply_rect = [&](int t, int y0, int x0, int rh, int rw) {
    for (int c = 0; c < s.c; ++c)
      for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) out.at(c, t, y, x) = 0.0f;
  };
  if (per_frame) {
    for (int t = 0; t < s.t; ++t) {
      int y0, x0, rh, rw;
      if (draw_rect(y0, x0, rh, rw)) apply_rect(t, y0, x0, rh, rw);
    }
  } else {
    int y0, x0, rh, rw;
    if (draw_rect(y0, x0, rh, rw)) {
      for (int t = 0; t < s.t; ++t) apply_rect(t, y0, x0, rh, rw);
    }
  }
  return out;
}

/// Re-augmentation applied to already strongly augmented videos: Gaussian
/// noise first, random masking second, so masked pixels end up exactly zero.
inline VideoTensor super_augment(const VideoTensor& v_strong, double sigma,
                                 double mask_lo, double mask_hi,
                                 RngStream& rng, bool per_frame = true) {
  return random_mask(gaussian_noise(v_strong, sigma, rng), mask_lo, mask_hi,
                     rng, per_frame);
}

}  // namespace siavc
