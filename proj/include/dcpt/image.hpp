#pragma once

#include <Eigen/Dense>
#include <array>

#include "dcpt/errors.hpp"

namespace dcpt {

// H x W x 3, intensities in [0,1], sRGB. Channel planes are row-major
// (row = image row).
struct Image {
  using Plane = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
  std::array<Plane, 3> ch;

  Image() = default;
  Image(int height, int width) {
    for (auto& p : ch) p = Plane::Zero(height, width);
  }

  int height() const { return static_cast<int>(ch[0].rows()); }
  int width() const { return static_cast<int>(ch[0].cols()); }

  static Image constant(int height, int width, float r, float g, float b) {
    Image im(height, width);
    im.ch[0].setConstant(r);
    im.ch[1].setConstant(g);
    im.ch[2].setConstant(b);
    return im;
  }

  void clamp01() {
    for (auto& p : ch) p = p.min(1.0f).max(0.0f);
  }

  bool all_finite() const {
    for (const auto& p : ch)
      if (!p.isFinite().all()) return false;
    return true;
  }

  bool same_shape(const Image& o) const {
    return height() == o.height() && width() == o.width();
  }

  Image crop(int top, int left, int h, int w) const {
    if (top < 0 || left < 0 || top + h > height() || left + w > width())
      throw ValidationError("crop out of bounds");
    Image out(h, w);
    for (int c = 0; c < 3; ++c) out.ch[c] = ch[c].block(top, left, h, w);
    return out;
  }

  Image center_crop(int size) const {
    if (size > height() || size > width())
      throw ValidationError("center_crop: image smaller than crop size");
    return crop((height() - size) / 2, (width() - size) / 2, size, size);
  }

  void validate(int min_dim = 16) const {
    if (height() < min_dim || width() < min_dim)
      throw ValidationError("image smaller than minimum dimension");
    if (!all_finite()) throw NumericError("image contains non-finite values");
  }
};

inline float max_abs_diff(const Image& a, const Image& b) {
  float m = 0;
  for (int c = 0; c < 3; ++c)
    m = std::max(m, (a.ch[c] - b.ch[c]).abs().maxCoeff());
  return m;
}

}  // namespace dcpt
