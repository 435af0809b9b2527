#include "dcpt/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace dcpt {

double psnr(const Image& x, const Image& y) {
  if (!x.same_shape(y)) throw ValidationError("psnr: shape mismatch");
  double mse = 0;
  for (int c = 0; c < 3; ++c)
    mse += (x.ch[static_cast<size_t>(c)].cast<double>() -
            y.ch[static_cast<size_t>(c)].cast<double>())
               .square()
               .sum();
  mse /= 3.0 * x.height() * x.width();
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& x, const Image& y, int window, double data_range) {
  if (!x.same_shape(y)) throw ValidationError("ssim: shape mismatch");
  if (x.height() < window || x.width() < window)
    throw ValidationError("ssim: image smaller than window");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const int half = window / 2;
  std::vector<double> g(static_cast<size_t>(window));
  const double sigma = 1.5;
  double gsum = 0;
  for (int i = 0; i < window; ++i) {
    g[static_cast<size_t>(i)] =
        std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
    gsum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= gsum;

  const int H = x.height(), W = x.width();
  double total = 0;
  long count = 0;
  for (int c = 0; c < 3; ++c) {
    const auto xa = x.ch[static_cast<size_t>(c)].cast<double>().eval();
    const auto ya = y.ch[static_cast<size_t>(c)].cast<double>().eval();
    for (int i = half; i < H - half; ++i)
      for (int j = half; j < W - half; ++j) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int u = -half; u <= half; ++u)
          for (int v = -half; v <= half; ++v) {
            const double w = g[static_cast<size_t>(u + half)] *
                             g[static_cast<size_t>(v + half)];
            const double xv = xa(i + u, j + v), yv = ya(i + u, j + v);
            mx += w * xv;
            my += w * yv;
            sxx += w * xv * xv;
            syy += w * yv * yv;
            sxy += w * xv * yv;
          }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cov = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  }
  return total / double(count);
}

}  // namespace dcpt
