#pragma once

#include "dcpt/image.hpp"

namespace dcpt {

struct MetricReport {
  double psnr = 0;  // dB; +inf when MSE == 0
  double ssim = 0;
  int samples = 0;
};

// 10*log10(1/MSE) over all RGB elements; identical images report +inf.
double psnr(const Image& x, const Image& y);

// Gaussian-windowed SSIM (window 11, sigma 1.5, C1=0.01^2, C2=0.03^2,
// data range 1), averaged over channels and valid window positions.
double ssim(const Image& x, const Image& y, int window = 11,
            double data_range = 1.0);

}  // namespace dcpt
