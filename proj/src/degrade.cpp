#include "dcpt/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace dcpt {

namespace {

constexpr float kPi = 3.14159265358979323846f;

void check(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// bilinear sample with clamped borders
float sample_clamped(const Image::Plane& p, float y, float x) {
  const int H = static_cast<int>(p.rows()), W = static_cast<int>(p.cols());
  const float yc = std::clamp(y, 0.0f, float(H - 1));
  const float xc = std::clamp(x, 0.0f, float(W - 1));
  const int y0 = static_cast<int>(yc), x0 = static_cast<int>(xc);
  const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  const float fy = yc - y0, fx = xc - x0;
  return p(y0, x0) * (1 - fy) * (1 - fx) + p(y0, x1) * (1 - fy) * fx +
         p(y1, x0) * fy * (1 - fx) + p(y1, x1) * fy * fx;
}

Image gaussian_noise(const Image& im, const NoiseParams& p, uint64_t seed) {
  check(p.sigma >= 0.0f && p.sigma <= 0.5f, "noise sigma out of range");
  if (p.sigma == 0.0f) return im;
  Image out = im;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, p.sigma);
  for (auto& plane : out.ch)
    for (int i = 0; i < plane.rows(); ++i)
      for (int j = 0; j < plane.cols(); ++j) plane(i, j) += dist(rng);
  return out;
}

// average along a line of `length` bilinear taps at `angle`
Image motion_blur(const Image& im, const BlurParams& p) {
  check(p.length >= 1 && p.length <= 31, "blur length out of range");
  check(p.angle >= 0.0f && p.angle < kPi, "blur angle out of range");
  if (p.length == 1) return im;
  const float cx = std::cos(p.angle), sx = std::sin(p.angle);
  Image out(im.height(), im.width());
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < im.height(); ++i)
      for (int j = 0; j < im.width(); ++j) {
        float acc = 0;
        for (int t = 0; t < p.length; ++t) {
          const float d = float(t) - 0.5f * float(p.length - 1);
          acc += sample_clamped(im.ch[static_cast<size_t>(c)], float(i) + d * sx,
                                float(j) + d * cx);
        }
        out.ch[static_cast<size_t>(c)](i, j) = acc / float(p.length);
      }
  }
  return out;
}

// atmospheric scattering with scalar transmission: I = J*t + A*(1-t)
Image haze(const Image& im, const HazeParams& p) {
  check(p.t > 0.0f && p.t <= 1.0f, "haze transmission out of range");
  check(p.airlight >= 0.0f && p.airlight <= 1.0f, "haze airlight out of range");
  Image out = im;
  for (auto& plane : out.ch) plane = plane * p.t + p.airlight * (1.0f - p.t);
  return out;
}

// additive oriented streaks with a Gaussian cross-profile
Image rain(const Image& im, const RainParams& p, uint64_t seed) {
  check(p.density >= 0.0f && p.density <= 10.0f, "rain density out of range");
  check(p.length >= 1 && p.length <= 40, "rain length out of range");
  check(p.opacity >= 0.0f && p.opacity <= 1.0f, "rain opacity out of range");
  Image out = im;
  const int H = im.height(), W = im.width();
  const int count =
      static_cast<int>(std::lround(p.density * float(H) * float(W) / 1000.0f));
  if (count == 0 || p.opacity == 0.0f) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uy(0.0f, float(H - 1));
  std::uniform_real_distribution<float> ux(0.0f, float(W - 1));
  std::uniform_real_distribution<float> jitter(-0.15f, 0.15f);
  const float sw = 0.7f;  // cross-profile sigma in px
  for (int s = 0; s < count; ++s) {
    const float y0 = uy(rng), x0 = ux(rng);
    const float a = p.angle + jitter(rng);
    const float dy = std::sin(a), dx = std::cos(a);
    for (float t = 0; t < float(p.length); t += 0.5f) {
      const float y = y0 + t * dy, x = x0 + t * dx;
      const int yi = static_cast<int>(std::floor(y));
      const int xi = static_cast<int>(std::floor(x));
      for (int oy = 0; oy <= 1; ++oy)
        for (int ox = 0; ox <= 1; ++ox) {
          const int yy = yi + oy, xx = xi + ox;
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
          const float d2 = (y - yy) * (y - yy) + (x - xx) * (x - xx);
          const float v = p.opacity * std::exp(-d2 / (2 * sw * sw));
          for (auto& plane : out.ch) plane(yy, xx) += v;
        }
    }
  }
  return out;
}

// exposure scale after gamma: out = s * J^gamma
Image low_light(const Image& im, const LowLightParams& p) {
  check(p.scale > 0.0f && p.scale <= 1.0f, "low-light scale out of range");
  check(p.gamma >= 1.0f && p.gamma <= 5.0f, "low-light gamma out of range");
  if (p.scale == 1.0f && p.gamma == 1.0f) return im;
  Image out = im;
  for (auto& plane : out.ch)
    plane = p.scale * plane.max(0.0f).pow(p.gamma);
  return out;
}

Image snow(const Image& im, const SnowParams& p, uint64_t seed) {
  check(p.density >= 0.0f && p.density <= 10.0f, "snow density out of range");
  check(p.size > 0.0f && p.size <= 6.0f, "snow size out of range");
  check(p.opacity >= 0.0f && p.opacity <= 1.0f, "snow opacity out of range");
  Image out = im;
  const int H = im.height(), W = im.width();
  const int count =
      static_cast<int>(std::lround(p.density * float(H) * float(W) / 1000.0f));
  if (count == 0 || p.opacity == 0.0f) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> uy(0.0f, float(H - 1));
  std::uniform_real_distribution<float> ux(0.0f, float(W - 1));
  std::uniform_real_distribution<float> us(0.6f, 1.4f);
  for (int s = 0; s < count; ++s) {
    const float y0 = uy(rng), x0 = ux(rng);
    const float r = p.size * us(rng);
    const int rad = static_cast<int>(std::ceil(3 * r));
    for (int oy = -rad; oy <= rad; ++oy)
      for (int ox = -rad; ox <= rad; ++ox) {
        const int yy = static_cast<int>(y0) + oy, xx = static_cast<int>(x0) + ox;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        const float d2 = float(oy * oy + ox * ox);
        const float w = p.opacity * std::exp(-d2 / (2 * r * r));
        // blend toward white
        for (auto& plane : out.ch)
          plane(yy, xx) = plane(yy, xx) * (1 - w) + w;
      }
  }
  return out;
}

// disc kernel blur
Image defocus(const Image& im, const DefocusParams& p) {
  check(p.radius >= 0.0f && p.radius <= 10.0f, "defocus radius out of range");
  if (p.radius == 0.0f) return im;
  const int rad = static_cast<int>(std::ceil(p.radius));
  std::vector<std::pair<int, int>> taps;
  for (int oy = -rad; oy <= rad; ++oy)
    for (int ox = -rad; ox <= rad; ++ox)
      if (float(oy * oy + ox * ox) <= p.radius * p.radius + 0.25f)
        taps.emplace_back(oy, ox);
  Image out(im.height(), im.width());
  const int H = im.height(), W = im.width();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        float acc = 0;
        for (auto [oy, ox] : taps) {
          const int yy = std::clamp(i + oy, 0, H - 1);
          const int xx = std::clamp(j + ox, 0, W - 1);
          acc += im.ch[static_cast<size_t>(c)](yy, xx);
        }
        out.ch[static_cast<size_t>(c)](i, j) = acc / float(taps.size());
      }
  return out;
}

// 8x8 DCT quantization with the standard luminance table scaled by quality
Image jpeg_blocks(const Image& im, const JpegParams& p) {
  check(p.quality >= 1, "jpeg quality out of range");
  if (p.quality >= 100) return im;  // pass-through identity
  static const int base[64] = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
      14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
      18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
      49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  const int scale = p.quality < 50 ? 5000 / p.quality : 200 - 2 * p.quality;
  float q[64];
  for (int i = 0; i < 64; ++i)
    q[i] = float(std::clamp((base[i] * scale + 50) / 100, 1, 255));
  // 8x8 DCT-II matrix
  Eigen::Matrix<float, 8, 8> D;
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n)
      D(k, n) = std::sqrt((k == 0 ? 1.0f : 2.0f) / 8.0f) *
                std::cos(kPi * (2 * n + 1) * k / 16.0f);
  Image out = im;
  const int H = im.height(), W = im.width();
  for (auto& plane : out.ch) {
    for (int by = 0; by < H; by += 8)
      for (int bx = 0; bx < W; bx += 8) {
        Eigen::Matrix<float, 8, 8> blk = Eigen::Matrix<float, 8, 8>::Zero();
        const int bh = std::min(8, H - by), bw = std::min(8, W - bx);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            blk(i, j) =
                plane(by + std::min(i, bh - 1), bx + std::min(j, bw - 1)) *
                    255.0f - 128.0f;
        Eigen::Matrix<float, 8, 8> coef = D * blk * D.transpose();
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j)
            coef(i, j) = std::round(coef(i, j) / q[i * 8 + j]) * q[i * 8 + j];
        blk = D.transpose() * coef * D;
        for (int i = 0; i < bh; ++i)
          for (int j = 0; j < bw; ++j)
            plane(by + i, bx + j) = (blk(i, j) + 128.0f) / 255.0f;
      }
  }
  return out;
}

Image inpaint_mask(const Image& im, const InpaintParams& p, uint64_t seed) {
  check(p.count >= 0 && p.count <= 16, "inpaint count out of range");
  check(p.area_frac >= 0.0f && p.area_frac <= 0.5f,
        "inpaint area fraction out of range");
  if (p.count == 0 || p.area_frac == 0.0f) return im;
  Image out = im;
  const int H = im.height(), W = im.width();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> ur(0.5f, 2.0f);
  for (int k = 0; k < p.count; ++k) {
    const float aspect = ur(rng);
    const float area = p.area_frac * float(H) * float(W);
    int rh = std::max(1, static_cast<int>(std::sqrt(area * aspect)));
    int rw = std::max(1, static_cast<int>(std::sqrt(area / aspect)));
    rh = std::min(rh, H);
    rw = std::min(rw, W);
    std::uniform_int_distribution<int> uy(0, H - rh), ux(0, W - rw);
    const int y0 = uy(rng), x0 = ux(rng);
    for (auto& plane : out.ch) plane.block(y0, x0, rh, rw).setZero();
  }
  return out;
}

Image downsample(const Image& im, const DownsampleParams& p) {
  check(p.factor >= 1 && p.factor <= 8, "downsample factor out of range");
  if (p.factor == 1) return im;
  Image out = im;
  const int H = im.height(), W = im.width(), f = p.factor;
  for (auto& plane : out.ch) {
    Image::Plane low = plane;
    for (int by = 0; by < H; by += f)
      for (int bx = 0; bx < W; bx += f) {
        const int bh = std::min(f, H - by), bw = std::min(f, W - bx);
        const float m = plane.block(by, bx, bh, bw).mean();
        low.block(by, bx, bh, bw).setConstant(m);
      }
    plane = low;
  }
  return out;
}

}  // namespace

const std::vector<DegradationKind>& all_kinds() {
  static const std::vector<DegradationKind> k = {
      DegradationKind::GaussianNoise, DegradationKind::MotionBlur,
      DegradationKind::Haze,          DegradationKind::Rain,
      DegradationKind::LowLight,      DegradationKind::Snow,
      DegradationKind::DefocusBlur,   DegradationKind::Jpeg,
      DegradationKind::InpaintMask,   DegradationKind::Downsample};
  return k;
}

std::string kind_name(DegradationKind k) {
  switch (k) {
    case DegradationKind::GaussianNoise: return "noise";
    case DegradationKind::MotionBlur: return "blur";
    case DegradationKind::Haze: return "haze";
    case DegradationKind::Rain: return "rain";
    case DegradationKind::LowLight: return "lowlight";
    case DegradationKind::Snow: return "snow";
    case DegradationKind::DefocusBlur: return "defocus";
    case DegradationKind::Jpeg: return "jpeg";
    case DegradationKind::InpaintMask: return "inpaint";
    case DegradationKind::Downsample: return "downsample";
  }
  throw ConfigError("unknown degradation kind");
}

DegradationKind kind_from_name(const std::string& name) {
  for (auto k : all_kinds())
    if (kind_name(k) == name) return k;
  throw ConfigError("unknown degradation kind '" + name +
                    "' (expected one of noise, blur, haze, rain, lowlight, "
                    "snow, defocus, jpeg, inpaint, downsample)");
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Image apply(const DegradationSpec& spec, const Image& image) {
  image.validate();
  Image out = std::visit(
      [&](const auto& p) -> Image {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NoiseParams>)
          return gaussian_noise(image, p, spec.seed);
        else if constexpr (std::is_same_v<T, BlurParams>)
          return motion_blur(image, p);
        else if constexpr (std::is_same_v<T, HazeParams>)
          return haze(image, p);
        else if constexpr (std::is_same_v<T, RainParams>)
          return rain(image, p, spec.seed);
        else if constexpr (std::is_same_v<T, LowLightParams>)
          return low_light(image, p);
        else if constexpr (std::is_same_v<T, SnowParams>)
          return snow(image, p, spec.seed);
        else if constexpr (std::is_same_v<T, DefocusParams>)
          return defocus(image, p);
        else if constexpr (std::is_same_v<T, JpegParams>)
          return jpeg_blocks(image, p);
        else if constexpr (std::is_same_v<T, InpaintParams>)
          return inpaint_mask(image, p, spec.seed);
        else
          return downsample(image, p);
      },
      spec.params);
  // params variant must match the declared kind
  const bool kind_matches = std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        switch (spec.kind) {
          case DegradationKind::GaussianNoise: return std::is_same_v<T, NoiseParams>;
          case DegradationKind::MotionBlur: return std::is_same_v<T, BlurParams>;
          case DegradationKind::Haze: return std::is_same_v<T, HazeParams>;
          case DegradationKind::Rain: return std::is_same_v<T, RainParams>;
          case DegradationKind::LowLight: return std::is_same_v<T, LowLightParams>;
          case DegradationKind::Snow: return std::is_same_v<T, SnowParams>;
          case DegradationKind::DefocusBlur: return std::is_same_v<T, DefocusParams>;
          case DegradationKind::Jpeg: return std::is_same_v<T, JpegParams>;
          case DegradationKind::InpaintMask: return std::is_same_v<T, InpaintParams>;
          case DegradationKind::Downsample: return std::is_same_v<T, DownsampleParams>;
        }
        return false;
      },
      spec.params);
  if (!kind_matches)
    throw ValidationError("degradation params do not match kind " +
                          kind_name(spec.kind));
  out.clamp01();
  if (!out.all_finite()) throw NumericError("degradation produced non-finite values");
  return out;
}

Image compose(const std::vector<DegradationSpec>& specs, const Image& image) {
  if (specs.empty() || specs.size() > 3)
    throw ValidationError("compose expects 1..3 specs");
  std::set<DegradationKind> kinds;
  for (const auto& s : specs)
    if (!kinds.insert(s.kind).second)
      throw ValidationError("compose: duplicate kind " + kind_name(s.kind));
  Image out = image;
  for (const auto& s : specs) out = apply(s, out);
  return out;
}

DegradationSpec sample_spec(DegradationKind kind, uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  auto uni = [&](float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng);
  };
  auto uni_i = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  DegradationSpec spec;
  spec.kind = kind;
  spec.seed = mix_seed(rng_seed, 0x5eed);
  switch (kind) {
    case DegradationKind::GaussianNoise:
      spec.params = NoiseParams{uni(5.0f / 255.0f, 50.0f / 255.0f)};
      break;
    case DegradationKind::MotionBlur:
      spec.params = BlurParams{uni_i(5, 21), uni(0.0f, kPi * 0.9999f)};
      break;
    case DegradationKind::Haze:
      spec.params = HazeParams{uni(0.3f, 0.9f), uni(0.7f, 1.0f)};
      break;
    case DegradationKind::Rain:
      spec.params = RainParams{uni(1.5f, 4.0f), uni_i(10, 20),
                               uni(kPi / 3, 2 * kPi / 3), uni(0.35f, 0.7f)};
      break;
    case DegradationKind::LowLight:
      spec.params = LowLightParams{uni(0.1f, 0.5f), uni(1.5f, 3.0f)};
      break;
    case DegradationKind::Snow:
      spec.params = SnowParams{uni(0.5f, 2.0f), uni(1.0f, 3.0f), uni(0.4f, 0.9f)};
      break;
    case DegradationKind::DefocusBlur:
      spec.params = DefocusParams{uni(2.0f, 6.0f)};
      break;
    case DegradationKind::Jpeg:
      spec.params = JpegParams{uni_i(5, 30)};
      break;
    case DegradationKind::InpaintMask:
      spec.params = InpaintParams{uni_i(1, 5), uni(0.05f, 0.2f)};
      break;
    case DegradationKind::Downsample:
      spec.params = DownsampleParams{uni_i(2, 4)};
      break;
  }
  return spec;
}

DegradationSpec identity_spec(DegradationKind kind) {
  DegradationSpec spec;
  spec.kind = kind;
  spec.seed = 0;
  switch (kind) {
    case DegradationKind::GaussianNoise: spec.params = NoiseParams{0.0f}; break;
    case DegradationKind::MotionBlur: spec.params = BlurParams{1, 0.0f}; break;
    case DegradationKind::Haze: spec.params = HazeParams{1.0f, 0.9f}; break;
    case DegradationKind::Rain: spec.params = RainParams{0.0f, 12, 1.3f, 0.4f}; break;
    case DegradationKind::LowLight: spec.params = LowLightParams{1.0f, 1.0f}; break;
    case DegradationKind::Snow: spec.params = SnowParams{0.0f, 1.5f, 0.7f}; break;
    case DegradationKind::DefocusBlur: spec.params = DefocusParams{0.0f}; break;
    case DegradationKind::Jpeg: spec.params = JpegParams{100}; break;
    case DegradationKind::InpaintMask: spec.params = InpaintParams{0, 0.1f}; break;
    case DegradationKind::Downsample: spec.params = DownsampleParams{1}; break;
  }
  return spec;
}

}  // namespace dcpt
