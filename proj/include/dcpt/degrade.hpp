#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dcpt/image.hpp"

namespace dcpt {

enum class DegradationKind {
  GaussianNoise,
  MotionBlur,
  Haze,
  Rain,
  LowLight,
  // extended set for scale-up experiments
  Snow,
  DefocusBlur,
  Jpeg,
  InpaintMask,
  Downsample,
};

const std::vector<DegradationKind>& all_kinds();
std::string kind_name(DegradationKind k);
DegradationKind kind_from_name(const std::string& name);

struct NoiseParams {
  float sigma = 25.0f / 255.0f;  // sampled from [5,50]/255
};
struct BlurParams {
  int length = 9;      // sampled from [5,21] px; 1 = identity
  float angle = 0.0f;  // [0, pi)
};
struct HazeParams {
  float t = 0.6f;         // transmission, sampled from [0.3,0.9]; 1 = identity
  float airlight = 0.9f;  // [0.7,1.0]
};
struct RainParams {
  float density = 1.5f;  // streaks per kilopixel; 0 = identity
  int length = 12;
  float angle = 1.3f;
  float opacity = 0.4f;
};
struct LowLightParams {
  float scale = 0.3f;  // sampled from [0.1,0.5]; 1 with gamma 1 = identity
  float gamma = 2.0f;  // [1.5,3.0]
};
struct SnowParams {
  float density = 1.0f;  // flakes per kilopixel; 0 = identity
  float size = 1.5f;
  float opacity = 0.7f;
};
struct DefocusParams {
  float radius = 3.0f;  // disc radius, sampled from [2,6]; 0 = identity
};
struct JpegParams {
  int quality = 15;  // [5,30] when sampled; >= 100 = identity
};
struct InpaintParams {
  int count = 3;           // masked rectangles; 0 = identity
  float area_frac = 0.1f;  // per-rectangle area fraction of the image
};
struct DownsampleParams {
  int factor = 2;  // box-down then nearest-up; 1 = identity
};

using DegradationParams =
    std::variant<NoiseParams, BlurParams, HazeParams, RainParams,
                 LowLightParams, SnowParams, DefocusParams, JpegParams,
                 InpaintParams, DownsampleParams>;

// (kind, params, seed) fully determines the clean -> degraded transform.
struct DegradationSpec {
  DegradationKind kind = DegradationKind::GaussianNoise;
  DegradationParams params = NoiseParams{};
  uint64_t seed = 0;
};

// Validates params against the kind's schema (identity edges allowed) and
// applies the transform. Output is clamped to [0,1]; deterministic under
// (spec, image).
Image apply(const DegradationSpec& spec, const Image& image);

// Sequential application; kinds must be distinct, 1..3 specs.
Image compose(const std::vector<DegradationSpec>& specs, const Image& image);

// Uniform parameters within the sampling schema, deterministic under seed.
DegradationSpec sample_spec(DegradationKind kind, uint64_t rng_seed);

// Identity parameterization for every kind (sigma=0, length=1, t=1, ...).
DegradationSpec identity_spec(DegradationKind kind);

// splitmix-style seed mixing for derived sub-seeds
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace dcpt
