#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcpt/degrade.hpp"
#include "dcpt/image.hpp"

namespace dcpt {

// One dataset row. Synthetic entries carry a generation seed and degrade
// on the fly; paired entries point at a pre-degraded file.
struct ManifestEntry {
  std::string clean_path;
  std::optional<std::string> degraded_path;
  std::string label;  // kind name, or "clean"
  uint64_t seed = 0;  // spec-sampling seed for synthetic entries
  int repeat_weight = 1;
};

struct Manifest {
  std::vector<std::string> classes;  // authoritative ordering; [0] == "clean"
  std::vector<ManifestEntry> entries;

  int class_index(const std::string& label) const;
  void validate() const;

  void save(const std::string& path) const;
  static Manifest load(const std::string& path);
};

// Cross product of corpus images (lexicographic) and kinds; per-entry seeds
// derived from `seed`. Class list is "clean" + kinds.
Manifest build_manifest(const std::string& corpus_dir,
                        const std::vector<std::string>& kind_names,
                        uint64_t seed);

// Expanded epoch index sequence: each entry repeated repeat_weight times,
// order shuffled by seed.
std::vector<int> repeat_schedule(const Manifest& manifest, uint64_t seed);

struct PatchSample {
  Image clean;
  Image degraded;
  int label = 0;  // index into manifest.classes
};

// Aligned random crop; synthetic entries degrade the crop with the recorded
// spec seed plus a crop-local sub-seed drawn from rng. Undersized images are
// bicubic-upscaled to the patch size.
PatchSample sample_patch(const Manifest& manifest, int entry_index,
                         int patch_size, std::mt19937_64& rng,
                         bool augment_flip = false);

// Procedural clean corpus: blended gradients, value-noise textures and
// geometric shapes. Deterministic under seed; returns file paths.
std::vector<std::string> gen_procedural_corpus(const std::string& dir, int n,
                                               int size, uint64_t seed);

// Bicubic-ish (Catmull-Rom) resize used by the undersized-image policy.
Image resize_bicubic(const Image& im, int out_h, int out_w);

}  // namespace dcpt
