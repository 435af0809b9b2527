#include "dcpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "dcpt/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dcpt {

int Manifest::class_index(const std::string& label) const {
  for (size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == label) return static_cast<int>(i);
  throw ValidationError("label '" + label + "' not in manifest class list");
}

void Manifest::validate() const {
  if (classes.empty() || classes[0] != "clean")
    throw ValidationError("manifest class list must start with 'clean'");
  std::set<std::string> uniq(classes.begin(), classes.end());
  if (uniq.size() != classes.size())
    throw ValidationError("manifest has duplicate classes");
  for (const auto& e : entries) {
    if (e.repeat_weight < 1)
      throw ValidationError("repeat_weight must be >= 1");
    class_index(e.label);
    if (!fs::exists(e.clean_path))
      throw ValidationError("manifest path not resolvable: " + e.clean_path);
    if (e.degraded_path && !fs::exists(*e.degraded_path))
      throw ValidationError("manifest path not resolvable: " + *e.degraded_path);
  }
}

void Manifest::save(const std::string& path) const {
  json j;
  j["classes"] = classes;
  j["entries"] = json::array();
  for (const auto& e : entries) {
    json je;
    je["clean_path"] = e.clean_path;
    if (e.degraded_path) je["degraded_path"] = *e.degraded_path;
    je["label"] = e.label;
    je["seed"] = e.seed;
    je["repeat_weight"] = e.repeat_weight;
    j["entries"].push_back(je);
  }
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write manifest " + path);
  f << j.dump(2) << "\n";
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open manifest " + path);
  json j;
  f >> j;
  Manifest m;
  m.classes = j.at("classes").get<std::vector<std::string>>();
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.clean_path = je.at("clean_path").get<std::string>();
    if (je.contains("degraded_path"))
      e.degraded_path = je.at("degraded_path").get<std::string>();
    e.label = je.at("label").get<std::string>();
    e.seed = je.value("seed", uint64_t(0));
    e.repeat_weight = je.value("repeat_weight", 1);
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

Manifest build_manifest(const std::string& corpus_dir,
                        const std::vector<std::string>& kind_names,
                        uint64_t seed) {
  if (kind_names.empty()) throw ConfigError("build_manifest: empty class list");
  for (const auto& k : kind_names) kind_from_name(k);  // validates
  std::vector<std::string> files;
  if (!fs::is_directory(corpus_dir))
    throw ConfigError("build_manifest: not a directory: " + corpus_dir);
  for (const auto& de : fs::directory_iterator(corpus_dir))
    if (de.path().extension() == ".png") files.push_back(de.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw ConfigError("build_manifest: no .png files in " + corpus_dir);

  Manifest m;
  m.classes.push_back("clean");
  for (const auto& k : kind_names) m.classes.push_back(k);
  uint64_t idx = 0;
  for (const auto& f : files)
    for (const auto& k : kind_names) {
      ManifestEntry e;
      e.clean_path = f;
      e.label = k;
      e.seed = mix_seed(seed, idx++);
      m.entries.push_back(std::move(e));
    }
  return m;
}

std::vector<int> repeat_schedule(const Manifest& manifest, uint64_t seed) {
  std::vector<int> sched;
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    for (int r = 0; r < manifest.entries[i].repeat_weight; ++r)
      sched.push_back(static_cast<int>(i));
  std::mt19937_64 rng(seed);
  std::shuffle(sched.begin(), sched.end(), rng);
  return sched;
}

namespace {

float catmull_rom(float p0, float p1, float p2, float p3, float t) {
  const float t2 = t * t, t3 = t2 * t;
  return 0.5f * ((2 * p1) + (-p0 + p2) * t +
                 (2 * p0 - 5 * p1 + 4 * p2 - p3) * t2 +
                 (-p0 + 3 * p1 - 3 * p2 + p3) * t3);
}

}  // namespace

Image resize_bicubic(const Image& im, int out_h, int out_w) {
  const int H = im.height(), W = im.width();
  Image out(out_h, out_w);
  for (int c = 0; c < 3; ++c) {
    const auto& src = im.ch[static_cast<size_t>(c)];
    auto at = [&](int y, int x) {
      return src(std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1));
    };
    for (int i = 0; i < out_h; ++i) {
      const float sy = (float(i) + 0.5f) * float(H) / float(out_h) - 0.5f;
      const int y1 = static_cast<int>(std::floor(sy));
      const float ty = sy - y1;
      for (int j = 0; j < out_w; ++j) {
        const float sx = (float(j) + 0.5f) * float(W) / float(out_w) - 0.5f;
        const int x1 = static_cast<int>(std::floor(sx));
        const float tx = sx - x1;
        float col[4];
        for (int k = -1; k <= 2; ++k)
          col[k + 1] = catmull_rom(at(y1 + k, x1 - 1), at(y1 + k, x1),
                                   at(y1 + k, x1 + 1), at(y1 + k, x1 + 2), tx);
        out.ch[static_cast<size_t>(c)](i, j) =
            catmull_rom(col[0], col[1], col[2], col[3], ty);
      }
    }
  }
  out.clamp01();
  return out;
}

namespace {

// Training loops revisit the same few source images thousands of times;
// decoding the PNG once per path keeps sampling off the disk.
const Image& read_png_cached(const std::string& path) {
  static std::map<std::string, Image> cache;
  auto it = cache.find(path);
  if (it == cache.end()) it = cache.emplace(path, read_png(path)).first;
  return it->second;
}

}  // namespace

PatchSample sample_patch(const Manifest& manifest, int entry_index,
                         int patch_size, std::mt19937_64& rng,
                         bool augment_flip) {
  const auto& e = manifest.entries.at(static_cast<size_t>(entry_index));
  Image clean = read_png_cached(e.clean_path);
  std::optional<Image> degraded_full;
  if (e.degraded_path) {
    degraded_full = read_png_cached(*e.degraded_path);
    if (!degraded_full->same_shape(clean))
      throw ValidationError("paired images differ in shape: " + e.clean_path);
  }
  if (clean.height() < patch_size || clean.width() < patch_size) {
    const int h = std::max(clean.height(), patch_size);
    const int w = std::max(clean.width(), patch_size);
    clean = resize_bicubic(clean, h, w);
    if (degraded_full) degraded_full = resize_bicubic(*degraded_full, h, w);
  }
  std::uniform_int_distribution<int> uy(0, clean.height() - patch_size);
  std::uniform_int_distribution<int> ux(0, clean.width() - patch_size);
  const int top = uy(rng), left = ux(rng);
  const uint64_t crop_seed = rng();
  bool flip = false;
  if (augment_flip) flip = (rng() & 1) != 0;

  PatchSample out;
  out.clean = clean.crop(top, left, patch_size, patch_size);
  out.label = manifest.class_index(e.label);
  if (degraded_full) {
    out.degraded = degraded_full->crop(top, left, patch_size, patch_size);
  } else if (e.label == "clean") {
    out.degraded = out.clean;
  } else {
    DegradationSpec spec = sample_spec(kind_from_name(e.label), e.seed);
    spec.seed = mix_seed(spec.seed, crop_seed);  // crop-local realization
    out.degraded = apply(spec, out.clean);
  }
  if (flip) {
    for (int c = 0; c < 3; ++c) {
      out.clean.ch[static_cast<size_t>(c)] =
          out.clean.ch[static_cast<size_t>(c)].rowwise().reverse().eval();
      out.degraded.ch[static_cast<size_t>(c)] =
          out.degraded.ch[static_cast<size_t>(c)].rowwise().reverse().eval();
    }
  }
  return out;
}

namespace {

// two-octave value noise on a coarse lattice
Image::Plane value_noise(int size, int cell, std::mt19937_64& rng) {
  const int n = size / cell + 2;
  Eigen::ArrayXXf lattice(n, n);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) lattice(i, j) = u(rng);
  Image::Plane out(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const float y = float(i) / cell, x = float(j) / cell;
      const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
      const float fy = y - y0, fx = x - x0;
      const float sy = fy * fy * (3 - 2 * fy), sx = fx * fx * (3 - 2 * fx);
      out(i, j) = lattice(y0, x0) * (1 - sy) * (1 - sx) +
                  lattice(y0, x0 + 1) * (1 - sy) * sx +
                  lattice(y0 + 1, x0) * sy * (1 - sx) +
                  lattice(y0 + 1, x0 + 1) * sy * sx;
    }
  return out;
}

}  // namespace

std::vector<std::string> gen_procedural_corpus(const std::string& dir, int n,
                                               int size, uint64_t seed) {
  if (n < 1) throw ValidationError("gen_procedural_corpus: n must be >= 1");
  if (size < 16) throw ValidationError("gen_procedural_corpus: size too small");
  fs::create_directories(dir);
  std::vector<std::string> paths;
  for (int idx = 0; idx < n; ++idx) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(idx)));
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image im(size, size);

    // gradient background with a random direction per channel family
    const float gx = u(rng) * 2 - 1, gy = u(rng) * 2 - 1;
    float base[3] = {0.2f + 0.6f * u(rng), 0.2f + 0.6f * u(rng),
                     0.2f + 0.6f * u(rng)};
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
          im.ch[static_cast<size_t>(c)](i, j) =
              base[c] + 0.3f * (gx * (float(j) / size - 0.5f) +
                                gy * (float(i) / size - 0.5f));

    // textured octaves
    auto coarse = value_noise(size, std::max(4, size / 6), rng);
    auto fine = value_noise(size, std::max(2, size / 16), rng);
    for (int c = 0; c < 3; ++c)
      im.ch[static_cast<size_t>(c)] +=
          0.25f * (coarse - 0.5f) + 0.12f * (fine - 0.5f);

    // geometric shapes: filled circles and rectangles
    const int n_shapes = 2 + static_cast<int>(u(rng) * 4);
    for (int s = 0; s < n_shapes; ++s) {
      float col[3] = {u(rng), u(rng), u(rng)};
      if (u(rng) < 0.5f) {
        const float cy = u(rng) * size, cx = u(rng) * size;
        const float r = (0.05f + 0.15f * u(rng)) * size;
        for (int i = 0; i < size; ++i)
          for (int j = 0; j < size; ++j)
            if ((i - cy) * (i - cy) + (j - cx) * (j - cx) < r * r)
              for (int c = 0; c < 3; ++c)
                im.ch[static_cast<size_t>(c)](i, j) =
                    0.5f * im.ch[static_cast<size_t>(c)](i, j) + 0.5f * col[c];
      } else {
        const int h = 4 + static_cast<int>(u(rng) * size / 3);
        const int w = 4 + static_cast<int>(u(rng) * size / 3);
        const int y0 = static_cast<int>(u(rng) * (size - h));
        const int x0 = static_cast<int>(u(rng) * (size - w));
        for (int c = 0; c < 3; ++c)
          im.ch[static_cast<size_t>(c)].block(y0, x0, h, w) =
              0.5f * im.ch[static_cast<size_t>(c)].block(y0, x0, h, w) +
              0.5f * col[c];
      }
    }
    im.clamp01();
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.png", idx);
    const std::string path = (fs::path(dir) / name).string();
    write_png(path, im);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace dcpt
