#include "dcpt/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>

#include "dcpt/png_io.hpp"

namespace dcpt {

FeatureVector extract_feature(const Encoder<float>& encoder, const Image& image,
                              const ProbeConfig& cfg) {
  cfg.validate();
  if (image.height() < cfg.crop || image.width() < cfg.crop)
    throw ValidationError("probe: image smaller than crop size");
  Image crop = image.center_crop(cfg.crop);
  auto in = nn::constant(batch_to_tensor<float>({crop}));
  auto out = encoder.forward(in, /*hooks=*/false, /*with_restored=*/false);
  const auto& t = out.deepest->val;
  FeatureVector v(t.numel());
  for (long i = 0; i < t.numel(); ++i) v[i] = t.data[i];
  if (!v.array().isFinite().all())
    throw NumericError("probe: non-finite feature vector");
  return v;
}

int knn_classify(const std::vector<FeatureVector>& train,
                 const std::vector<int>& labels, const FeatureVector& query,
                 int k) {
  if (train.empty()) throw ValidationError("knn: empty training set");
  if (k < 1) throw ValidationError("knn: k must be >= 1");
  k = std::min(k, static_cast<int>(train.size()));
  if (labels.size() != train.size())
    throw ValidationError("knn: label count mismatch");
  const long D = query.size();
  std::vector<std::pair<double, int>> dist;  // (distance, train index)
  dist.reserve(train.size());
  for (size_t i = 0; i < train.size(); ++i) {
    if (train[i].size() != D)
      throw ValidationError("knn: feature dimension mismatch");
    dist.emplace_back((train[i].cast<double>() - query.cast<double>()).norm(),
                      static_cast<int>(i));
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  // majority vote; ties by smallest mean distance, then lowest class index
  std::map<int, std::pair<int, double>> votes;  // class -> (count, dist sum)
  for (int i = 0; i < k; ++i) {
    auto& v = votes[labels[static_cast<size_t>(dist[static_cast<size_t>(i)].second)]];
    v.first += 1;
    v.second += dist[static_cast<size_t>(i)].first;
  }
  int best = -1;
  int best_count = -1;
  double best_mean = 0;
  for (const auto& [cls, cv] : votes) {
    const double mean = cv.second / cv.first;
    if (cv.first > best_count ||
        (cv.first == best_count && mean < best_mean)) {
      best = cls;
      best_count = cv.first;
      best_mean = mean;
    }
    // equal count and equal mean: keep the lower class index (map order)
  }
  return best;
}

ProbeDataset build_probe_dataset(const Encoder<float>& encoder,
                                 const Manifest& manifest,
                                 const ProbeConfig& cfg, uint64_t gen_seed) {
  cfg.validate();
  ProbeDataset ds;
  // probed classes are the degradation kinds (index 1..K in the manifest)
  for (size_t i = 1; i < manifest.classes.size(); ++i)
    ds.classes.push_back(manifest.classes[i]);
  if (ds.classes.size() < 2)
    throw ValidationError("probe needs >= 2 classes");

  // collect clean paths per kind from the manifest
  std::map<std::string, std::vector<const ManifestEntry*>> by_kind;
  for (const auto& e : manifest.entries)
    if (e.label != "clean") by_kind[e.label].push_back(&e);

  for (size_t ci = 0; ci < ds.classes.size(); ++ci) {
    const auto& kind = ds.classes[ci];
    auto it = by_kind.find(kind);
    if (it == by_kind.end() || it->second.empty())
      throw ValidationError("probe: class '" + kind + "' has no samples");
    const auto& entries = it->second;
    // cycle the clean sources with fresh sub-seeds until per_class is met
    for (int s = 0; s < cfg.per_class; ++s) {
      const auto& e = *entries[static_cast<size_t>(s) % entries.size()];
      Image clean = read_png(e.clean_path);
      if (clean.height() < cfg.crop || clean.width() < cfg.crop)
        clean = resize_bicubic(clean, std::max(clean.height(), cfg.crop),
                               std::max(clean.width(), cfg.crop));
      Image degraded;
      if (e.degraded_path) {
        degraded = read_png(*e.degraded_path);
      } else {
        DegradationSpec spec = sample_spec(kind_from_name(kind), e.seed);
        spec.seed = mix_seed(spec.seed, mix_seed(gen_seed, static_cast<uint64_t>(s)));
        degraded = apply(spec, clean);
      }
      ds.features.push_back(extract_feature(encoder, degraded, cfg));
      ds.labels.push_back(static_cast<int>(ci));
    }
  }
  return ds;
}

ProbeResult probe_accuracy(const ProbeDataset& data, const ProbeConfig& cfg,
                           const std::vector<uint64_t>& seeds) {
  cfg.validate();
  if (seeds.empty()) throw ValidationError("probe: seeds must be nonempty");
  const int n_classes =
      data.classes.empty()
          ? (*std::max_element(data.labels.begin(), data.labels.end()) + 1)
          : static_cast<int>(data.classes.size());
  std::vector<std::vector<int>> per_class(static_cast<size_t>(n_classes));
  for (size_t i = 0; i < data.labels.size(); ++i)
    per_class[static_cast<size_t>(data.labels[i])].push_back(static_cast<int>(i));
  int min_count = INT32_MAX;
  for (const auto& v : per_class) {
    if (static_cast<int>(v.size()) < 3)
      throw ValidationError("probe: class with < 3 samples");
    min_count = std::min(min_count, static_cast<int>(v.size()));
  }
  // stratified 2:1 with identical per-class counts
  const int n_train = (min_count * 2) / 3;
  const int n_test = min_count - n_train;

  ProbeResult res;
  res.classes = data.classes;
  res.confusion.assign(static_cast<size_t>(n_classes),
                       std::vector<long>(static_cast<size_t>(n_classes), 0));
  for (uint64_t seed : seeds) {
    std::mt19937_64 rng(seed);
    std::vector<FeatureVector> train;
    std::vector<int> train_labels;
    std::vector<std::pair<int, int>> test;  // (dataset index, label)
    for (int c = 0; c < n_classes; ++c) {
      auto idx = per_class[static_cast<size_t>(c)];
      std::shuffle(idx.begin(), idx.end(), rng);
      for (int i = 0; i < n_train; ++i) {
        train.push_back(data.features[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
        train_labels.push_back(c);
      }
      for (int i = n_train; i < n_train + n_test; ++i)
        test.emplace_back(idx[static_cast<size_t>(i)], c);
    }
    std::vector<FeatureVector> train_used = train;
    std::optional<Eigen::VectorXf> mu, sd;
    if (cfg.standardize) {
      const long D = train[0].size();
      Eigen::VectorXd m = Eigen::VectorXd::Zero(D), s2 = Eigen::VectorXd::Zero(D);
      for (const auto& f : train) m += f.cast<double>();
      m /= double(train.size());
      for (const auto& f : train)
        s2 += (f.cast<double>() - m).array().square().matrix();
      s2 = (s2 / double(train.size())).array().sqrt().max(1e-8).matrix();
      mu = m.cast<float>();
      sd = s2.cast<float>();
      for (auto& f : train_used)
        f = ((f - *mu).array() / sd->array()).matrix();
    }
    const int k = std::min<int>(cfg.k, static_cast<int>(train_used.size()));
    long correct = 0;
    for (const auto& [di, label] : test) {
      FeatureVector q = data.features[static_cast<size_t>(di)];
      if (cfg.standardize) q = ((q - *mu).array() / sd->array()).matrix();
      const int pred = knn_classify(train_used, train_labels, q, k);
      res.confusion[static_cast<size_t>(label)][static_cast<size_t>(pred)] += 1;
      if (pred == label) ++correct;
    }
    res.per_seed_acc.push_back(double(correct) / double(test.size()));
  }
  double mean = std::accumulate(res.per_seed_acc.begin(), res.per_seed_acc.end(), 0.0) /
                double(res.per_seed_acc.size());
  double var = 0;
  for (double a : res.per_seed_acc) var += (a - mean) * (a - mean);
  var /= double(res.per_seed_acc.size());
  res.mean_acc = mean;
  res.std_acc = std::sqrt(var);
  return res;
}

void export_embeddings(const ProbeDataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write embeddings to " + path);
  f << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (size_t i = 0; i < data.features.size(); ++i) {
    f << data.labels[i];
    const auto& v = data.features[i];
    for (long j = 0; j < v.size(); ++j) f << " " << v[j];
    f << "\n";
  }
  if (!f) throw ValidationError("I/O error writing " + path);
}

}  // namespace dcpt
