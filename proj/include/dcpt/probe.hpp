#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dcpt/data.hpp"
#include "dcpt/models.hpp"

namespace dcpt {

struct ProbeConfig {
  int crop = 48;  // center-crop size; reference setting is 128
  int k = 5;
  bool standardize = false;  // per-feature standardization before distances
  int per_class = 100;       // samples generated per degradation class

  void validate() const {
    if (crop < 16 || crop % 16 != 0)
      throw ConfigError("probe crop must be >= 16 and divisible by 16");
    if (k < 1) throw ConfigError("probe k must be >= 1");
    if (per_class < 3) throw ConfigError("probe needs >= 3 samples per class");
  }
};

using FeatureVector = Eigen::VectorXf;

// Deterministic center crop -> encoder forward -> flattened deepest feature
// (the output before the restoration head).
FeatureVector extract_feature(const Encoder<float>& encoder, const Image& image,
                              const ProbeConfig& cfg);

// Majority vote among the k Euclidean nearest neighbors, uniform weights.
// Ties: smallest mean distance, then lowest class index.
int knn_classify(const std::vector<FeatureVector>& train,
                 const std::vector<int>& labels, const FeatureVector& query,
                 int k);

struct ProbeResult {
  double mean_acc = 0;
  double std_acc = 0;
  std::vector<double> per_seed_acc;
  std::vector<std::string> classes;  // probed kinds, label order
  // confusion[i][j]: true class i predicted as j, summed over seeds
  std::vector<std::vector<long>> confusion;
};

// Labeled feature dataset: one feature per (kind, sample) pair, degradations
// synthesized from the manifest's clean images.
struct ProbeDataset {
  std::vector<FeatureVector> features;
  std::vector<int> labels;
  std::vector<std::string> classes;
};

ProbeDataset build_probe_dataset(const Encoder<float>& encoder,
                                 const Manifest& manifest,
                                 const ProbeConfig& cfg, uint64_t gen_seed);

// For each seed: stratified 2:1 train/test split, fit, evaluate.
ProbeResult probe_accuracy(const ProbeDataset& data, const ProbeConfig& cfg,
                           const std::vector<uint64_t>& seeds);

// Line-delimited numeric text: label then feature components.
void export_embeddings(const ProbeDataset& data, const std::string& path);

}  // namespace dcpt
