#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dcpt/data.hpp"
#include "dcpt/losses.hpp"
#include "dcpt/models.hpp"
#include "dcpt/nn/optim.hpp"

namespace dcpt {

struct DCPTConfig {
  double encoder_lr = 3e-4;
  double decoder_lr = 1e-4;
  long iterations = 2000;  // desk default; reference setting is 100k
  int batch_size = 16;
  int patch_size = 48;
  LossWeights loss_weights;  // alpha on the pixel term
  FocalParams focal;
  bool enable_generation_stage = true;      // S_G
  bool enable_classification_stage = true;  // S_DC
  bool multi_level = true;
  bool dc_train_mode = false;  // generation stage consumes degraded inputs
  bool strict_alternation = false;  // separate backward+step per stage
  double clean_fraction = -1;  // < 0: defaults to 1/(K+1)
  uint64_t seed = 0;
  long checkpoint_every = 0;  // 0: every 10% of iterations
  EncoderConfig encoder;
  DecoderConfig decoder;  // class_count is overwritten from the manifest

  void validate() const {
    if (!enable_generation_stage && !enable_classification_stage)
      throw ConfigError("at least one pre-training stage must be enabled");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
  }
};

// The unit of checkpointing: both models, both optimizer states, the step
// counter and the run seed.
struct TrainState {
  Encoder<float> encoder;
  Decoder<float> decoder;
  nn::AdamW<float> opt_encoder;
  nn::AdamW<float> opt_decoder;
  long step = 0;
  uint64_t run_seed = 0;
  std::vector<std::string> classes;

  static TrainState init(const DCPTConfig& cfg,
                         const std::vector<std::string>& classes);
  void save(const std::string& path, const DCPTConfig& cfg) const;
  static TrainState load(const std::string& path, DCPTConfig& cfg_out);
};

struct StepMetrics {
  double l_pix = 0;
  double l_cls = 0;
  double l_total = 0;
  double decoder_accuracy = 0;  // on the classification batch
};

// Per-term encoder/decoder gradient norms, measured by separate backward
// passes over the same batch.
struct GradAudit {
  double decoder_from_pix = 0;
  double decoder_from_cls = 0;
  double encoder_from_pix = 0;
  double encoder_from_cls = 0;
};

// One combined iteration: generation stage on clean inputs, classification
// stage on degraded inputs, single backward, both optimizers step.
StepMetrics dcpt_step(TrainState& state, const std::vector<PatchSample>& batch,
                      const DCPTConfig& cfg, GradAudit* audit = nullptr);

// Maps sample labels to class indices; the manifest/checkpoint class order
// is authoritative.
std::vector<int> label_batch(const std::vector<PatchSample>& batch,
                             int class_count);

// Deterministic batch assembly for a given step: schedule-driven entries
// with a clean fraction relabeled to class 0.
std::vector<PatchSample> make_pretrain_batch(const Manifest& manifest,
                                             const std::vector<int>& schedule,
                                             long step, const DCPTConfig& cfg);

// Full loop: trace JSONL + periodic checkpoints under run_dir. Returns the
// final checkpoint path. If `resume_from` is set, continues that run.
std::string run_pretrain(const DCPTConfig& cfg, const Manifest& manifest,
                         const std::string& run_dir,
                         const std::string& resume_from = "");

}  // namespace dcpt
