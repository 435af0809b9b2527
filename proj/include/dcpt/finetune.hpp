#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcpt/data.hpp"
#include "dcpt/losses.hpp"
#include "dcpt/metrics.hpp"
#include "dcpt/models.hpp"
#include "dcpt/nn/optim.hpp"

namespace dcpt {

enum class InitMode { Scratch, DcptCheckpoint, SourceTask };

struct FinetuneConfig {
  InitMode init = InitMode::Scratch;
  std::string init_checkpoint;  // dcpt or source-task checkpoint path
  double lr0 = 3e-4;
  double lr_min = 1e-6;
  long iterations = 5000;  // desk default; transfer default 2000
  int batch_size = 16;
  int patch_size = 48;
  LossWeights loss_weights;
  bool dc_guided = false;
  std::string decoder_checkpoint;  // frozen decoder, required when dc_guided
  bool classify_restored = false;  // feed restored output to the decoder
  bool augment_flip = true;
  double eval_fraction = 0.2;  // held-out split of the manifest
  uint64_t seed = 0;
  EncoderConfig encoder;

  void validate() const {
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (dc_guided && decoder_checkpoint.empty())
      throw ConfigError("dc_guided requires a frozen decoder checkpoint");
    if ((init == InitMode::DcptCheckpoint || init == InitMode::SourceTask) &&
        init_checkpoint.empty())
      throw ConfigError("init mode requires a checkpoint path");
  }
};

// lr_min + 0.5 (lr0 - lr_min)(1 + cos(pi step/total)); clamps past total.
double cosine_lr(long step, long total, double lr0, double lr_min);

struct FinetuneState {
  Encoder<float> encoder;
  std::optional<Decoder<float>> frozen_decoder;
  std::vector<std::string> decoder_classes;
  nn::AdamW<float> opt;
  long step = 0;
  uint64_t run_seed = 0;

  static FinetuneState init(const FinetuneConfig& cfg);
  void save(const std::string& path, const FinetuneConfig& cfg) const;
  static FinetuneState load(const std::string& path, FinetuneConfig& cfg_out);
};

struct FinetuneMetrics {
  double l_pix = 0;
  double l_ce = 0;
  double l_total = 0;
  double lr = 0;
};

// Plain mode: L1 on the restored output. DC-guided mode: additionally a
// cross-entropy term from the frozen decoder over paired clean/degraded
// inputs (equal counts, clean -> class 0).
FinetuneMetrics finetune_step(FinetuneState& state,
                              const std::vector<PatchSample>& batch,
                              const FinetuneConfig& cfg);

struct EvalReport {
  std::string task;
  std::string split;
  double psnr = 0;
  double ssim = 0;
  long step = 0;
  int samples = 0;
  std::map<std::string, double> psnr_per_class;
};

// Restores each sample with the encoder and aggregates PSNR/SSIM.
EvalReport evaluate_restoration(const Encoder<float>& encoder,
                                const Manifest& manifest,
                                const std::vector<int>& entry_indices,
                                int patch_size, uint64_t seed,
                                const std::string& task, long step);

// Trains, evaluates on the held-out split, writes trace/checkpoint/report
// under run_dir. Returns the report.
EvalReport run_finetune(const FinetuneConfig& cfg, const Manifest& manifest,
                        const std::string& run_dir,
                        const std::string& resume_from = "");

// Deterministic train/eval split of manifest entry indices.
void split_manifest(const Manifest& manifest, double eval_fraction,
                    std::vector<int>& train_idx, std::vector<int>& eval_idx);

}  // namespace dcpt
