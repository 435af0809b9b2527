#include "dcpt/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dcpt/model_io.hpp"
#include "dcpt/pretrain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dcpt {

double cosine_lr(long step, long total, double lr0, double lr_min) {
  if (step < 0 || total <= 0) throw ValidationError("cosine_lr: bad arguments");
  if (step > total) return lr_min;
  return lr_min + 0.5 * (lr0 - lr_min) *
                      (1.0 + std::cos(M_PI * double(step) / double(total)));
}

FinetuneState FinetuneState::init(const FinetuneConfig& cfg) {
  cfg.validate();
  FinetuneState st;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xf17e));
  st.encoder = Encoder<float>(cfg.encoder, rng);
  st.run_seed = cfg.seed;

  if (cfg.init == InitMode::DcptCheckpoint || cfg.init == InitMode::SourceTask) {
    ArrayStore store = ArrayStore::load(cfg.init_checkpoint);
    json meta = load_metadata(cfg.init_checkpoint);
    EncoderConfig saved = encoder_config_from_json(meta.at("encoder"));
    if (saved.blocks != cfg.encoder.blocks ||
        saved.channels != cfg.encoder.channels)
      throw ConfigError("init checkpoint encoder config does not match");
    load_model(store, st.encoder);
  }
  if (cfg.dc_guided) {
    json meta = load_metadata(cfg.decoder_checkpoint);
    auto classes = meta.at("classes").get<std::vector<std::string>>();
    if (classes.empty() || classes[0] != "clean")
      throw ConfigError(
          "dc_guided decoder checkpoint must list class 0 = clean");
    EncoderConfig enc_saved = encoder_config_from_json(meta.at("encoder"));
    if (enc_saved.channels != cfg.encoder.channels ||
        enc_saved.blocks != cfg.encoder.blocks)
      throw ConfigError("frozen decoder expects a different encoder config");
    DecoderConfig dcfg = decoder_config_from_json(meta.at("decoder"));
    std::mt19937_64 drng(1);
    st.frozen_decoder = Decoder<float>(dcfg, cfg.encoder, drng);
    ArrayStore store = ArrayStore::load(cfg.decoder_checkpoint);
    load_model(store, *st.frozen_decoder);
    st.frozen_decoder->set_trainable(false);
    st.decoder_classes = classes;
  }
  st.opt = nn::AdamW<float>(st.encoder.params(), float(cfg.lr0));
  return st;
}

void FinetuneState::save(const std::string& path,
                         const FinetuneConfig& cfg) const {
  ArrayStore store;
  store_model(store, encoder);
  store_opt(store, "opt.encoder", encoder, const_cast<nn::AdamW<float>&>(opt));
  store.save(path);
  json meta;
  meta["kind"] = "finetune";
  meta["encoder"] = encoder_config_json(encoder.config());
  meta["step"] = step;
  meta["run_seed"] = run_seed;
  meta["opt_steps"] = opt.step_count();
  meta["config"] = {{"init", static_cast<int>(cfg.init)},
                    {"init_checkpoint", cfg.init_checkpoint},
                    {"lr0", cfg.lr0},
                    {"lr_min", cfg.lr_min},
                    {"iterations", cfg.iterations},
                    {"batch_size", cfg.batch_size},
                    {"patch_size", cfg.patch_size},
                    {"alpha", cfg.loss_weights.alpha},
                    {"dc_guided", cfg.dc_guided},
                    {"decoder_checkpoint", cfg.decoder_checkpoint},
                    {"classify_restored", cfg.classify_restored},
                    {"augment_flip", cfg.augment_flip},
                    {"eval_fraction", cfg.eval_fraction},
                    {"seed", cfg.seed}};
  save_metadata(path, meta);
}

FinetuneState FinetuneState::load(const std::string& path,
                                  FinetuneConfig& cfg_out) {
  json meta = load_metadata(path);
  if (meta.value("kind", "") != "finetune")
    throw ValidationError("not a finetune checkpoint: " + path);
  FinetuneConfig cfg;
  cfg.encoder = encoder_config_from_json(meta.at("encoder"));
  const json& jc = meta.at("config");
  cfg.init = static_cast<InitMode>(jc.at("init").get<int>());
  cfg.init_checkpoint = jc.at("init_checkpoint").get<std::string>();
  cfg.lr0 = jc.at("lr0").get<double>();
  cfg.lr_min = jc.at("lr_min").get<double>();
  cfg.iterations = jc.at("iterations").get<long>();
  cfg.batch_size = jc.at("batch_size").get<int>();
  cfg.patch_size = jc.at("patch_size").get<int>();
  cfg.loss_weights.alpha = jc.at("alpha").get<double>();
  cfg.dc_guided = jc.at("dc_guided").get<bool>();
  cfg.decoder_checkpoint = jc.at("decoder_checkpoint").get<std::string>();
  cfg.classify_restored = jc.at("classify_restored").get<bool>();
  cfg.augment_flip = jc.at("augment_flip").get<bool>();
  cfg.eval_fraction = jc.at("eval_fraction").get<double>();
  cfg.seed = jc.at("seed").get<uint64_t>();

  FinetuneState st = FinetuneState::init(cfg);
  ArrayStore store = ArrayStore::load(path);
  load_model(store, st.encoder);
  load_opt(store, "opt.encoder", st.encoder, st.opt);
  st.opt.set_step_count(meta.at("opt_steps").get<long>());
  st.step = meta.at("step").get<long>();
  cfg_out = cfg;
  return st;
}

FinetuneMetrics finetune_step(FinetuneState& state,
                              const std::vector<PatchSample>& batch,
                              const FinetuneConfig& cfg) {
  if (batch.empty()) throw ValidationError("finetune_step: empty batch");
  std::vector<Image> clean, degraded;
  for (const auto& s : batch) {
    clean.push_back(s.clean);
    degraded.push_back(s.degraded);
  }
  auto clean_t = batch_to_tensor<float>(clean);
  auto degraded_t = batch_to_tensor<float>(degraded);

  FinetuneMetrics m;
  m.lr = cosine_lr(state.step, cfg.iterations, cfg.lr0, cfg.lr_min);
  state.opt.set_lr(float(m.lr));

  auto input = nn::constant(degraded_t);
  const bool need_hooks = cfg.dc_guided && !cfg.classify_restored;
  auto out = state.encoder.forward(input, /*hooks=*/need_hooks);
  auto l_pix = nn::l1_loss(*out.restored, clean_t);
  m.l_pix = double(l_pix->val.data[0]);
  auto l_total = nn::scale_const(l_pix, float(cfg.loss_weights.alpha));

  if (cfg.dc_guided) {
    if (!state.frozen_decoder)
      throw ConfigError("dc_guided step without a frozen decoder");
    const int class_count = state.frozen_decoder->config().class_count;
    // degraded (or restored) branch, labeled with the sample class
    nn::Var<float> deg_logits;
    if (cfg.classify_restored) {
      auto rest_out = state.encoder.forward(out.restored.value(), /*hooks=*/true,
                                            /*with_restored=*/false);
      auto scaled = state.encoder.scale_features(*rest_out.pyramid);
      deg_logits = state.frozen_decoder->forward(out.restored.value(), scaled);
    } else {
      auto scaled = state.encoder.scale_features(*out.pyramid);
      deg_logits = state.frozen_decoder->forward(input, scaled);
    }
    // clean branch, labeled class 0; same count as the degraded branch
    auto gt_in = nn::constant(clean_t);
    auto gt_out = state.encoder.forward(gt_in, /*hooks=*/true,
                                        /*with_restored=*/false);
    auto gt_scaled = state.encoder.scale_features(*gt_out.pyramid);
    auto gt_logits = state.frozen_decoder->forward(gt_in, gt_scaled);

    auto deg_targets = label_batch(batch, class_count);
    std::vector<int> clean_targets(batch.size(), 0);
    auto ce = nn::add(cross_entropy_node<float>(deg_logits, deg_targets),
                      cross_entropy_node<float>(gt_logits, clean_targets));
    ce = nn::scale_const(ce, 0.5f);
    m.l_ce = double(ce->val.data[0]);
    l_total = nn::add(l_total, ce);
  }
  m.l_total = double(l_total->val.data[0]);
  if (!std::isfinite(m.l_total))
    throw NumericError("finetune_step: non-finite loss");
  nn::backward(l_total);
  state.opt.step();
  state.step += 1;
  return m;
}

void split_manifest(const Manifest& manifest, double eval_fraction,
                    std::vector<int>& train_idx, std::vector<int>& eval_idx) {
  train_idx.clear();
  eval_idx.clear();
  const int period =
      eval_fraction > 0 ? std::max(2, static_cast<int>(std::lround(1.0 / eval_fraction)))
                        : 0;
  for (int i = 0; i < static_cast<int>(manifest.entries.size()); ++i) {
    if (period > 0 && i % period == period - 1)
      eval_idx.push_back(i);
    else
      train_idx.push_back(i);
  }
  if (train_idx.empty()) throw ConfigError("empty training split");
}

EvalReport evaluate_restoration(const Encoder<float>& encoder,
                                const Manifest& manifest,
                                const std::vector<int>& entry_indices,
                                int patch_size, uint64_t seed,
                                const std::string& task, long step) {
  EvalReport rep;
  rep.task = task;
  rep.split = "eval";
  rep.step = step;
  std::map<std::string, std::pair<double, int>> per_class;
  double psnr_acc = 0, ssim_acc = 0;
  int n = 0;
  for (int idx : entry_indices) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(idx)));
    PatchSample s = sample_patch(manifest, idx, patch_size, rng);
    auto in = nn::constant(batch_to_tensor<float>({s.degraded}));
    auto out = encoder.forward(in, /*hooks=*/false);
    Image restored = tensor_to_batch<float>(out.restored.value()->val)[0];
    const double p = psnr(restored, s.clean);
    const double sv = ssim(restored, s.clean);
    psnr_acc += std::isinf(p) ? 100.0 : p;  // cap the identity sentinel
    ssim_acc += sv;
    auto& pc = per_class[manifest.entries[static_cast<size_t>(idx)].label];
    pc.first += std::isinf(p) ? 100.0 : p;
    pc.second += 1;
    ++n;
  }
  if (n == 0) throw ConfigError("evaluation split is empty");
  rep.psnr = psnr_acc / n;
  rep.ssim = ssim_acc / n;
  rep.samples = n;
  for (auto& [k, v] : per_class) rep.psnr_per_class[k] = v.first / v.second;
  return rep;
}

EvalReport run_finetune(const FinetuneConfig& cfg_in, const Manifest& manifest,
                        const std::string& run_dir,
                        const std::string& resume_from) {
  FinetuneConfig cfg = cfg_in;
  cfg.validate();
  manifest.validate();
  fs::create_directories(run_dir);

  FinetuneState state;
  if (!resume_from.empty()) {
    FinetuneConfig saved;
    state = FinetuneState::load(resume_from, saved);
    cfg = saved;
  } else {
    state = FinetuneState::init(cfg);
  }

  std::vector<int> train_idx, eval_idx;
  split_manifest(manifest, cfg.eval_fraction, train_idx, eval_idx);
  const auto schedule = [&] {
    // schedule over the training split only, honoring repeat weights
    std::vector<int> sched;
    for (int i : train_idx)
      for (int r = 0; r < manifest.entries[static_cast<size_t>(i)].repeat_weight; ++r)
        sched.push_back(i);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x5c4ed));
    std::shuffle(sched.begin(), sched.end(), rng);
    return sched;
  }();

  std::ofstream trace(fs::path(run_dir) / "trace.jsonl",
                      resume_from.empty() ? std::ios::trunc : std::ios::app);
  for (long step = state.step; step < cfg.iterations; ++step) {
    std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, 0xba7c4), static_cast<uint64_t>(step)));
    std::vector<PatchSample> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const long pos = step * cfg.batch_size + b;
      batch.push_back(sample_patch(
          manifest, schedule[static_cast<size_t>(pos % static_cast<long>(schedule.size()))],
          cfg.patch_size, rng, cfg.augment_flip));
    }
    FinetuneMetrics m = finetune_step(state, batch, cfg);
    json rec = {{"step", step},
                {"l_pix", m.l_pix},
                {"l_ce", m.l_ce},
                {"l_total", m.l_total},
                {"lr", m.lr}};
    trace << rec.dump() << "\n";
  }
  trace.close();

  const std::string ckpt = (fs::path(run_dir) / "final.ckpt").string();
  state.save(ckpt, cfg);

  EvalReport rep = evaluate_restoration(
      state.encoder, manifest, eval_idx.empty() ? train_idx : eval_idx,
      cfg.patch_size, mix_seed(cfg.seed, 0xeba1), "restoration", state.step);
  json jr = {{"task", rep.task},   {"split", rep.split},
             {"psnr", rep.psnr},   {"ssim", rep.ssim},
             {"step", rep.step},   {"samples", rep.samples},
             {"psnr_per_class", rep.psnr_per_class}};
  std::ofstream rf(fs::path(run_dir) / "report.json");
  rf << jr.dump(2) << "\n";
  return rep;
}

}  // namespace dcpt
