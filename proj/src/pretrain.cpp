#include "dcpt/pretrain.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dcpt/model_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dcpt {

namespace {

double grad_norm(const std::vector<nn::Var<float>>& params) {
  double acc = 0;
  for (const auto& p : params)
    if (p->grad.numel() == p->val.numel())
      acc += double(p->grad.data.square().sum());
  return std::sqrt(acc);
}

void clear_grads(const std::vector<nn::Var<float>>& params) {
  for (const auto& p : params) p->grad = nn::Tensor<float>{};
}

int argmax_row(const nn::Tensor<float>& logits, int row) {
  const int K = logits.dim(1);
  int best = 0;
  for (int j = 1; j < K; ++j)
    if (logits.data[static_cast<long>(row) * K + j] >
        logits.data[static_cast<long>(row) * K + best])
      best = j;
  return best;
}

}  // namespace

TrainState TrainState::init(const DCPTConfig& cfg,
                            const std::vector<std::string>& classes) {
  cfg.validate();
  TrainState st;
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x11117));
  DecoderConfig dcfg = cfg.decoder;
  dcfg.class_count = static_cast<int>(classes.size());
  st.encoder = Encoder<float>(cfg.encoder, rng);
  st.decoder = Decoder<float>(dcfg, cfg.encoder, rng);
  st.opt_encoder = nn::AdamW<float>(st.encoder.params(), float(cfg.encoder_lr));
  st.opt_decoder = nn::AdamW<float>(st.decoder.params(), float(cfg.decoder_lr));
  st.run_seed = cfg.seed;
  st.classes = classes;
  return st;
}

void TrainState::save(const std::string& path, const DCPTConfig& cfg) const {
  ArrayStore store;
  store_model(store, encoder);
  store_model(store, decoder);
  store_opt(store, "opt.encoder", encoder,
            const_cast<nn::AdamW<float>&>(opt_encoder));
  store_opt(store, "opt.decoder", decoder,
            const_cast<nn::AdamW<float>&>(opt_decoder));
  store.save(path);
  json meta;
  meta["kind"] = "dcpt";
  meta["encoder"] = encoder_config_json(encoder.config());
  meta["decoder"] = decoder_config_json(decoder.config());
  meta["classes"] = classes;
  meta["step"] = step;
  meta["run_seed"] = run_seed;
  meta["opt_encoder_steps"] = opt_encoder.step_count();
  meta["opt_decoder_steps"] = opt_decoder.step_count();
  meta["config"] = {{"encoder_lr", cfg.encoder_lr},
                    {"decoder_lr", cfg.decoder_lr},
                    {"iterations", cfg.iterations},
                    {"batch_size", cfg.batch_size},
                    {"patch_size", cfg.patch_size},
                    {"alpha", cfg.loss_weights.alpha},
                    {"focal_gamma", cfg.focal.gamma},
                    {"focal_alpha_t", cfg.focal.alpha_t},
                    {"enable_generation_stage", cfg.enable_generation_stage},
                    {"enable_classification_stage", cfg.enable_classification_stage},
                    {"multi_level", cfg.multi_level},
                    {"dc_train_mode", cfg.dc_train_mode},
                    {"strict_alternation", cfg.strict_alternation},
                    {"clean_fraction", cfg.clean_fraction},
                    {"seed", cfg.seed},
                    {"checkpoint_every", cfg.checkpoint_every}};
  save_metadata(path, meta);
}

TrainState TrainState::load(const std::string& path, DCPTConfig& cfg_out) {
  json meta = load_metadata(path);
  if (meta.value("kind", "") != "dcpt")
    throw ValidationError("not a dcpt checkpoint: " + path);
  DCPTConfig cfg;
  cfg.encoder = encoder_config_from_json(meta.at("encoder"));
  cfg.decoder = decoder_config_from_json(meta.at("decoder"));
  const json& jc = meta.at("config");
  cfg.encoder_lr = jc.at("encoder_lr").get<double>();
  cfg.decoder_lr = jc.at("decoder_lr").get<double>();
  cfg.iterations = jc.at("iterations").get<long>();
  cfg.batch_size = jc.at("batch_size").get<int>();
  cfg.patch_size = jc.at("patch_size").get<int>();
  cfg.loss_weights.alpha = jc.at("alpha").get<double>();
  cfg.focal.gamma = jc.at("focal_gamma").get<double>();
  cfg.focal.alpha_t = jc.at("focal_alpha_t").get<double>();
  cfg.enable_generation_stage = jc.at("enable_generation_stage").get<bool>();
  cfg.enable_classification_stage =
      jc.at("enable_classification_stage").get<bool>();
  cfg.multi_level = jc.at("multi_level").get<bool>();
  cfg.dc_train_mode = jc.at("dc_train_mode").get<bool>();
  cfg.strict_alternation = jc.at("strict_alternation").get<bool>();
  cfg.clean_fraction = jc.at("clean_fraction").get<double>();
  cfg.seed = jc.at("seed").get<uint64_t>();
  cfg.checkpoint_every = jc.at("checkpoint_every").get<long>();

  TrainState st = TrainState::init(cfg, meta.at("classes").get<std::vector<std::string>>());
  ArrayStore store = ArrayStore::load(path);
  load_model(store, st.encoder);
  load_model(store, st.decoder);
  load_opt(store, "opt.encoder", st.encoder, st.opt_encoder);
  load_opt(store, "opt.decoder", st.decoder, st.opt_decoder);
  st.opt_encoder.set_step_count(meta.at("opt_encoder_steps").get<long>());
  st.opt_decoder.set_step_count(meta.at("opt_decoder_steps").get<long>());
  st.step = meta.at("step").get<long>();
  st.run_seed = meta.at("run_seed").get<uint64_t>();
  cfg_out = cfg;
  return st;
}

std::vector<int> label_batch(const std::vector<PatchSample>& batch,
                             int class_count) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    if (s.label < 0 || s.label >= class_count)
      throw ValidationError("sample label " + std::to_string(s.label) +
                            " outside class range [0, " +
                            std::to_string(class_count - 1) + "]");
    out.push_back(s.label);
  }
  return out;
}

std::vector<PatchSample> make_pretrain_batch(const Manifest& manifest,
                                             const std::vector<int>& schedule,
                                             long step, const DCPTConfig& cfg) {
  if (schedule.empty()) throw ConfigError("empty sampler schedule");
  const int K = static_cast<int>(manifest.classes.size()) - 1;
  double frac = cfg.clean_fraction;
  if (frac < 0) frac = 1.0 / double(K + 1);
  const int n_clean =
      static_cast<int>(std::lround(frac * cfg.batch_size));
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, 0xba7c4), static_cast<uint64_t>(step)));
  std::vector<PatchSample> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const long pos = step * cfg.batch_size + b;
    const int entry = schedule[static_cast<size_t>(pos % static_cast<long>(schedule.size()))];
    PatchSample s = sample_patch(manifest, entry, cfg.patch_size, rng,
                                 /*augment_flip=*/false);
    if (b < n_clean) {
      // clean slot: train the classifier to recognize the clean class
      s.degraded = s.clean;
      s.label = 0;
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

StepMetrics dcpt_step(TrainState& state, const std::vector<PatchSample>& batch,
                      const DCPTConfig& cfg, GradAudit* audit) {
  cfg.validate();
  if (batch.empty()) throw ValidationError("dcpt_step: empty batch");
  for (const auto& s : batch)
    if (s.clean.height() != cfg.patch_size || s.clean.width() != cfg.patch_size)
      throw ValidationError("dcpt_step: patch shape does not match config");

  std::vector<Image> clean, degraded;
  for (const auto& s : batch) {
    clean.push_back(s.clean);
    degraded.push_back(s.degraded);
  }
  auto clean_t = batch_to_tensor<float>(clean);
  auto degraded_t = batch_to_tensor<float>(degraded);
  const auto targets =
      label_batch(batch, state.decoder.config().class_count);

  StepMetrics m;
  nn::Var<float> l_pix, l_cls;

  auto build_pix = [&]() -> nn::Var<float> {
    // generation stage: reconstruct the clean target from the stage input
    auto input = nn::constant(cfg.dc_train_mode ? degraded_t : clean_t);
    auto out = state.encoder.forward(input, /*hooks=*/false);
    return nn::l1_loss(*out.restored, clean_t);
  };
  auto build_cls = [&](nn::Tensor<float>* logits_out) -> nn::Var<float> {
    auto input = nn::constant(degraded_t);
    auto out = state.encoder.forward(input, /*hooks=*/true,
                                     /*with_restored=*/false);
    auto scaled = state.encoder.scale_features(*out.pyramid);
    auto logits = state.decoder.forward(input, scaled, cfg.multi_level);
    if (logits_out) *logits_out = logits->val;
    return focal_loss_node<float>(logits, targets, cfg.focal);
  };

  nn::Tensor<float> logits_val;

  if (audit) {
    // separate backward passes to measure per-term gradient norms
    if (cfg.enable_generation_stage) {
      auto lp = build_pix();
      nn::backward(lp);
      audit->encoder_from_pix = grad_norm(state.encoder.params());
      audit->decoder_from_pix = grad_norm(state.decoder.params());
      clear_grads(state.encoder.params());
      clear_grads(state.decoder.params());
    }
    if (cfg.enable_classification_stage) {
      auto lc = build_cls(nullptr);
      nn::backward(lc);
      audit->encoder_from_cls = grad_norm(state.encoder.params());
      audit->decoder_from_cls = grad_norm(state.decoder.params());
      clear_grads(state.encoder.params());
      clear_grads(state.decoder.params());
    }
  }

  const float alpha = float(cfg.loss_weights.alpha);
  if (cfg.strict_alternation) {
    if (cfg.enable_generation_stage) {
      l_pix = build_pix();
      m.l_pix = double(l_pix->val.data[0]);
      auto scaled_pix = nn::scale_const(l_pix, alpha);
      nn::backward(scaled_pix);
      state.opt_encoder.step();
      state.opt_decoder.zero_grad();
    }
    if (cfg.enable_classification_stage) {
      l_cls = build_cls(&logits_val);
      m.l_cls = double(l_cls->val.data[0]);
      nn::backward(l_cls);
      state.opt_encoder.step();
      state.opt_decoder.step();
    }
    m.l_total = alpha * m.l_pix + m.l_cls;
  } else {
    // the reference step: both stage forwards, one combined backward
    nn::Var<float> l_total;
    if (cfg.enable_generation_stage) {
      l_pix = build_pix();
      m.l_pix = double(l_pix->val.data[0]);
      l_total = nn::scale_const(l_pix, alpha);
    }
    if (cfg.enable_classification_stage) {
      l_cls = build_cls(&logits_val);
      m.l_cls = double(l_cls->val.data[0]);
      l_total = l_total ? nn::add(l_total, l_cls) : l_cls;
    }
    m.l_total = double(l_total->val.data[0]);
    if (!std::isfinite(m.l_total))
      throw NumericError("dcpt_step: non-finite total loss (l_pix=" +
                         std::to_string(m.l_pix) +
                         ", l_cls=" + std::to_string(m.l_cls) + ")");
    nn::backward(l_total);
    state.opt_encoder.step();
    state.opt_decoder.step();
  }

  if (cfg.enable_classification_stage && logits_val.numel() > 0) {
    int correct = 0;
    for (size_t i = 0; i < batch.size(); ++i)
      if (argmax_row(logits_val, static_cast<int>(i)) == targets[i]) ++correct;
    m.decoder_accuracy = double(correct) / double(batch.size());
  }
  state.step += 1;
  return m;
}

std::string run_pretrain(const DCPTConfig& cfg_in, const Manifest& manifest,
                         const std::string& run_dir,
                         const std::string& resume_from) {
  DCPTConfig cfg = cfg_in;
  cfg.validate();
  manifest.validate();
  int n_kinds = static_cast<int>(manifest.classes.size()) - 1;
  if (n_kinds < 2)
    throw ConfigError("pre-training needs a manifest with >= 2 degradation classes");
  fs::create_directories(run_dir);

  TrainState state;
  if (!resume_from.empty()) {
    DCPTConfig saved;
    state = TrainState::load(resume_from, saved);
    cfg = saved;
  } else {
    state = TrainState::init(cfg, manifest.classes);
  }

  const auto schedule = repeat_schedule(manifest, mix_seed(cfg.seed, 0x5c4ed));
  long ckpt_every = cfg.checkpoint_every;
  if (ckpt_every <= 0) ckpt_every = std::max<long>(1, cfg.iterations / 10);

  std::ofstream trace(fs::path(run_dir) / "trace.jsonl",
                      resume_from.empty() ? std::ios::trunc : std::ios::app);
  const std::string final_path = (fs::path(run_dir) / "final.ckpt").string();

  for (long step = state.step; step < cfg.iterations; ++step) {
    auto batch = make_pretrain_batch(manifest, schedule, step, cfg);
    StepMetrics m = dcpt_step(state, batch, cfg);
    json rec = {{"step", step},
                {"l_pix", m.l_pix},
                {"l_cls", m.l_cls},
                {"l_total", m.l_total},
                {"decoder_accuracy", m.decoder_accuracy}};
    trace << rec.dump() << "\n";
    if ((step + 1) % ckpt_every == 0 && step + 1 < cfg.iterations) {
      const std::string p =
          (fs::path(run_dir) / ("step" + std::to_string(step + 1) + ".ckpt"))
              .string();
      state.save(p, cfg);
    }
  }
  trace.close();
  state.save(final_path, cfg);
  return final_path;
}

}  // namespace dcpt
