// dcpt command-line front end: corpus synthesis, pre-training, fine-tuning,
// DC-guided transfer, probing and evaluation. One run directory per
// invocation; the resolved config is echoed there before any compute.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dcpt/data.hpp"
#include "dcpt/finetune.hpp"
#include "dcpt/model_io.hpp"
#include "dcpt/pretrain.hpp"
#include "dcpt/probe.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dcpt;

namespace {

json default_config() {
  return json{
      {"data",
       {{"corpus_dir", ""},
        {"n", 16},
        {"size", 96},
        {"classes", json::array({"noise", "blur", "haze", "rain", "lowlight"})},
        {"seed", 0},
        {"manifest", ""}}},
      {"encoder", {{"blocks", 8}, {"channels", 16}, {"patch", 48}}},
      {"decoder", {{"class_count", 6}, {"depth", 4}, {"stem_channels", 8}}},
      {"losses", {{"alpha", 1.0}, {"gamma", 2.0}, {"alpha_t", 0.25}}},
      {"pretrain",
       {{"encoder_lr", 3e-4},
        {"decoder_lr", 1e-4},
        {"iterations", 2000},
        {"batch_size", 16},
        {"patch_size", 48},
        {"generation_stage", true},
        {"classification_stage", true},
        {"multi_level", true},
        {"dc_train_mode", false},
        {"strict_alternation", false},
        {"clean_fraction", -1.0},
        {"seed", 0},
        {"checkpoint_every", 0}}},
      {"finetune",
       {{"init", "scratch"},
        {"lr0", 3e-4},
        {"lr_min", 1e-6},
        {"iterations", 5000},
        {"batch_size", 16},
        {"patch_size", 48},
        {"dc_guided", false},
        {"decoder_checkpoint", ""},
        {"classify_restored", false},
        {"augment_flip", true},
        {"eval_fraction", 0.2},
        {"seed", 0}}},
      {"probe",
       {{"crop", 48},
        {"k", 5},
        {"standardize", false},
        {"per_class", 100},
        {"seeds", json::array({1, 2, 3, 4, 5})},
        {"checkpoint", ""},
        {"export_embeddings", ""},
        {"gen_seed", 0}}}};
}

void reject_unknown_keys(const json& user, const json& schema,
                         const std::string& prefix) {
  if (!user.is_object()) return;
  for (auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.is_object() || !schema.contains(key))
      throw ConfigError("unknown config key: " + path);
    if (value.is_object()) reject_unknown_keys(value, schema.at(key), path);
  }
}

void deep_merge(json& base, const json& overlay) {
  for (auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      deep_merge(base[key], value);
    else
      base[key] = value;
  }
}

// dotted-path override: "pretrain.iterations=100". The value is parsed as
// JSON when possible and treated as a string otherwise.
void apply_override(json& cfg, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key.path=value, got: " + expr);
  const std::string path = expr.substr(0, eq);
  const std::string raw = expr.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty --set path");
  json probe_schema = default_config();
  const json* schema = &probe_schema;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!schema->contains(parts[i]))
      throw ConfigError("unknown config key: " + path);
    schema = &schema->at(parts[i]);
    node = &(*node)[parts[i]];
  }
  if (!schema->contains(parts.back()))
    throw ConfigError("unknown config key: " + path);
  (*node)[parts.back()] = value;
}

json resolve_config(const std::string& config_path,
                    const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot read config file: " + config_path);
    json user = json::parse(in);
    reject_unknown_keys(user, cfg, "");
    deep_merge(cfg, user);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

std::string make_run_dir(const std::string& requested,
                         const std::string& command) {
  fs::path dir;
  if (!requested.empty()) {
    dir = requested;
  } else {
    const char* root = std::getenv("DCPT_RUN_ROOT");
    dir = fs::path(root ? root : "runs") / command;
    int suffix = 0;
    while (fs::exists(dir))
      dir = fs::path(root ? root : "runs") / (command + "-" + std::to_string(++suffix));
  }
  fs::create_directories(dir);
  return dir.string();
}

void echo_config(const std::string& run_dir, const std::string& command,
                 const json& cfg) {
  json out = cfg;
  out["command"] = command;
  std::ofstream f(fs::path(run_dir) / "config.json");
  f << out.dump(2) << "\n";
}

EncoderConfig encoder_from_cfg(const json& cfg) {
  EncoderConfig e;
  e.blocks = cfg.at("encoder").at("blocks").get<int>();
  e.channels = cfg.at("encoder").at("channels").get<int>();
  e.patch = cfg.at("encoder").at("patch").get<int>();
  e.validate();
  return e;
}

DCPTConfig pretrain_from_cfg(const json& cfg) {
  const json& p = cfg.at("pretrain");
  DCPTConfig c;
  c.encoder_lr = p.at("encoder_lr").get<double>();
  c.decoder_lr = p.at("decoder_lr").get<double>();
  c.iterations = p.at("iterations").get<long>();
  c.batch_size = p.at("batch_size").get<int>();
  c.patch_size = p.at("patch_size").get<int>();
  c.loss_weights.alpha = cfg.at("losses").at("alpha").get<double>();
  c.focal.gamma = cfg.at("losses").at("gamma").get<double>();
  c.focal.alpha_t = cfg.at("losses").at("alpha_t").get<double>();
  c.enable_generation_stage = p.at("generation_stage").get<bool>();
  c.enable_classification_stage = p.at("classification_stage").get<bool>();
  c.multi_level = p.at("multi_level").get<bool>();
  c.dc_train_mode = p.at("dc_train_mode").get<bool>();
  c.strict_alternation = p.at("strict_alternation").get<bool>();
  c.clean_fraction = p.at("clean_fraction").get<double>();
  c.seed = p.at("seed").get<uint64_t>();
  c.checkpoint_every = p.at("checkpoint_every").get<long>();
  c.encoder = encoder_from_cfg(cfg);
  c.decoder.depth = cfg.at("decoder").at("depth").get<int>();
  c.decoder.stem_channels = cfg.at("decoder").at("stem_channels").get<int>();
  return c;
}

FinetuneConfig finetune_from_cfg(const json& cfg) {
  const json& f = cfg.at("finetune");
  FinetuneConfig c;
  const std::string init = f.at("init").get<std::string>();
  if (init == "scratch") {
    c.init = InitMode::Scratch;
  } else {
    c.init = InitMode::DcptCheckpoint;
    c.init_checkpoint = init;
  }
  c.lr0 = f.at("lr0").get<double>();
  c.lr_min = f.at("lr_min").get<double>();
  c.iterations = f.at("iterations").get<long>();
  c.batch_size = f.at("batch_size").get<int>();
  c.patch_size = f.at("patch_size").get<int>();
  c.loss_weights.alpha = cfg.at("losses").at("alpha").get<double>();
  c.dc_guided = f.at("dc_guided").get<bool>();
  c.decoder_checkpoint = f.at("decoder_checkpoint").get<std::string>();
  c.classify_restored = f.at("classify_restored").get<bool>();
  c.augment_flip = f.at("augment_flip").get<bool>();
  c.eval_fraction = f.at("eval_fraction").get<double>();
  c.seed = f.at("seed").get<uint64_t>();
  c.encoder = encoder_from_cfg(cfg);
  return c;
}

// Accepts either checkpoint flavor and returns just the encoder.
Encoder<float> load_encoder(const std::string& path) {
  json meta = load_metadata(path);
  const std::string kind = meta.value("kind", "");
  if (kind == "dcpt") {
    DCPTConfig cfg;
    return TrainState::load(path, cfg).encoder;
  }
  if (kind == "finetune") {
    FinetuneConfig cfg;
    return FinetuneState::load(path, cfg).encoder;
  }
  throw ValidationError("unrecognized checkpoint kind in " + path);
}

Manifest load_manifest_arg(const std::string& path) {
  if (path.empty()) throw ConfigError("a --manifest path is required");
  Manifest m = Manifest::load(path);
  m.validate();
  return m;
}

int cmd_synth(const json& cfg, const std::string& run_dir) {
  const json& d = cfg.at("data");
  std::string corpus_dir = d.at("corpus_dir").get<std::string>();
  if (corpus_dir.empty()) corpus_dir = (fs::path(run_dir) / "corpus").string();
  const auto classes = d.at("classes").get<std::vector<std::string>>();
  for (const auto& c : classes) kind_from_name(c);  // validate early
  gen_procedural_corpus(corpus_dir, d.at("n").get<int>(),
                        d.at("size").get<int>(), d.at("seed").get<uint64_t>());
  Manifest m = build_manifest(corpus_dir, classes, d.at("seed").get<uint64_t>());
  const std::string mpath = (fs::path(run_dir) / "manifest.json").string();
  m.save(mpath);
  std::cout << "corpus: " << corpus_dir << "\n"
            << "manifest: " << mpath << " (" << m.entries.size() << " entries, "
            << m.classes.size() << " classes)\n";
  return 0;
}

int cmd_pretrain(const json& cfg, const std::string& run_dir,
                 const std::string& manifest_path, const std::string& resume) {
  Manifest m = load_manifest_arg(manifest_path);
  const std::string final_path =
      run_pretrain(pretrain_from_cfg(cfg), m, run_dir, resume);
  std::cout << "checkpoint: " << final_path << "\n";
  return 0;
}

int cmd_finetune(const json& cfg, const std::string& run_dir,
                 const std::string& manifest_path, const std::string& resume) {
  Manifest m = load_manifest_arg(manifest_path);
  EvalReport rep = run_finetune(finetune_from_cfg(cfg), m, run_dir, resume);
  std::cout << "psnr: " << rep.psnr << "\nssim: " << rep.ssim << "\nreport: "
            << (fs::path(run_dir) / "report.json").string() << "\n";
  return 0;
}

int cmd_probe(const json& cfg, const std::string& run_dir,
              const std::string& manifest_path) {
  Manifest m = load_manifest_arg(manifest_path);
  const json& p = cfg.at("probe");
  ProbeConfig pc;
  pc.crop = p.at("crop").get<int>();
  pc.k = p.at("k").get<int>();
  pc.standardize = p.at("standardize").get<bool>();
  pc.per_class = p.at("per_class").get<int>();
  pc.validate();

  const std::string ckpt = p.at("checkpoint").get<std::string>();
  Encoder<float> encoder = [&] {
    if (!ckpt.empty()) return load_encoder(ckpt);
    std::mt19937_64 rng(mix_seed(p.at("gen_seed").get<uint64_t>(), 0xdead));
    return Encoder<float>(encoder_from_cfg(cfg), rng);  // random init
  }();

  ProbeDataset data =
      build_probe_dataset(encoder, m, pc, p.at("gen_seed").get<uint64_t>());
  ProbeResult res =
      probe_accuracy(data, pc, p.at("seeds").get<std::vector<uint64_t>>());

  const std::string exp = p.at("export_embeddings").get<std::string>();
  if (!exp.empty()) export_embeddings(data, exp);

  json jr = {{"checkpoint", ckpt.empty() ? "random-init" : ckpt},
             {"mean_acc", res.mean_acc},
             {"std_acc", res.std_acc},
             {"per_seed_acc", res.per_seed_acc},
             {"classes", res.classes},
             {"confusion", res.confusion}};
  std::ofstream rf(fs::path(run_dir) / "report.json");
  rf << jr.dump(2) << "\n";
  std::cout << "probe accuracy: " << res.mean_acc << " +/- " << res.std_acc
            << "\n";
  return 0;
}

int cmd_eval(const json& cfg, const std::string& run_dir,
             const std::string& manifest_path, const std::string& ckpt) {
  Manifest m = load_manifest_arg(manifest_path);
  if (ckpt.empty()) throw ConfigError("eval requires --checkpoint");
  Encoder<float> encoder = load_encoder(ckpt);
  std::vector<int> all_idx(m.entries.size());
  for (size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = int(i);
  EvalReport rep = evaluate_restoration(
      encoder, m, all_idx, cfg.at("finetune").at("patch_size").get<int>(),
      cfg.at("finetune").at("seed").get<uint64_t>(), "eval", 0);
  json jr = {{"task", rep.task},   {"split", "all"},
             {"psnr", rep.psnr},   {"ssim", rep.ssim},
             {"samples", rep.samples}, {"psnr_per_class", rep.psnr_per_class}};
  std::ofstream rf(fs::path(run_dir) / "report.json");
  rf << jr.dump(2) << "\n";
  std::cout << "psnr: " << rep.psnr << "\nssim: " << rep.ssim << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"degradation-classification pre-training toolkit"};
  app.require_subcommand(1);

  std::string config_path, run_dir, manifest_path, resume, checkpoint;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* sub, bool with_manifest) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", overrides,
                    "dotted-path config override, e.g. pretrain.iterations=100");
    sub->add_option("--run-dir", run_dir,
                    "output directory (default: $DCPT_RUN_ROOT/<command>)");
    if (with_manifest)
      sub->add_option("--manifest", manifest_path, "dataset manifest JSON");
  };

  auto* synth = app.add_subcommand("synth", "generate a procedural corpus + manifest");
  add_common(synth, false);
  int synth_n = -1, synth_size = -1;
  std::string synth_classes;
  uint64_t synth_seed = uint64_t(-1);
  synth->add_option("--n", synth_n, "number of clean images");
  synth->add_option("--size", synth_size, "image side length");
  synth->add_option("--classes", synth_classes, "comma-separated kind names");
  synth->add_option("--seed", synth_seed, "generation seed");

  auto* pretrain = app.add_subcommand("pretrain", "run DCPT pre-training");
  add_common(pretrain, true);
  pretrain->add_option("--resume", resume, "checkpoint to resume from");
  bool no_gen = false, no_cls = false, dc_train = false;
  pretrain->add_flag("--no-generation", no_gen, "disable the generation stage");
  pretrain->add_flag("--no-classification", no_cls,
                     "disable the classification stage");
  pretrain->add_flag("--dc-train", dc_train,
                     "generation stage consumes degraded inputs");

  auto* finetune = app.add_subcommand("finetune", "fine-tune a restoration encoder");
  add_common(finetune, true);
  finetune->add_option("--resume", resume, "checkpoint to resume from");
  std::string ft_init;
  finetune->add_option("--init", ft_init, "'scratch' or a dcpt checkpoint path");

  auto* dcguide = app.add_subcommand(
      "dcguide", "DC-guided transfer fine-tuning with a frozen classifier");
  add_common(dcguide, true);
  std::string source_ckpt, decoder_ckpt;
  dcguide->add_option("--source", source_ckpt,
                      "source-task checkpoint initializing the encoder");
  dcguide->add_option("--decoder", decoder_ckpt,
                      "frozen decoder checkpoint (default: dcpt source)");

  auto* probe = app.add_subcommand("probe", "kNN probe over frozen features");
  add_common(probe, true);
  probe->add_option("--checkpoint", checkpoint,
                    "encoder checkpoint (omit for random init)");
  std::string export_path;
  probe->add_option("--export", export_path, "embedding export file");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  add_common(eval, true);
  eval->add_option("--checkpoint", checkpoint, "encoder checkpoint");

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = resolve_config(config_path, overrides);
    // flag shorthands map onto config keys
    if (synth->parsed()) {
      if (synth_n >= 0) cfg["data"]["n"] = synth_n;
      if (synth_size >= 0) cfg["data"]["size"] = synth_size;
      if (synth_seed != uint64_t(-1)) cfg["data"]["seed"] = synth_seed;
      if (!synth_classes.empty()) {
        json arr = json::array();
        std::stringstream ss(synth_classes);
        std::string item;
        while (std::getline(ss, item, ',')) arr.push_back(item);
        cfg["data"]["classes"] = arr;
      }
    }
    if (pretrain->parsed()) {
      if (no_gen) cfg["pretrain"]["generation_stage"] = false;
      if (no_cls) cfg["pretrain"]["classification_stage"] = false;
      if (dc_train) cfg["pretrain"]["dc_train_mode"] = true;
    }
    if (finetune->parsed() && !ft_init.empty()) cfg["finetune"]["init"] = ft_init;
    if (dcguide->parsed()) {
      if (source_ckpt.empty())
        throw ConfigError("dcguide requires --source");
      cfg["finetune"]["init"] = source_ckpt;
      cfg["finetune"]["dc_guided"] = true;
      cfg["finetune"]["decoder_checkpoint"] =
          decoder_ckpt.empty() ? source_ckpt : decoder_ckpt;
    }
    if (probe->parsed()) {
      if (!checkpoint.empty()) cfg["probe"]["checkpoint"] = checkpoint;
      if (!export_path.empty()) cfg["probe"]["export_embeddings"] = export_path;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    const std::string dir = make_run_dir(run_dir, cmd);
    echo_config(dir, cmd, cfg);

    if (synth->parsed()) return cmd_synth(cfg, dir);
    if (pretrain->parsed()) return cmd_pretrain(cfg, dir, manifest_path, resume);
    if (finetune->parsed()) return cmd_finetune(cfg, dir, manifest_path, resume);
    if (dcguide->parsed()) return cmd_finetune(cfg, dir, manifest_path, resume);
    if (probe->parsed()) return cmd_probe(cfg, dir, manifest_path);
    if (eval->parsed()) return cmd_eval(cfg, dir, manifest_path, checkpoint);
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
