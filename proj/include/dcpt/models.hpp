#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcpt/errors.hpp"
#include "dcpt/image.hpp"
#include "dcpt/nn/graph.hpp"
#include "dcpt/nn/optim.hpp"

namespace dcpt {

struct EncoderConfig {
  int blocks = 8;     // l; must be even, hooks on the last l/2 blocks
  int channels = 16;  // width of every block
  int patch = 48;

  int hook_count() const { return blocks / 2; }

  void validate() const {
    if (blocks <= 0 || blocks % 2 != 0)
      throw ConfigError("encoder blocks must be positive and even");
    if (channels <= 0) throw ConfigError("encoder channels must be positive");
    if (patch < 16 || patch % 16 != 0)
      throw ConfigError("patch size must be >= 16 and divisible by 16");
  }
};

struct DecoderConfig {
  int class_count = 6;  // K kinds + clean
  int depth = 4;        // residual stages
  int stem_channels = 8;

  void validate() const {
    if (class_count < 2) throw ConfigError("decoder needs >= 2 classes");
    if (depth < 1 || depth > 4) throw ConfigError("decoder depth must be 1..4");
    if (stem_channels <= 0) throw ConfigError("stem channels must be positive");
  }
};

// Batch of images as an NCHW tensor.
template <typename Scalar>
nn::Tensor<Scalar> batch_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ValidationError("empty image batch");
  const int H = images[0].height(), W = images[0].width();
  const int N = static_cast<int>(images.size());
  nn::Tensor<Scalar> t({N, 3, H, W});
  for (int n = 0; n < N; ++n) {
    if (images[static_cast<size_t>(n)].height() != H ||
        images[static_cast<size_t>(n)].width() != W)
      throw ValidationError("batch images must share one shape");
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          t.data[((static_cast<long>(n) * 3 + c) * H + i) * W + j] =
              Scalar(images[static_cast<size_t>(n)].ch[static_cast<size_t>(c)](i, j));
  }
  return t;
}

template <typename Scalar>
std::vector<Image> tensor_to_batch(const nn::Tensor<Scalar>& t,
                                   bool clamp = true) {
  if (t.shape.size() != 4 || t.dim(1) != 3)
    throw ValidationError("tensor_to_batch: expected [N,3,H,W]");
  const int N = t.dim(0), H = t.dim(2), W = t.dim(3);
  std::vector<Image> out;
  out.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    Image im(H, W);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          im.ch[static_cast<size_t>(c)](i, j) = float(
              t.data[((static_cast<long>(n) * 3 + c) * H + i) * W + j]);
    if (clamp) im.clamp01();
    out.push_back(std::move(im));
  }
  return out;
}

// Multi-level features, shallowest hooked block first; deepest last.
template <typename Scalar>
struct FeaturePyramid {
  std::vector<nn::Var<Scalar>> features;
};

template <typename Scalar>
struct EncoderOutput {
  std::optional<nn::Var<Scalar>> restored;  // pre-clamp, input residual added
  std::optional<FeaturePyramid<Scalar>> pyramid;
  nn::Var<Scalar> deepest;
};

// Residual chain at a single resolution: in_conv, l pre-activation residual
// blocks, and a conv head with a global input residual. The learnable
// per-level scales omega live here (they are encoder parameters).
template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    const int C = cfg.channels;
    w_in_ = nn::parameter(nn::init_normal<Scalar>({C, 3, 3, 3}, 3 * 9, rng));
    b_in_ = nn::parameter(nn::init_const<Scalar>({C}, Scalar(0)));
    for (int i = 0; i < cfg.blocks; ++i) {
      block_w_.push_back(
          nn::parameter(nn::init_normal<Scalar>({C, C, 3, 3}, C * 9, rng)));
      block_b_.push_back(nn::parameter(nn::init_const<Scalar>({C}, Scalar(0))));
    }
    w_head_ = nn::parameter(nn::init_normal<Scalar>({3, C, 3, 3}, C * 9, rng));
    b_head_ = nn::parameter(nn::init_const<Scalar>({3}, Scalar(0)));
    for (int i = 0; i < cfg.hook_count(); ++i)
      omega_.push_back(nn::parameter(nn::init_const<Scalar>({1}, Scalar(1))));
  }

  const EncoderConfig& config() const { return cfg_; }

  EncoderOutput<Scalar> forward(const nn::Var<Scalar>& x, bool hooks,
                                bool with_restored = true) const {
    if (x->val.shape.size() != 4 || x->val.dim(1) != 3)
      throw ValidationError("encoder: input must be [N,3,H,W]");
    auto h = nn::relu(nn::conv2d(x, w_in_, b_in_));
    FeaturePyramid<Scalar> pyr;
    for (int i = 0; i < cfg_.blocks; ++i) {
      auto t = nn::conv2d(nn::relu(h), block_w_[static_cast<size_t>(i)],
                          block_b_[static_cast<size_t>(i)]);
      h = nn::add(h, t);
      if (hooks && i >= cfg_.blocks - cfg_.hook_count())
        pyr.features.push_back(h);
    }
    EncoderOutput<Scalar> out{.restored = std::nullopt,
                              .pyramid = std::nullopt,
                              .deepest = h};
    if (hooks) out.pyramid = std::move(pyr);
    if (with_restored) out.restored = restoration_head(h, x);
    return out;
  }

  // conv(F_l) + input; zero features give back the input exactly.
  nn::Var<Scalar> restoration_head(const nn::Var<Scalar>& deepest,
                                   const nn::Var<Scalar>& input) const {
    if (deepest->val.dim(1) != cfg_.channels)
      throw ValidationError("restoration_head: channel mismatch");
    return nn::add(nn::conv2d(deepest, w_head_, b_head_), input);
  }

  // F'_i = omega_i * F_i
  FeaturePyramid<Scalar> scale_features(
      const FeaturePyramid<Scalar>& pyr) const {
    if (pyr.features.size() != omega_.size())
      throw ValidationError("scale_features: level count mismatch");
    FeaturePyramid<Scalar> out;
    for (size_t i = 0; i < omega_.size(); ++i)
      out.features.push_back(nn::scale_by(pyr.features[i], omega_[i]));
    return out;
  }

  const std::vector<nn::Var<Scalar>>& omega() const { return omega_; }

  // Stable name -> parameter map; omega last. Order is the checkpoint order.
  std::vector<std::pair<std::string, nn::Var<Scalar>>> named_params() const {
    std::vector<std::pair<std::string, nn::Var<Scalar>>> out;
    out.emplace_back("encoder.in.w", w_in_);
    out.emplace_back("encoder.in.b", b_in_);
    for (size_t i = 0; i < block_w_.size(); ++i) {
      out.emplace_back("encoder.block" + std::to_string(i) + ".w", block_w_[i]);
      out.emplace_back("encoder.block" + std::to_string(i) + ".b", block_b_[i]);
    }
    out.emplace_back("encoder.head.w", w_head_);
    out.emplace_back("encoder.head.b", b_head_);
    for (size_t i = 0; i < omega_.size(); ++i)
      out.emplace_back("encoder.omega" + std::to_string(i), omega_[i]);
    return out;
  }

  std::vector<nn::Var<Scalar>> params() const {
    std::vector<nn::Var<Scalar>> out;
    for (auto& [k, v] : named_params()) out.push_back(v);
    return out;
  }

 private:
  EncoderConfig cfg_;
  nn::Var<Scalar> w_in_, b_in_, w_head_, b_head_;
  std::vector<nn::Var<Scalar>> block_w_, block_b_;
  std::vector<nn::Var<Scalar>> omega_;
};

// Compact residual classifier over the degraded image plus scaled encoder
// features. Stage s sees the (depth - s)-th deepest feature; the deepest
// feature lands in the last stage. Excess shallow features are averaged into
// the first injection.
template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& cfg, const EncoderConfig& enc,
          std::mt19937_64& rng)
      : cfg_(cfg), enc_channels_(enc.channels), hook_count_(enc.hook_count()) {
    cfg.validate();
    enc.validate();
    const int c0 = cfg.stem_channels;
    w_stem_ = nn::parameter(nn::init_normal<Scalar>({c0, 3, 3, 3}, 3 * 9, rng));
    b_stem_ = nn::parameter(nn::init_const<Scalar>({c0}, Scalar(0)));
    int cin = c0;
    for (int s = 0; s < cfg.depth; ++s) {
      const int cout = c0 << (s + 1 > 3 ? 3 : s + 1);
      StageParams sp;
      sp.w_proj = nn::parameter(
          nn::init_normal<Scalar>({cin, enc_channels_, 1, 1}, enc_channels_, rng));
      sp.b_proj = nn::parameter(nn::init_const<Scalar>({cin}, Scalar(0)));
      sp.w_down =
          nn::parameter(nn::init_normal<Scalar>({cout, cin, 3, 3}, cin * 9, rng));
      sp.b_down = nn::parameter(nn::init_const<Scalar>({cout}, Scalar(0)));
      sp.ln_g = nn::parameter(nn::init_const<Scalar>({cout}, Scalar(1)));
      sp.ln_b = nn::parameter(nn::init_const<Scalar>({cout}, Scalar(0)));
      sp.w_res =
          nn::parameter(nn::init_normal<Scalar>({cout, cout, 3, 3}, cout * 9, rng));
      sp.b_res = nn::parameter(nn::init_const<Scalar>({cout}, Scalar(0)));
      stages_.push_back(sp);
      cin = cout;
    }
    w_fc_ = nn::parameter(nn::init_normal<Scalar>({cfg.class_count, cin}, cin, rng));
    b_fc_ = nn::parameter(nn::init_const<Scalar>({cfg.class_count}, Scalar(0)));
  }

  const DecoderConfig& config() const { return cfg_; }

  // degraded: [N,3,H,W]; scaled: shallowest first, as produced by the
  // encoder. multi_level=false injects only the deepest feature.
  nn::Var<Scalar> forward(const nn::Var<Scalar>& degraded,
                          const FeaturePyramid<Scalar>& scaled,
                          bool multi_level = true) const {
    const int H = degraded->val.dim(2), W = degraded->val.dim(3);
    if (H % 16 != 0 || W % 16 != 0)
      throw ValidationError("decoder: input dims must be divisible by 16");
    const int n_feat = static_cast<int>(scaled.features.size());
    if (n_feat == 0) throw ValidationError("decoder: empty feature pyramid");
    for (auto& f : scaled.features)
      if (f->val.dim(1) != enc_channels_ || f->val.dim(2) != H ||
          f->val.dim(3) != W)
        throw ValidationError("decoder: feature shape mismatch");

    // stage s <- feature index n_feat - (depth - s); deepest to last stage
    std::vector<std::vector<int>> assign(static_cast<size_t>(cfg_.depth));
    if (multi_level) {
      for (int i = 0; i < n_feat; ++i) {
        int s = cfg_.depth - (n_feat - i);
        if (s < 0) s = 0;  // merge excess shallow features into stage 0
        assign[static_cast<size_t>(s)].push_back(i);
      }
    } else {
      assign[static_cast<size_t>(cfg_.depth - 1)].push_back(n_feat - 1);
    }

    auto x = nn::relu(nn::conv2d(degraded, w_stem_, b_stem_, /*stride=*/2));
    int res = H / 2;
    for (int s = 0; s < cfg_.depth; ++s) {
      const auto& sp = stages_[static_cast<size_t>(s)];
      if (!assign[static_cast<size_t>(s)].empty()) {
        nn::Var<Scalar> inj;
        for (int idx : assign[static_cast<size_t>(s)]) {
          auto f = scaled.features[static_cast<size_t>(idx)];
          inj = inj ? nn::add(inj, f) : f;
        }
        const int n_merged = static_cast<int>(assign[static_cast<size_t>(s)].size());
        if (n_merged > 1)
          inj = nn::scale_const(inj, Scalar(1) / Scalar(n_merged));
        auto proj = nn::conv2d(inj, sp.w_proj, sp.b_proj, 1, 0);
        x = nn::add(x, nn::avg_pool2d(proj, H / res));
      }
      auto down = nn::relu(nn::layer_norm_channels(
          nn::conv2d(x, sp.w_down, sp.b_down, /*stride=*/2), sp.ln_g, sp.ln_b));
      x = nn::add(down, nn::conv2d(nn::relu(down), sp.w_res, sp.b_res));
      res = (res + 1) / 2;
    }
    return nn::linear(nn::global_avg_pool(x), w_fc_, b_fc_);
  }

  std::vector<std::pair<std::string, nn::Var<Scalar>>> named_params() const {
    std::vector<std::pair<std::string, nn::Var<Scalar>>> out;
    out.emplace_back("decoder.stem.w", w_stem_);
    out.emplace_back("decoder.stem.b", b_stem_);
    for (size_t s = 0; s < stages_.size(); ++s) {
      const std::string p = "decoder.stage" + std::to_string(s) + ".";
      const auto& sp = stages_[s];
      out.emplace_back(p + "proj.w", sp.w_proj);
      out.emplace_back(p + "proj.b", sp.b_proj);
      out.emplace_back(p + "down.w", sp.w_down);
      out.emplace_back(p + "down.b", sp.b_down);
      out.emplace_back(p + "ln.g", sp.ln_g);
      out.emplace_back(p + "ln.b", sp.ln_b);
      out.emplace_back(p + "res.w", sp.w_res);
      out.emplace_back(p + "res.b", sp.b_res);
    }
    out.emplace_back("decoder.fc.w", w_fc_);
    out.emplace_back("decoder.fc.b", b_fc_);
    return out;
  }

  std::vector<nn::Var<Scalar>> params() const {
    std::vector<nn::Var<Scalar>> out;
    for (auto& [k, v] : named_params()) out.push_back(v);
    return out;
  }

  void set_trainable(bool on) {
    for (auto& p : params()) {
      p->requires_grad = on;
      p->needs_grad = on;
    }
  }

 private:
  struct StageParams {
    nn::Var<Scalar> w_proj, b_proj, w_down, b_down, ln_g, ln_b, w_res, b_res;
  };
  DecoderConfig cfg_;
  int enc_channels_ = 0;
  int hook_count_ = 0;
  nn::Var<Scalar> w_stem_, b_stem_, w_fc_, b_fc_;
  std::vector<StageParams> stages_;
};

}  // namespace dcpt
