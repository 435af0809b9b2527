#pragma once

#include <json.hpp>

#include "dcpt/checkpoint.hpp"
#include "dcpt/models.hpp"
#include "dcpt/nn/optim.hpp"

namespace dcpt {

template <typename Model>
void store_model(ArrayStore& store, const Model& model) {
  for (const auto& [name, p] : model.named_params())
    store.put_tensor(name, p->val);
}

template <typename Model>
void load_model(const ArrayStore& store, Model& model) {
  for (auto& [name, p] : model.named_params())
    store.load_tensor(name, p->val);
}

// Optimizer moments stored alongside the parameters they belong to.
template <typename Model>
void store_opt(ArrayStore& store, const std::string& tag,
               const Model& model, nn::AdamW<float>& opt) {
  auto named = model.named_params();
  auto& states = opt.states();
  for (size_t i = 0; i < named.size(); ++i) {
    nn::Tensor<float> m(named[i].second->val.shape), v(named[i].second->val.shape);
    m.data = states[i].m;
    v.data = states[i].v;
    store.put_tensor(tag + "." + named[i].first + ".m", m);
    store.put_tensor(tag + "." + named[i].first + ".v", v);
  }
}

template <typename Model>
void load_opt(const ArrayStore& store, const std::string& tag,
              const Model& model, nn::AdamW<float>& opt) {
  auto named = model.named_params();
  auto& states = opt.states();
  for (size_t i = 0; i < named.size(); ++i) {
    nn::Tensor<float> m(named[i].second->val.shape), v(named[i].second->val.shape);
    store.load_tensor(tag + "." + named[i].first + ".m", m);
    store.load_tensor(tag + "." + named[i].first + ".v", v);
    states[i].m = m.data;
    states[i].v = v.data;
  }
}

inline nlohmann::json encoder_config_json(const EncoderConfig& c) {
  return {{"blocks", c.blocks}, {"channels", c.channels}, {"patch", c.patch}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.blocks = j.at("blocks").get<int>();
  c.channels = j.at("channels").get<int>();
  c.patch = j.at("patch").get<int>();
  return c;
}

inline nlohmann::json decoder_config_json(const DecoderConfig& c) {
  return {{"class_count", c.class_count},
          {"depth", c.depth},
          {"stem_channels", c.stem_channels}};
}

inline DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.class_count = j.at("class_count").get<int>();
  c.depth = j.at("depth").get<int>();
  c.stem_channels = j.at("stem_channels").get<int>();
  return c;
}

}  // namespace dcpt
