#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcpt/errors.hpp"
#include "dcpt/nn/tensor.hpp"

namespace dcpt {

// Binary container of named float32 arrays. The JSON sidecar (same path with
// ".json" appended) carries configs, the authoritative class-name ordering,
// step count and RNG state.
class ArrayStore {
 public:
  struct Entry {
    std::vector<int> shape;
    std::vector<float> data;
  };

  void put(const std::string& name, const std::vector<int>& shape,
           const float* data, long n) {
    Entry e;
    e.shape = shape;
    e.data.assign(data, data + n);
    order_.push_back(name);
    entries_[name] = std::move(e);
  }

  template <typename Scalar>
  void put_tensor(const std::string& name, const nn::Tensor<Scalar>& t) {
    std::vector<float> tmp(static_cast<size_t>(t.numel()));
    for (long i = 0; i < t.numel(); ++i) tmp[static_cast<size_t>(i)] = float(t.data[i]);
    put(name, t.shape, tmp.data(), t.numel());
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  const Entry& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw ValidationError("checkpoint: missing array '" + name + "'");
    return it->second;
  }

  template <typename Scalar>
  void load_tensor(const std::string& name, nn::Tensor<Scalar>& t) const {
    const Entry& e = get(name);
    if (e.shape != t.shape)
      throw ValidationError("checkpoint: shape mismatch for '" + name + "'");
    for (size_t i = 0; i < e.data.size(); ++i)
      t.data[static_cast<long>(i)] = Scalar(e.data[i]);
  }

  const std::vector<std::string>& names() const { return order_; }

  void save(const std::string& path) const {
    // atomic: write temp, rename
    const std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw ValidationError("cannot write " + tmp);
      f.write("DCPT0001", 8);
      const uint32_t count = static_cast<uint32_t>(order_.size());
      f.write(reinterpret_cast<const char*>(&count), 4);
      for (const auto& name : order_) {
        const Entry& e = entries_.at(name);
        const uint16_t nl = static_cast<uint16_t>(name.size());
        f.write(reinterpret_cast<const char*>(&nl), 2);
        f.write(name.data(), nl);
        const uint8_t nd = static_cast<uint8_t>(e.shape.size());
        f.write(reinterpret_cast<const char*>(&nd), 1);
        for (int d : e.shape) {
          const uint32_t u = static_cast<uint32_t>(d);
          f.write(reinterpret_cast<const char*>(&u), 4);
        }
        f.write(reinterpret_cast<const char*>(e.data.data()),
                static_cast<std::streamsize>(e.data.size() * sizeof(float)));
      }
    }
    std::filesystem::rename(tmp, path);
  }

  static ArrayStore load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open checkpoint " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::string(magic, 8) != "DCPT0001")
      throw ValidationError("bad checkpoint magic in " + path);
    uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    ArrayStore s;
    for (uint32_t i = 0; i < count; ++i) {
      uint16_t nl = 0;
      f.read(reinterpret_cast<char*>(&nl), 2);
      std::string name(nl, '\0');
      f.read(name.data(), nl);
      uint8_t nd = 0;
      f.read(reinterpret_cast<char*>(&nd), 1);
      Entry e;
      long n = 1;
      for (int d = 0; d < nd; ++d) {
        uint32_t u = 0;
        f.read(reinterpret_cast<char*>(&u), 4);
        e.shape.push_back(static_cast<int>(u));
        n *= static_cast<long>(u);
      }
      e.data.resize(static_cast<size_t>(n));
      f.read(reinterpret_cast<char*>(e.data.data()),
             static_cast<std::streamsize>(e.data.size() * sizeof(float)));
      if (!f) throw ValidationError("truncated checkpoint " + path);
      s.order_.push_back(name);
      s.entries_[name] = std::move(e);
    }
    return s;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Entry> entries_;
};

inline void save_metadata(const std::string& ckpt_path,
                          const nlohmann::json& meta) {
  const std::string tmp = ckpt_path + ".json.tmp";
  std::ofstream f(tmp);
  if (!f) throw ValidationError("cannot write " + tmp);
  f << meta.dump(2) << "\n";
  f.close();
  std::filesystem::rename(tmp, ckpt_path + ".json");
}

inline nlohmann::json load_metadata(const std::string& ckpt_path) {
  std::ifstream f(ckpt_path + ".json");
  if (!f)
    throw ValidationError("missing checkpoint metadata " + ckpt_path + ".json");
  nlohmann::json j;
  f >> j;
  return j;
}

}  // namespace dcpt
