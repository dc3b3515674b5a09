// Copyright 2026 The WarmFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "warmflow/numkit/adam.hpp"
#include "warmflow/numkit/mlp.hpp"

namespace warmflow {

using Json = nlohmann::json;

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xF];
  return s;
}

// Hash of the canonical (sorted-key, compact) dump of a JSON value.
inline std::string json_hash(const Json& j) { return hex64(fnv1a(j.dump())); }

// Hash of the raw parameter bytes, layer by layer.
inline std::string params_hash(const MlpParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* d, Eigen::Index n) {
    const auto* c = reinterpret_cast<const unsigned char*>(d);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& l : p.layers) {
    mix(l.weight.data(), l.weight.size());
    mix(l.bias.data(), l.bias.size());
  }
  return hex64(h);
}

namespace detail {

template <typename M>
Json blob(const M& m) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(m.size()) * sizeof(double));
  std::memcpy(bytes.data(), m.data(), bytes.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", Json::binary(std::move(bytes))}};
}

template <typename M>
void unblob(const Json& j, M& m) {
  const auto& bytes = j.at("data").get_binary();
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double))
    throw ConfigError("checkpoint: corrupt tensor payload");
  m.resize(rows, cols);
  std::memcpy(m.data(), bytes.data(), bytes.size());
}

inline Json layers_to_json(const std::vector<DenseLayer>& layers) {
  Json arr = Json::array();
  for (const auto& l : layers) arr.push_back({{"weight", blob(l.weight)}, {"bias", blob(l.bias)}});
  return arr;
}

inline std::vector<DenseLayer> layers_from_json(const Json& arr) {
  std::vector<DenseLayer> layers;
  for (const auto& j : arr) {
    DenseLayer l;
    unblob(j.at("weight"), l.weight);
    unblob(j.at("bias"), l.bias);
    layers.push_back(std::move(l));
  }
  return layers;
}

}  // namespace detail

inline Json to_json(const MlpConfig& c) {
  return {{"chunk_rows", c.chunk_rows},       {"action_dim", c.action_dim},
          {"obs_dim", c.obs_dim},             {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers}, {"time_embed_dim", c.time_embed_dim},
          {"time_scale", c.time_scale},       {"activation", to_string(c.activation)}};
}

inline MlpConfig mlp_config_from_json(const Json& j) {
  MlpConfig c;
  c.chunk_rows = j.at("chunk_rows");
  c.action_dim = j.at("action_dim");
  c.obs_dim = j.at("obs_dim");
  c.hidden_width = j.at("hidden_width");
  c.hidden_layers = j.at("hidden_layers");
  c.time_embed_dim = j.at("time_embed_dim");
  c.time_scale = j.at("time_scale");
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.validate();
  return c;
}

inline Json to_json(const AdamConfig& c) {
  return {{"lr", c.lr},   {"beta1", c.beta1},
          {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

inline AdamConfig adam_config_from_json(const Json& j) {
  AdamConfig c;
  c.lr = j.at("lr");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.eps = j.at("eps");
  c.weight_decay = j.at("weight_decay");
  return c;
}

// Versioned training snapshot. `meta` carries whatever the caller needs to
// rebuild a policy around the network (prior spec, normalizer, ...).
struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  MlpParams params;
  AdamState adam;
  std::int64_t step = 0;
  std::string config_hash;
  Json meta = Json::object();
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Json j;
  j["schema_version"] = Checkpoint::kSchemaVersion;
  j["kind"] = "warmflow.checkpoint";
  j["config_hash"] = ck.config_hash;
  j["step"] = ck.step;
  j["meta"] = ck.meta;
  j["mlp"] = {{"config", to_json(ck.params.config)},
              {"layers", detail::layers_to_json(ck.params.layers)}};
  j["adam"] = {{"config", to_json(ck.adam.config)},
               {"step", ck.adam.step},
               {"m", detail::layers_to_json(ck.adam.m)},
               {"v", detail::layers_to_json(ck.adam.v)}};
  const std::vector<std::uint8_t> bytes = Json::to_cbor(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Json j;
  try {
    j = Json::from_cbor(bytes);
  } catch (const Json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " is not a valid container: " + e.what());
  }
  if (j.value("kind", "") != "warmflow.checkpoint")
    throw ConfigError("checkpoint " + path.string() + ": wrong kind");
  if (j.at("schema_version").get<int>() != Checkpoint::kSchemaVersion)
    throw ConfigError("checkpoint " + path.string() + ": unsupported schema_version");
  Checkpoint ck;
  ck.config_hash = j.at("config_hash");
  ck.step = j.at("step");
  ck.meta = j.at("meta");
  ck.params.config = mlp_config_from_json(j.at("mlp").at("config"));
  ck.params.layers = detail::layers_from_json(j.at("mlp").at("layers"));
  const MlpParams shape = MlpParams::zeros(ck.params.config);
  if (shape.layers.size() != ck.params.layers.size())
    throw ConfigError("checkpoint: layer count does not match config");
  for (std::size_t l = 0; l < shape.layers.size(); ++l) {
    if (shape.layers[l].weight.rows() != ck.params.layers[l].weight.rows() ||
        shape.layers[l].weight.cols() != ck.params.layers[l].weight.cols())
      throw ConfigError("checkpoint: layer shape does not match config");
  }
  ck.adam.config = adam_config_from_json(j.at("adam").at("config"));
  ck.adam.step = j.at("adam").at("step");
  ck.adam.m = detail::layers_from_json(j.at("adam").at("m"));
  ck.adam.v = detail::layers_from_json(j.at("adam").at("v"));
  return ck;
}

}  // namespace warmflow
