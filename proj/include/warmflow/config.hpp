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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "warmflow/numkit/checkpoint.hpp"
#include "warmflow/pipeline.hpp"
#include "warmflow/priorrl.hpp"
#include "warmflow/toyworlds.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

// Every output file format in this project carries this version.
inline constexpr int kSchemaVersion = 1;

inline Json default_run_config() {
  return Json::parse(R"({
    "schema_version": 1,
    "seed": 0,
    "world": {},
    "prior": {"variant": "past", "sigma": 0.5, "horizon": 8},
    "net": {"hidden_width": 1024, "hidden_layers": 4, "time_embed_dim": 128, "time_scale": 100.0,
            "activation": "gelu"},
    "optim": {"lr": 0.0001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "weight_decay": 1e-5},
    "train": {"iterations": 5000, "batch_size": 256},
    "paths": {"data": "", "checkpoint": "", "checkpoints": []},
    "eval": {"episodes": 100, "seeds": [0, 1, 2], "nfe": [1, 3, 9], "max_steps": 0, "violin_points": 201},
    "diagnose": {"observations": 256, "steps": 100, "paths": 4, "mixture": {},
                 "grid": 256, "t_max": 0.999, "samples": 100000,
                 "bound_sigmas": [0.1, 0.3, 0.5, 1.0], "anchor": "exact", "anchor_value": 0.0},
    "ablate": {"variants": ["past", "preview"], "sigmas": [1.5, 1.0, 0.5, 0.3, 0.1, 0.05, 0.0],
               "seeds": [0], "nfe": 1},
    "rl": {"anchor": "warm", "bound": 0.5, "augment": true, "nfe": 10, "seeds": [1, 2, 3],
           "generations": 30, "population": 32, "elite_frac": 0.25, "explore": 0.5, "explore_final": 0.1,
           "distill_steps": 100, "eval_every": 2, "eval_episodes": 16, "width": 64, "layers": 2,
           "lr": 0.003, "final_window": 3, "runs": []},
    "plot": {"inputs": ""}
  })");
}

// Sets a dotted path ("train.iterations") to `value`. The value text is read
// as JSON when it parses, otherwise as a string. Unknown keys are rejected
// except inside free-form objects (world, diagnose.mixture).
inline void apply_override(Json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &cfg;
  std::size_t pos = 0;
  bool free_form = false;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (!free_form && !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (part == "world" || part == "mixture") free_form = true;
    if (node->is_null()) *node = Json::object();
    pos = dot + 1;
  }
}

// defaults <- file <- overrides <- WARMFLOW_SEED.
inline Json load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                            const char* seed_env = std::getenv("WARMFLOW_SEED")) {
  Json cfg = default_run_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    const Json file = Json::parse(in, nullptr, false);
    if (file.is_discarded() || !file.is_object()) throw ConfigError("config '" + path + "' is not a JSON object");
    cfg.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  if (seed_env && *seed_env) {
    char* end = nullptr;
    const unsigned long long s = std::strtoull(seed_env, &end, 10);
    if (*end != '\0') throw ConfigError("WARMFLOW_SEED must be a non-negative integer");
    cfg["seed"] = s;
  }
  if (cfg.value("schema_version", 0) != kSchemaVersion) throw ConfigError("unsupported config schema_version");
  return cfg;
}

// File locations are left out so that the same experiment run from two
// directories carries the same hash.
inline std::string config_hash(const Json& cfg) {
  Json c = cfg;
  c.erase("paths");
  return json_hash(c);
}

// Hash of the sections that determine a trained network.
inline std::string train_hash(const Json& cfg) {
  Json sub;
  for (const char* k : {"seed", "world", "prior", "net", "optim", "train"}) sub[k] = cfg.at(k);
  return json_hash(sub);
}

inline std::uint64_t config_seed(const Json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

inline NavWorld world_from_config(const Json& cfg) { return nav_world_from_json(cfg.at("world")); }

inline PriorSpec prior_from_config(const Json& cfg) {
  const Json& p = cfg.at("prior");
  PriorSpec s;
  s.variant = prior_variant_from_string(p.at("variant").get<std::string>());
  s.sigma = p.contains("sigma") && !p.at("sigma").is_null() ? p.at("sigma").get<double>()
                                                             : PriorSpec::default_sigma(s.variant);
  s.horizon = p.at("horizon").get<int>();
  s.action_dim = 1;
  s.validate();
  return s;
}

inline PolicyTrainConfig train_config_from(const Json& cfg) {
  PolicyTrainConfig t;
  t.spec = prior_from_config(cfg);
  const Json& n = cfg.at("net");
  t.hidden_width = n.at("hidden_width").get<int>();
  t.hidden_layers = n.at("hidden_layers").get<int>();
  t.time_embed_dim = n.at("time_embed_dim").get<int>();
  t.time_scale = n.at("time_scale").get<double>();
  t.activation = activation_from_string(n.at("activation").get<std::string>());
  const Json& o = cfg.at("optim");
  t.adam = AdamConfig{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                      o.at("eps").get<double>(), o.at("weight_decay").get<double>()};
  t.train.iterations = cfg.at("train").at("iterations").get<int>();
  t.train.batch_size = cfg.at("train").at("batch_size").get<int>();
  if (t.train.iterations < 1 || t.train.batch_size < 1) throw ConfigError("train: iterations and batch_size must be >= 1");
  t.seed = config_seed(cfg);
  return t;
}

inline ResidualSpec residual_spec_from(const Json& r) {
  ResidualSpec s;
  s.anchor = residual_anchor_from_string(r.at("anchor").get<std::string>());
  s.bound = r.at("bound").get<double>();
  s.augment = r.at("augment").get<bool>();
  return s;
}

inline ResidualTrainConfig residual_train_from(const Json& r) {
  ResidualTrainConfig c;
  c.generations = r.at("generations").get<int>();
  c.population = r.at("population").get<int>();
  c.elite_frac = r.at("elite_frac").get<double>();
  c.explore = r.at("explore").get<double>();
  c.explore_final = r.at("explore_final").get<double>();
  c.distill_steps = r.at("distill_steps").get<int>();
  c.eval_every = r.at("eval_every").get<int>();
  c.eval_episodes = r.at("eval_episodes").get<int>();
  c.width = r.at("width").get<int>();
  c.layers = r.at("layers").get<int>();
  c.lr = r.at("lr").get<double>();
  c.final_window = r.at("final_window").get<int>();
  return c;
}

}  // namespace warmflow
