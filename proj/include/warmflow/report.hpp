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

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "warmflow/numkit/checkpoint.hpp"
#include "warmflow/rollout.hpp"
#include "warmflow/toyworlds.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

// Provenance stamped into every output: the run config hash and seed.
struct Stamp {
  std::string config_hash;
  std::uint64_t seed = 0;
};

// CSV with a one-line header; every row ends with config_hash and seed.
class CsvWriter {
 public:
  using Cell = std::variant<std::string, double, long long>;

  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns, Stamp stamp)
      : os_(path), stamp_(std::move(stamp)), width_(columns.size()) {
    if (!os_) throw ConfigError("cannot write " + path.string());
    for (const auto& c : columns) os_ << c << ',';
    os_ << "config_hash,seed\n";
  }

  void row(const std::vector<Cell>& cells) {
    if (cells.size() != width_) throw ConfigError("CsvWriter: row width mismatch");
    for (const auto& c : cells) {
      std::visit([this](const auto& v) { put(v); }, c);
      os_ << ',';
    }
    os_ << stamp_.config_hash << ',' << stamp_.seed << '\n';
  }

 private:
  void put(const std::string& v) { os_ << v; }
  void put(long long v) { os_ << v; }
  // Shortest text that round-trips.
  void put(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    os_.write(buf, r.ptr - buf);
  }

  std::ofstream os_;
  Stamp stamp_;
  std::size_t width_;
};

inline void write_json(const std::filesystem::path& path, Json j, const Stamp& stamp) {
  j["schema_version"] = 1;
  j["config_hash"] = stamp.config_hash;
  j["seed"] = stamp.seed;
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

inline Json to_json(const PriorSpec& s) {
  return {{"variant", to_string(s.variant)}, {"sigma", s.sigma}, {"horizon", s.horizon},
          {"action_dim", s.action_dim}};
}

inline PriorSpec prior_spec_from_json(const Json& j) {
  PriorSpec s{prior_variant_from_string(j.at("variant").get<std::string>()), j.at("sigma").get<double>(),
              j.at("horizon").get<int>(), j.value("action_dim", 1)};
  s.validate();
  return s;
}

// `train_hash` identifies the training-relevant part of the run config.
inline void save_policy(const std::filesystem::path& path, const FlowPolicy& p, const AdamState& adam,
                        std::int64_t step, const Stamp& stamp, const std::string& train_hash,
                        const NavWorld& world) {
  Checkpoint ck;
  ck.params = p.params;
  ck.adam = adam;
  ck.step = step;
  ck.config_hash = stamp.config_hash;
  ck.meta = {{"prior", to_json(p.spec)},
             {"action_normalizer", to_json(p.action_norm)},
             {"obs_normalizer", to_json(p.obs_norm)},
             {"world", to_json(world)},
             {"seed", stamp.seed},
             {"train_hash", train_hash}};
  save_checkpoint(path, ck);
}

struct LoadedPolicy {
  FlowPolicy policy;
  std::string config_hash;
  std::string train_hash;
  NavWorld world;
};

inline LoadedPolicy load_policy(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing checkpoint " + path.string());
  const Checkpoint ck = load_checkpoint(path);
  LoadedPolicy out;
  out.policy.params = ck.params;
  out.policy.spec = prior_spec_from_json(ck.meta.at("prior"));
  out.policy.action_norm = normalizer_from_json(ck.meta.at("action_normalizer"));
  out.policy.obs_norm = normalizer_from_json(ck.meta.at("obs_normalizer"));
  out.world = nav_world_from_json(ck.meta.at("world"));
  out.config_hash = ck.config_hash;
  out.train_hash = ck.meta.value("train_hash", std::string());
  return out;
}

}  // namespace warmflow
