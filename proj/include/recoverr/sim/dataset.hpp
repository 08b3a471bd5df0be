/*
 * Copyright 2026 The recoverr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef RECOVERR_SIM_DATASET_HPP_
#define RECOVERR_SIM_DATASET_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/harness/io.hpp"
#include "recoverr/selective.hpp"
#include "recoverr/sim/world.hpp"

namespace recoverr::sim {

/// 64-bit FNV-1a, chained over parts separated by a zero byte.
class Fnv1a {
 public:
  Fnv1a& add(std::string_view s) {
    for (unsigned char c : s) mix(c);
    mix(0);
    return *this;
  }
  Fnv1a& add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(v >> (8 * i)));
    return *this;
  }
  std::uint64_t value() const { return h_; }

 private:
  void mix(unsigned char c) {
    h_ ^= c;
    h_ *= 1099511628211ULL;
  }
  std::uint64_t h_ = 14695981039346656037ULL;
};

/// One scene: base facts, the target (derived) attribute asked about, and
/// the bank of base questions a question generator may draw from.
struct World {
  std::string id;
  Facts facts;
  std::string target;
  std::vector<std::string> bank;

  friend bool operator==(const World&, const World&) = default;
};

inline void to_json(nlohmann::json& j, const World& w) {
  j = nlohmann::json{{"id", w.id}, {"facts", w.facts}, {"target", w.target}, {"bank", w.bank}};
}

inline void from_json(const nlohmann::json& j, World& w) {
  j.at("id").get_to(w.id);
  j.at("facts").get_to(w.facts);
  j.at("target").get_to(w.target);
  j.at("bank").get_to(w.bank);
}

class WorldStore {
 public:
  void add(World w) {
    const std::string id = w.id;
    if (!worlds_.emplace(id, std::move(w)).second) throw InvalidInput("duplicate world id " + id);
  }

  const World& at(const std::string& id) const {
    const auto it = worlds_.find(id);
    if (it == worlds_.end()) throw InvalidInput("unknown world '" + id + "'");
    return it->second;
  }

  std::size_t size() const { return worlds_.size(); }

  static WorldStore load(const std::filesystem::path& path) {
    WorldStore store;
    harness::for_each_jsonl(path, [&](const nlohmann::json& j) { store.add(j.get<World>()); });
    return store;
  }

  void save(const std::filesystem::path& path) const {
    std::vector<nlohmann::json> rows;
    for (const auto& [id, w] : worlds_) rows.emplace_back(w);
    harness::write_jsonl(path, rows);
  }

 private:
  std::map<std::string, World> worlds_;
};

struct SimDatasetSpec {
  std::size_t n_instances = 1000;
  std::size_t calibration_size = 500;  // the first instances; the rest form the test split
  double distractor_ratio = 0.0;       // fraction of bank questions that are distractors
  std::vector<std::string> targets;    // derived attributes to ask about; empty for all

  void validate(const Catalog& catalog) const {
    if (n_instances == 0) throw InvalidInput("SimDatasetSpec: n_instances must be positive");
    if (calibration_size > n_instances) {
      throw InvalidInput("SimDatasetSpec: calibration_size exceeds n_instances");
    }
    if (!(distractor_ratio >= 0.0 && distractor_ratio < 1.0)) {
      throw InvalidInput("SimDatasetSpec: distractor_ratio must lie in [0,1)");
    }
    for (const auto& t : targets) {
      if (!catalog.find_derived(t)) throw InvalidInput("SimDatasetSpec: unknown target " + t);
    }
  }
};

inline void to_json(nlohmann::json& j, const SimDatasetSpec& s) {
  j = nlohmann::json{{"n_instances", s.n_instances},
                     {"calibration_size", s.calibration_size},
                     {"distractor_ratio", s.distractor_ratio},
                     {"targets", s.targets}};
}

inline void from_json(const nlohmann::json& j, SimDatasetSpec& s) {
  s.n_instances = j.value("n_instances", s.n_instances);
  s.calibration_size = j.value("calibration_size", s.calibration_size);
  s.distractor_ratio = j.value("distractor_ratio", s.distractor_ratio);
  s.targets = j.value("targets", s.targets);
}

struct SimDataset {
  WorldStore worlds;
  std::vector<Instance> calibration;
  std::vector<Instance> test;
};

/// Number of distractors accompanying n relevant questions.
inline std::size_t distractor_count(std::size_t n_relevant, double ratio) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n_relevant) * ratio / (1.0 - ratio)));
}

inline SimDataset gen_dataset(const SimDatasetSpec& spec, std::uint64_t seed,
                              const Catalog& catalog = Catalog::standard()) {
  spec.validate(catalog);
  std::vector<std::string> targets = spec.targets;
  if (targets.empty()) {
    for (const auto& d : catalog.derived()) targets.push_back(d.name);
  }
  const auto distractors = catalog.distractor_attributes();
  const auto* bus = catalog.find_base("bus_colors");

  SimDataset out;
  std::mt19937_64 rng(Fnv1a().add("gen_dataset").add(seed).value());
  const auto pick = [&](std::size_t n) {
    return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  };
  for (std::size_t i = 0; i < spec.n_instances; ++i) {
    World w;
    w.id = "w" + std::to_string(seed) + "-" + std::to_string(i);
    for (const auto& attr : catalog.base()) w.facts[attr.name] = attr.domain[pick(attr.domain.size())];
    // Half the buses wear some flag's colors.
    if (bus && pick(2) == 0) {
      static const char* kFlagSets[][3] = {{"blue", "red", "white"},
                                           {"blue", "yellow", ""},
                                           {"green", "red", "white"},
                                           {"red", "white", ""},
                                           {"black", "red", "yellow"}};
      std::vector<std::string> members;
      for (const char* c : kFlagSets[pick(5)]) {
        if (*c) members.emplace_back(c);
      }
      w.facts["bus_colors"] = set_value(members);
    }
    w.target = targets[pick(targets.size())];

    const auto& deps = catalog.find_derived(w.target)->depends_on;
    std::vector<std::string> bank;
    for (const auto& d : deps) bank.push_back(catalog.question_for(d));
    std::vector<std::string> pool = distractors;
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_distract = std::min(distractor_count(deps.size(), spec.distractor_ratio), pool.size());
    for (std::size_t d = 0; d < n_distract; ++d) bank.push_back(catalog.question_for(pool[d]));
    std::shuffle(bank.begin(), bank.end(), rng);
    w.bank = std::move(bank);

    const Facts all = catalog.complete(w.facts);
    Instance in;
    in.id = "sim" + std::to_string(seed) + "-" + std::to_string(i);
    in.image_ref = w.id;
    in.question = catalog.question_for(w.target);
    in.gold_answers = {all.at(w.target)};
    in.metadata = {{"target", w.target}, {"world", w.id}};
    (i < spec.calibration_size ? out.calibration : out.test).push_back(std::move(in));
    out.worlds.add(std::move(w));
  }
  return out;
}

/// Writes worlds.jsonl, calibration.jsonl and test.jsonl into dir.
inline void save_dataset(const SimDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data.worlds.save(dir / "worlds.jsonl");
  harness::write_instances(dir / "calibration.jsonl", data.calibration);
  harness::write_instances(dir / "test.jsonl", data.test);
}

}  // namespace recoverr::sim

#endif  // RECOVERR_SIM_DATASET_HPP_
