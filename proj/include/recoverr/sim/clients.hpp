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

/** @file clients.hpp
 *
 * Simulated implementations of every model interface, backed by a
 * WorldStore. Each draw is seeded from (seed, world id, question), so
 * clients are stateless, thread-safe and reproducible.
 */

#ifndef RECOVERR_SIM_CLIENTS_HPP_
#define RECOVERR_SIM_CLIENTS_HPP_

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "recoverr/confidence.hpp"
#include "recoverr/modelio/clients.hpp"
#include "recoverr/modelio/prompts.hpp"
#include "recoverr/sim/dataset.hpp"
#include "recoverr/sim/profile.hpp"
#include "recoverr/sim/world.hpp"

namespace recoverr::sim {

inline constexpr const char* kRefusal = "unknown";

struct SimDraw {
  std::string answer;
  bool correct = false;
  double latent = 0.5;
  double reported = 0.5;
};

class SimVlm : public modelio::VisionLanguageModel {
 public:
  SimVlm(const WorldStore& worlds, SimVlmProfile profile, const Catalog& catalog = Catalog::standard(),
         bool transcripts = true)
      : worlds_(worlds), profile_(profile), catalog_(catalog), transcripts_(transcripts) {
    profile_.validate();
  }

  /// The answer and confidences behind a reply. Unknown questions get a
  /// refusal at confidence 0.5.
  SimDraw draw(const std::string& world_id, const std::string& question) const {
    const World& world = worlds_.at(world_id);
    const auto attr = catalog_.attribute_for(question);
    if (!attr) return SimDraw{kRefusal, false, 0.5, 0.5};
    const bool derived = catalog_.find_derived(*attr) != nullptr;
    std::mt19937_64 rng(Fnv1a().add(profile_.seed).add(world_id).add(question).value());
    SimDraw d;
    d.latent = (derived ? profile_.derived : profile_.base).sample(rng);
    d.correct = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < d.latent;
    const std::string truth = catalog_.evaluate(*attr, world.facts);
    if (d.correct) {
      d.answer = truth;
    } else {
      std::vector<std::string> others;
      for (const auto& v : catalog_.domain(*attr)) {
        if (v != truth) others.push_back(v);
      }
      d.answer = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    }
    d.reported = profile_.report(d.latent);
    return d;
  }

  modelio::VlmAnswer answer(const std::string& image_ref, const std::string& question) override {
    const SimDraw d = draw(image_ref, question);
    modelio::VlmAnswer out;
    out.text = d.answer;
    out.logits = logits_for(d.reported);
    if (transcripts_) {
      using modelio::Role;
      out.transcripts.push_back({modelio::to_string(Role::kVlmAnswer),
                                 modelio::render_prompt(Role::kVlmAnswer, {{"question", question}}),
                                 d.answer});
      out.transcripts.push_back(
          {modelio::to_string(Role::kVlmVerify),
           modelio::render_prompt(Role::kVlmVerify, {{"question", question}, {"answer", d.answer}}),
           d.reported >= 0.5 ? "yes" : "no"});
    }
    return out;
  }

  const SimVlmProfile& profile() const { return profile_; }

 private:
  const WorldStore& worlds_;
  SimVlmProfile profile_;
  const Catalog& catalog_;
  bool transcripts_;
};

/// Returns not-yet-asked bank questions whose attribute is not already
/// covered by a known evidence, in bank order.
class SimQgen : public modelio::QuestionGenerator {
 public:
  explicit SimQgen(const WorldStore& worlds, const Catalog& catalog = Catalog::standard())
      : worlds_(worlds), catalog_(catalog) {}

  modelio::QgenResult generate(const modelio::QgenRequest& request) override {
    const World& world = worlds_.at(request.image_ref);
    std::set<std::string> known;
    for (const auto& s : request.known_evidence) {
      if (auto a = parse_assertion(s, catalog_)) known.insert(a->attribute);
    }
    modelio::QgenResult out;
    for (const auto& q : world.bank) {
      if (static_cast<int>(out.questions.size()) >= request.k) break;
      if (std::find(request.asked.begin(), request.asked.end(), q) != request.asked.end()) continue;
      const auto attr = catalog_.attribute_for(q);
      if (attr && known.count(*attr)) continue;
      out.questions.push_back(q);
    }
    return out;
  }

 private:
  const WorldStore& worlds_;
  const Catalog& catalog_;
};

/// "attr = answer." for catalog questions; empty (so the caller falls back)
/// otherwise.
class SimParaphraser : public modelio::Paraphraser {
 public:
  explicit SimParaphraser(const Catalog& catalog = Catalog::standard()) : catalog_(catalog) {}

  modelio::Paraphrase paraphrase(const std::string& question, const std::string& answer) override {
    modelio::Paraphrase out;
    const auto attr = catalog_.attribute_for(question);
    if (!attr) return out;
    const auto value = catalog_.canonical_value(*attr, answer);
    if (!value) return out;
    out.statement = format_assertion(Assertion{*attr, false, *value});
    return out;
  }

 private:
  const Catalog& catalog_;
};

class ExactNli : public modelio::NliModel {
 public:
  explicit ExactNli(const Catalog& catalog = Catalog::standard(), bool transcripts = true)
      : catalog_(catalog), transcripts_(transcripts) {}

  modelio::Entailment entail(const std::string& premise, const std::string& hypothesis) override {
    modelio::Entailment out;
    out.probability = exact_nli(split_statements(premise), hypothesis, catalog_);
    if (transcripts_) {
      using modelio::Role;
      out.transcript = modelio::Transcript{
          modelio::to_string(Role::kNli),
          modelio::render_prompt(Role::kNli, {{"premise", premise}, {"hypothesis", hypothesis}}),
          out.probability == 1.0 ? "yes" : (out.probability == 0.0 ? "no" : "undetermined")};
    }
    return out;
  }

 private:
  const Catalog& catalog_;
  bool transcripts_;
};

class ExactNegator : public modelio::Negator {
 public:
  explicit ExactNegator(const Catalog& catalog = Catalog::standard()) : catalog_(catalog) {}
  std::string negate(const std::string& statement) override { return exact_negate(statement, catalog_); }

 private:
  const Catalog& catalog_;
};

/// Reports each base fact with probability `coverage`, correctly with
/// probability `accuracy`.
class SimVisionTool : public modelio::VisionTool {
 public:
  SimVisionTool(const WorldStore& worlds, double coverage, double accuracy, std::uint64_t seed,
                std::string name = "sim_detector", const Catalog& catalog = Catalog::standard())
      : worlds_(worlds),
        coverage_(coverage),
        accuracy_(accuracy),
        seed_(seed),
        name_(std::move(name)),
        catalog_(catalog) {
    if (!(coverage >= 0.0 && coverage <= 1.0 && accuracy >= 0.0 && accuracy <= 1.0)) {
      throw InvalidInput("SimVisionTool: coverage and accuracy must lie in [0,1]");
    }
  }

  std::string name() const override { return name_; }

  modelio::ToolOutput describe(const std::string& image_ref) override {
    const World& world = worlds_.at(image_ref);
    modelio::ToolOutput out;
    for (const auto& attr : catalog_.base()) {
      std::mt19937_64 rng(Fnv1a().add(seed_).add(name_).add(image_ref).add(attr.name).value());
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) >= coverage_) continue;
      std::string value = world.facts.at(attr.name);
      if (u(rng) >= accuracy_) {
        std::vector<std::string> others;
        for (const auto& v : attr.domain) {
          if (v != value) others.push_back(v);
        }
        value = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
      }
      out.statements.push_back(format_assertion(Assertion{attr.name, false, value}));
    }
    return out;
  }

 private:
  const WorldStore& worlds_;
  double coverage_;
  double accuracy_;
  std::uint64_t seed_;
  std::string name_;
  const Catalog& catalog_;
};

}  // namespace recoverr::sim

#endif  // RECOVERR_SIM_CLIENTS_HPP_
