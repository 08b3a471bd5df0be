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

/** @file pipeline.hpp
 *
 * Client construction from a RunConfig (simulated or HTTP), per-instance
 * call counting, and the initial prediction step.
 */

#ifndef RECOVERR_HARNESS_PIPELINE_HPP_
#define RECOVERR_HARNESS_PIPELINE_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/harness/accuracy.hpp"
#include "recoverr/harness/config.hpp"
#include "recoverr/modelio/backend.hpp"
#include "recoverr/modelio/clients.hpp"
#include "recoverr/modelio/remote_clients.hpp"
#include "recoverr/selective.hpp"
#include "recoverr/sim/clients.hpp"
#include "recoverr/sim/dataset.hpp"
#include "recoverr/verifier.hpp"

namespace recoverr::harness {

struct CallCounts {
  std::size_t vlm = 0;
  std::size_t qgen = 0;
  std::size_t paraphrase = 0;
  std::size_t nli = 0;
  std::size_t negate = 0;
  std::size_t tools = 0;

  std::size_t total() const { return vlm + qgen + paraphrase + nli + negate + tools; }
  friend bool operator==(const CallCounts&, const CallCounts&) = default;
};

inline void to_json(nlohmann::json& j, const CallCounts& c) {
  j = nlohmann::json{{"vlm", c.vlm},   {"qgen", c.qgen},     {"paraphrase", c.paraphrase},
                     {"nli", c.nli},   {"negate", c.negate}, {"tools", c.tools}};
}

inline void from_json(const nlohmann::json& j, CallCounts& c) {
  c.vlm = j.value("vlm", std::size_t{0});
  c.qgen = j.value("qgen", std::size_t{0});
  c.paraphrase = j.value("paraphrase", std::size_t{0});
  c.nli = j.value("nli", std::size_t{0});
  c.negate = j.value("negate", std::size_t{0});
  c.tools = j.value("tools", std::size_t{0});
}

namespace detail {

class CountingVlm : public modelio::VisionLanguageModel {
 public:
  CountingVlm(modelio::VisionLanguageModel& inner, std::size_t& n) : inner_(inner), n_(n) {}
  modelio::VlmAnswer answer(const std::string& image, const std::string& q) override {
    ++n_;
    return inner_.answer(image, q);
  }

 private:
  modelio::VisionLanguageModel& inner_;
  std::size_t& n_;
};

class CountingQgen : public modelio::QuestionGenerator {
 public:
  CountingQgen(modelio::QuestionGenerator& inner, std::size_t& n) : inner_(inner), n_(n) {}
  modelio::QgenResult generate(const modelio::QgenRequest& r) override {
    ++n_;
    return inner_.generate(r);
  }

 private:
  modelio::QuestionGenerator& inner_;
  std::size_t& n_;
};

class CountingParaphraser : public modelio::Paraphraser {
 public:
  CountingParaphraser(modelio::Paraphraser& inner, std::size_t& n) : inner_(inner), n_(n) {}
  modelio::Paraphrase paraphrase(const std::string& q, const std::string& a) override {
    ++n_;
    return inner_.paraphrase(q, a);
  }

 private:
  modelio::Paraphraser& inner_;
  std::size_t& n_;
};

class CountingNli : public modelio::NliModel {
 public:
  CountingNli(modelio::NliModel& inner, std::size_t& n) : inner_(inner), n_(n) {}
  modelio::Entailment entail(const std::string& p, const std::string& h) override {
    ++n_;
    return inner_.entail(p, h);
  }

 private:
  modelio::NliModel& inner_;
  std::size_t& n_;
};

class CountingNegator : public modelio::Negator {
 public:
  CountingNegator(modelio::Negator& inner, std::size_t& n) : inner_(inner), n_(n) {}
  std::string negate(const std::string& s) override {
    ++n_;
    return inner_.negate(s);
  }

 private:
  modelio::Negator& inner_;
  std::size_t& n_;
};

class CountingTool : public modelio::VisionTool {
 public:
  CountingTool(modelio::VisionTool& inner, std::size_t& n) : inner_(inner), n_(n) {}
  std::string name() const override { return inner_.name(); }
  modelio::ToolOutput describe(const std::string& image) override {
    ++n_;
    return inner_.describe(image);
  }

 private:
  modelio::VisionTool& inner_;
  std::size_t& n_;
};

}  // namespace detail

/// Shared clients owned in one place. Counted views are made per instance.
class ClientBundle {
 public:
  /// Simulated clients over a world store.
  static std::unique_ptr<ClientBundle> simulated(std::shared_ptr<const sim::WorldStore> worlds,
                                                 const SimSettings& settings, const Seeds& seeds,
                                                 bool transcripts) {
    auto b = std::unique_ptr<ClientBundle>(new ClientBundle());
    b->worlds_ = std::move(worlds);
    auto profile = settings.profile;
    profile.seed = seeds.vlm;
    b->vlm_ = std::make_unique<sim::SimVlm>(*b->worlds_, profile, sim::Catalog::standard(), transcripts);
    b->qgen_ = std::make_unique<sim::SimQgen>(*b->worlds_);
    b->paraphraser_ = std::make_unique<sim::SimParaphraser>();
    b->nli_ = std::make_unique<sim::ExactNli>(sim::Catalog::standard(), transcripts);
    b->negator_ = std::make_unique<sim::ExactNegator>();
    if (settings.use_tool) {
      b->tools_.push_back(std::make_unique<sim::SimVisionTool>(
          *b->worlds_, settings.tool_coverage, settings.tool_accuracy, seeds.tools));
    }
    return b;
  }

  static std::unique_ptr<ClientBundle> from_config(const RunConfig& config) {
    if (config.backend == "sim") {
      if (config.paths.worlds.empty()) throw ConfigError("sim backend needs paths.worlds");
      auto worlds = std::make_shared<const sim::WorldStore>(sim::WorldStore::load(config.paths.worlds));
      return simulated(std::move(worlds), config.sim, config.seeds, config.record_transcripts);
    }
    auto b = std::unique_ptr<ClientBundle>(new ClientBundle());
    std::optional<std::filesystem::path> cache;
    if (!config.paths.cache.empty()) cache = config.paths.cache;
    const auto client_for = [&](const std::string& role) -> modelio::ModelClient& {
      auto it = config.backends.find(role);
      if (it == config.backends.end()) it = config.backends.find("default");
      if (it == config.backends.end()) {
        throw ConfigError("no backend configured for role '" + role + "' (nor 'default')");
      }
      const auto key = it->second.id;
      if (!b->model_clients_.count(key)) {
        b->model_clients_[key] = std::make_unique<modelio::ModelClient>(
            std::make_shared<modelio::HttpChatBackend>(it->second), cache, it->second.parallelism);
      }
      return *b->model_clients_[key];
    };
    auto& vlm_client = client_for("vlm");
    b->vlm_ = std::make_unique<modelio::RemoteVlm>(vlm_client, modelio::RemoteVlmOptions{16, 20, config.seeds.vlm});
    b->qgen_ = std::make_unique<modelio::RemoteQgen>(client_for("qgen"),
                                                     modelio::RemoteQgenOptions{1.0, 256, config.seeds.qgen});
    b->paraphraser_ = std::make_unique<modelio::RemoteParaphraser>(client_for("paraphrase"));
    b->nli_ = std::make_unique<modelio::RemoteNli>(client_for("nli"));
    b->negator_ = std::make_unique<verifier::TextNegator>();
    b->tools_.push_back(std::make_unique<modelio::VlmCaptionTool>(vlm_client));
    if (!config.paths.tool_evidence.empty()) {
      b->tools_.push_back(std::make_unique<modelio::StaticEvidenceTool>("tool_file", config.paths.tool_evidence));
    }
    if (config.accuracy.mode == "llm_judge") {
      b->judge_client_ = std::make_unique<modelio::RemoteJudge>(client_for("judge"));
    }
    return b;
  }

  /// Bundle over caller-owned clients (tests, custom integrations).
  static std::unique_ptr<ClientBundle> borrowed(const modelio::ClientSet& set) {
    auto b = std::unique_ptr<ClientBundle>(new ClientBundle());
    b->borrowed_ = set;
    return b;
  }

  modelio::ClientSet set() const {
    if (borrowed_) return *borrowed_;
    modelio::ClientSet s{vlm_.get(), qgen_.get(), paraphraser_.get(), nli_.get(), negator_.get(), {}};
    for (const auto& t : tools_) s.tools.push_back(t.get());
    return s;
  }

  JudgeFn judge() const {
    if (!judge_client_) return {};
    auto* j = judge_client_.get();
    return [j](const std::string& q, const std::vector<std::string>& golds, const std::string& a) {
      return j->judge(q, golds, a);
    };
  }

  const sim::WorldStore* worlds() const { return worlds_.get(); }

  std::size_t network_calls() const {
    std::size_t n = 0;
    for (const auto& [id, c] : model_clients_) n += c->network_calls();
    return n;
  }

 private:
  ClientBundle() = default;

  std::shared_ptr<const sim::WorldStore> worlds_;
  std::map<std::string, std::unique_ptr<modelio::ModelClient>> model_clients_;
  std::unique_ptr<modelio::VisionLanguageModel> vlm_;
  std::unique_ptr<modelio::QuestionGenerator> qgen_;
  std::unique_ptr<modelio::Paraphraser> paraphraser_;
  std::unique_ptr<modelio::NliModel> nli_;
  std::unique_ptr<modelio::Negator> negator_;
  std::vector<std::unique_ptr<modelio::VisionTool>> tools_;
  std::unique_ptr<modelio::RemoteJudge> judge_client_;
  std::optional<modelio::ClientSet> borrowed_;
};

/// Counting views over a ClientSet, for one instance.
class CountedClients {
 public:
  explicit CountedClients(const modelio::ClientSet& inner)
      : vlm_(*inner.vlm, counts_.vlm),
        qgen_(*inner.qgen, counts_.qgen),
        paraphraser_(*inner.paraphraser, counts_.paraphrase),
        nli_(*inner.nli, counts_.nli),
        negator_(*inner.negator, counts_.negate) {
    for (auto* t : inner.tools) tools_.push_back(std::make_unique<detail::CountingTool>(*t, counts_.tools));
  }
  CountedClients(const CountedClients&) = delete;
  CountedClients& operator=(const CountedClients&) = delete;

  modelio::ClientSet set() {
    modelio::ClientSet s{&vlm_, &qgen_, &paraphraser_, &nli_, &negator_, {}};
    for (auto& t : tools_) s.tools.push_back(t.get());
    return s;
  }

  const CallCounts& counts() const { return counts_; }

 private:
  CallCounts counts_;
  detail::CountingVlm vlm_;
  detail::CountingQgen qgen_;
  detail::CountingParaphraser paraphraser_;
  detail::CountingNli nli_;
  detail::CountingNegator negator_;
  std::vector<std::unique_ptr<detail::CountingTool>> tools_;
};

struct AccuracyJudge {
  std::string mode = "exact";
  JudgeFn fn;

  double operator()(const Instance& instance, const std::string& predicted) const {
    return judge_accuracy(predicted, instance.gold_answers, mode, fn, instance.question);
  }
};

struct InitialPrediction {
  Prediction prediction;
  VerificationLogits logits;
  std::vector<double> token_probs;
  std::vector<modelio::Transcript> transcripts;
};

/// Asks the VLM, scores the answer through the calibrator and judges it.
inline InitialPrediction predict(const Instance& instance, modelio::VisionLanguageModel& vlm,
                                 const confidence::Calibrator& calibrator,
                                 const AccuracyJudge& judge) {
  auto answered = vlm.answer(instance.image_ref, instance.question);
  InitialPrediction out;
  out.logits = answered.logits;
  out.prediction.answer = answered.text;
  out.prediction.logits = answered.logits;
  out.prediction.confidence = calibrator(answered.logits);
  out.prediction.accuracy = judge(instance, answered.text);
  out.token_probs = std::move(answered.token_probs);
  out.transcripts = std::move(answered.transcripts);
  return out;
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_PIPELINE_HPP_
