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

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/harness/replay.hpp"
#include "recoverr/sim/clients.hpp"
#include "recoverr/sim/dataset.hpp"
#include "recoverr/sim/profile.hpp"
#include "recoverr/sim/world.hpp"
#include "recoverr/verifier.hpp"

namespace {

using namespace recoverr;
using verifier::Evidence;
using verifier::Hypothesis;
using verifier::RecoverrParams;

// ---------------------------------------------------------------------------
// Scripted clients

struct ScriptVlm : modelio::VisionLanguageModel {
  std::map<std::string, std::pair<std::string, double>> replies;
  int calls = 0;
  modelio::VlmAnswer answer(const std::string&, const std::string& q) override {
    ++calls;
    const auto it = replies.find(q);
    const auto [text, p] = it == replies.end() ? std::pair<std::string, double>{"unknown", 0.5} : it->second;
    modelio::VlmAnswer a;
    a.text = text;
    a.logits = sim::logits_for(p);
    return a;
  }
};

struct ScriptQgen : modelio::QuestionGenerator {
  std::vector<std::string> questions;
  int calls = 0;
  modelio::QgenResult generate(const modelio::QgenRequest&) override {
    ++calls;
    return {questions, std::nullopt};
  }
};

struct MapParaphraser : modelio::Paraphraser {
  std::map<std::pair<std::string, std::string>, std::string> replies;
  int calls = 0;
  modelio::Paraphrase paraphrase(const std::string& q, const std::string& a) override {
    ++calls;
    const auto it = replies.find({q, a});
    return {it == replies.end() ? std::string() : it->second, std::nullopt};
  }
};

struct MapNli : modelio::NliModel {
  std::map<std::string, double> by_premise;
  int calls = 0;
  modelio::Entailment entail(const std::string& premise, const std::string&) override {
    ++calls;
    const auto it = by_premise.find(premise);
    return {it == by_premise.end() ? 0.5 : it->second, std::nullopt};
  }
};

struct CountingNli : modelio::NliModel {
  sim::ExactNli inner{sim::Catalog::standard(), false};
  int calls = 0;
  modelio::Entailment entail(const std::string& p, const std::string& h) override {
    ++calls;
    return inner.entail(p, h);
  }
};

struct StaticTool : modelio::VisionTool {
  std::vector<std::string> statements;
  std::string name() const override { return "static"; }
  modelio::ToolOutput describe(const std::string&) override { return {statements, std::nullopt}; }
};

const std::string kFloorQ = "What colors are the floor tiles?";
const std::string kCountQ = "How many colors are the floor tiles?";

Instance floor_instance() {
  Instance in;
  in.id = "i1";
  in.image_ref = "w1";
  in.question = kCountQ;
  in.gold_answers = {"2"};
  return in;
}

Prediction pred(const std::string& a, double c) {
  Prediction p;
  p.answer = a;
  p.confidence = Confidence(c);
  return p;
}

// ---------------------------------------------------------------------------
// verifier operations

TEST(Run, EarlyExitMakesNoClientCalls) {
  ScriptVlm vlm;
  ScriptQgen qgen;
  MapParaphraser para;
  MapNli nli;
  sim::ExactNegator neg;
  StaticTool tool;
  tool.statements = {"floor_tile_colors = {red, white}."};
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {&tool}};
  RecoverrParams p;
  p.gamma = 0.9;
  const auto res = verifier::run(floor_instance(), pred("2", 0.95), p, set, {});
  EXPECT_TRUE(res.outcome.is_answered());
  EXPECT_EQ(res.outcome.provenance, Provenance::kThreshold);
  EXPECT_EQ(vlm.calls + qgen.calls + para.calls + nli.calls, 0);
  EXPECT_TRUE(res.trace.turns.empty());
  EXPECT_EQ(res.trace.terminal_event, "threshold");
}

TEST(Hypothesis, DemonstrationPairsAndFallback) {
  MapParaphraser para;
  para.replies[{"Is the dog herding or guiding the cows?", "guiding"}] = "The dog is guiding the cows.";
  para.replies[{"Are there any other written numbers visible in the image?", "no"}] =
      "There are no other written numbers visible in the image.\nextra line";
  para.replies[{"What is it?", "a cat"}] = "What is it?";
  para.replies[{"Why?", "x"}] = "  The cat sleeps??  ";
  EXPECT_EQ(verifier::make_hypothesis("Is the dog herding or guiding the cows?", "guiding", para).hypothesis.statement,
            "The dog is guiding the cows.");
  EXPECT_EQ(verifier::make_hypothesis("Are there any other written numbers visible in the image?", "no", para)
                .hypothesis.statement,
            "There are no other written numbers visible in the image.");
  EXPECT_EQ(verifier::make_hypothesis("Empty?", "yes", para).hypothesis.statement,
            "The answer to 'Empty?' is yes.");
  EXPECT_EQ(verifier::make_hypothesis("What is it?", "a cat", para).hypothesis.statement,
            "The answer to 'What is it?' is a cat.");
  EXPECT_EQ(verifier::make_hypothesis("Why?", "x", para).hypothesis.statement, "The cat sleeps");
  EXPECT_THROW(verifier::make_hypothesis("", "x", para), InvalidInput);
}

TEST(Reliability, BoundIsInclusive) {
  RecoverrParams p;
  p.r = 0.2;
  Evidence e;
  e.confidence = Confidence(0.86);
  EXPECT_TRUE(verifier::check_reliability(e, p.evidence_bound()));
  e.confidence = Confidence(0.79);
  EXPECT_FALSE(verifier::check_reliability(e, 0.8));
  e.confidence = Confidence(0.8);
  EXPECT_TRUE(verifier::check_reliability(e, 0.8));
}

TEST(Relevance, AbsoluteDifference) {
  MapNli nli;
  nli.by_premise["S."] = 0.9;
  nli.by_premise["It is not the case that s."] = 0.3;
  verifier::TextNegator neg;
  const Hypothesis h{"H.", "q", "a"};
  EXPECT_NEAR(verifier::relevance("S.", h, nli, neg).delta, 0.6, 1e-12);
  EXPECT_THROW(verifier::relevance("", h, nli, neg), InvalidInput);

  sim::ExactNli exact;
  sim::ExactNegator xneg;
  const Hypothesis hc{"floor_tile_colors_count = 2.", kCountQ, "2"};
  EXPECT_DOUBLE_EQ(verifier::relevance("floor_tile_colors_count = 2.", hc, exact, xneg).delta, 1.0);
  EXPECT_DOUBLE_EQ(verifier::relevance("floor_tile_colors = {red, white}.", hc, exact, xneg).delta, 0.5);
  EXPECT_DOUBLE_EQ(verifier::relevance("has_clock = yes.", hc, exact, xneg).delta, 0.0);
}

TEST(TextNegator, PrefixAndLowercase) {
  verifier::TextNegator n;
  EXPECT_EQ(n.negate("The bus is red."), "It is not the case that the bus is red.");
}

TEST(Sufficiency, FloorEntailmentAndContradiction) {
  CountingNli nli;
  const Hypothesis hc{"floor_tile_colors_count = 2.", kCountQ, "2"};
  EXPECT_DOUBLE_EQ(verifier::sufficiency({}, hc, nli).probability, 0.0);
  EXPECT_EQ(nli.calls, 0);
  Evidence e;
  e.statement = "floor_tile_colors = {red, white}.";
  e.relevance = 1.0;
  EXPECT_DOUBLE_EQ(verifier::sufficiency({e}, hc, nli).probability, 1.0);
  const Hypothesis uk{"bus_flag = uk.", "Which country's flag has the same colors as the bus?", "uk"};
  e.statement = "bus_colors = {yellow, blue}.";
  EXPECT_DOUBLE_EQ(verifier::sufficiency({e}, uk, nli).probability, 0.0);
}

TEST(InitEvidence, ToolVerdicts) {
  sim::ExactNli nli;
  sim::ExactNegator neg;
  RecoverrParams p;
  const Hypothesis hc{"floor_tile_colors_count = 2.", kCountQ, "2"};
  auto none = verifier::init_image_evidences("w1", {}, hc, nli, neg, p);
  EXPECT_TRUE(none.pools.reliable().empty());
  EXPECT_TRUE(none.pools.relevant().empty());

  StaticTool same;
  same.statements = {"floor_tile_colors_count = 2."};
  auto s = verifier::init_image_evidences("w1", {&same}, hc, nli, neg, p);
  ASSERT_EQ(s.pools.relevant().size(), 1u);
  EXPECT_DOUBLE_EQ(*s.pools.relevant()[0].relevance, 1.0);
  EXPECT_EQ(s.pools.reliable().size(), 1u);

  StaticTool other;
  other.statements = {"has_window = yes."};
  auto o = verifier::init_image_evidences("w1", {&other}, hc, nli, neg, p);
  EXPECT_EQ(o.pools.reliable().size(), 1u);
  EXPECT_TRUE(o.pools.relevant().empty());
}

TEST(Collect, KEvidencesWithConfidencesAndDedup) {
  ScriptVlm vlm;
  vlm.replies[kFloorQ] = {"{red, white}", 0.95};
  vlm.replies["Is there a clock?"] = {"yes", 0.7};
  vlm.replies["Is there a window?"] = {"no", 0.6};
  ScriptQgen qgen;
  qgen.questions = {kFloorQ, "Is there a clock?", "Is there a window?"};
  sim::SimParaphraser para;
  MapNli nli;
  sim::ExactNegator neg;
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {}};
  const Hypothesis hc{"floor_tile_colors_count = 2.", kCountQ, "2"};
  verifier::EvidencePools pools;
  auto r = verifier::collect_k_evidences("w1", hc, std::nullopt, pools, {}, set, {}, 3, 1);
  ASSERT_EQ(r.candidates.size(), 3u);
  EXPECT_NEAR(r.candidates[0].evidence.confidence.value(), 0.95, 1e-12);
  EXPECT_EQ(r.candidates[0].evidence.statement, "floor_tile_colors = {red, white}.");

  Evidence known = r.candidates[1].evidence;
  pools.add_reliable(known);
  auto again = verifier::collect_k_evidences("w1", hc, std::nullopt, pools, {}, set, {}, 3, 2);
  EXPECT_EQ(again.candidates.size(), 2u);
  ASSERT_EQ(again.dropped_duplicates.size(), 1u);
  EXPECT_EQ(again.dropped_duplicates[0], "has_clock = yes.");

  auto two = verifier::collect_k_evidences("w1", hc, std::nullopt, {}, {}, set, {}, 2, 1);
  EXPECT_EQ(two.candidates.size(), 2u);
}

TEST(Pools, RelevantMustBeReliable) {
  verifier::EvidencePools pools;
  Evidence e;
  e.statement = "A  b.";
  e.relevance = 0.5;
  EXPECT_THROW(pools.add_relevant(e), InvalidInput);
  EXPECT_TRUE(pools.add_reliable(e));
  e.statement = "a B.";
  EXPECT_FALSE(pools.add_reliable(e));
  EXPECT_TRUE(pools.add_relevant(e));
  EXPECT_TRUE(pools.contains(" A b. "));
}

sim::World floor_world(const std::string& tiles) {
  sim::World w;
  w.id = "w1";
  for (const auto& b : sim::Catalog::standard().base()) w.facts[b.name] = b.domain.front();
  w.facts["floor_tile_colors"] = tiles;
  w.target = "floor_tile_colors_count";
  w.bank = {"Is there a clock?", kFloorQ};
  return w;
}

TEST(Run, RecoversWhenOneEvidenceEntails) {
  ScriptVlm vlm;
  vlm.replies[kFloorQ] = {"{red, white}", 0.95};
  vlm.replies["Is there a clock?"] = {"no", 0.99};
  ScriptQgen qgen;
  qgen.questions = {"Is there a clock?", kFloorQ};
  sim::SimParaphraser para;
  sim::ExactNli nli;
  sim::ExactNegator neg;
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {}};
  RecoverrParams p;
  p.gamma = 0.9;
  const auto res = verifier::run(floor_instance(), pred("2", 0.5), p, set, {});
  EXPECT_TRUE(res.outcome.is_answered());
  EXPECT_EQ(res.outcome.provenance, Provenance::kRecovered);
  EXPECT_EQ(res.trace.exit_turn, 1);
  EXPECT_EQ(res.trace.terminal_event, "sufficient");
  EXPECT_TRUE(harness::replay_trace(res.trace).ok());
}

TEST(Run, NeverReliableAbstainsAfterNTurns) {
  ScriptVlm vlm;  // every sub-answer at 0.5
  ScriptQgen qgen;
  qgen.questions = {kFloorQ, "Is there a clock?"};
  sim::SimParaphraser para;
  sim::ExactNli nli;
  sim::ExactNegator neg;
  StaticTool tool;
  tool.statements = {"has_clock = no."};
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {&tool}};
  RecoverrParams p;
  p.gamma = 0.9;
  p.n_turns = 4;
  p.filter_tool_relevance = false;
  const auto res = verifier::run(floor_instance(), pred("2", 0.5), p, set, {});
  EXPECT_FALSE(res.outcome.is_answered());
  EXPECT_EQ(res.trace.terminal_event, "exhausted");
  EXPECT_EQ(res.trace.exit_turn, 4);
  EXPECT_EQ(res.trace.turns.size(), 4u);
  for (const auto& t : res.trace.turns) {
    for (const auto& v : t.evidences) { EXPECT_FALSE(v.relevant); }
    EXPECT_EQ(t.sufficiency.premise, "has_clock = no.");
  }
  EXPECT_TRUE(harness::replay_trace(res.trace).ok());
}

TEST(Run, TransportFailureFailsClosed) {
  struct Broken : modelio::QuestionGenerator {
    modelio::QgenResult generate(const modelio::QgenRequest&) override { throw TransportError("down"); }
  } qgen;
  ScriptVlm vlm;
  sim::SimParaphraser para;
  sim::ExactNli nli;
  sim::ExactNegator neg;
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {}};
  RecoverrParams p;
  p.gamma = 0.9;
  const auto res = verifier::run(floor_instance(), pred("2", 0.5), p, set, {});
  EXPECT_TRUE(res.failed_closed);
  EXPECT_FALSE(res.outcome.is_answered());
  EXPECT_EQ(res.trace.terminal_event, "failed_closed");
  p.propagate_errors = true;
  EXPECT_THROW(verifier::run(floor_instance(), pred("2", 0.5), p, set, {}), TransportError);
}

TEST(Run, TraceJsonRoundTrip) {
  ScriptVlm vlm;
  vlm.replies[kFloorQ] = {"{red, white}", 0.95};
  ScriptQgen qgen;
  qgen.questions = {kFloorQ};
  sim::SimParaphraser para;
  sim::ExactNli nli;
  sim::ExactNegator neg;
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {}};
  RecoverrParams p;
  p.gamma = 0.9;
  const auto res = verifier::run(floor_instance(), pred("2", 0.5), p, set, {});
  const nlohmann::json j = res.trace;
  const nlohmann::json back = j.get<verifier::RecoverrTrace>();
  EXPECT_EQ(j, back);
}

// Randomized runs over generated worlds; every trace must satisfy the pool
// invariants and survive an offline audit.
TEST(Run, PropertyPoolInvariantsAndSuperset) {
  sim::SimDatasetSpec spec;
  spec.n_instances = 240;
  spec.calibration_size = 0;
  spec.distractor_ratio = 0.4;
  const auto data = sim::gen_dataset(spec, 99);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    sim::SimVlmProfile prof;
    prof.base = sim::ConfidenceDensity::beta(0.6 + 0.35 * u(rng), 5 + 20 * u(rng));
    prof.seed = i;
    sim::SimVlm vlm(data.worlds, prof, sim::Catalog::standard(), false);
    sim::SimQgen qgen(data.worlds);
    sim::SimParaphraser para;
    sim::ExactNli nli(sim::Catalog::standard(), false);
    sim::ExactNegator neg;
    sim::SimVisionTool tool(data.worlds, u(rng), u(rng), i);
    modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {&tool}};
    RecoverrParams p;
    p.r = 0.05 + 0.4 * u(rng);
    p.gamma = u(rng);
    p.n_turns = static_cast<int>(u(rng) * 4);
    p.k_per_turn = 1 + static_cast<int>(u(rng) * 4);
    p.delta_min = u(rng) * 0.5;
    p.p_nli_min = 0.5 + u(rng) * 0.6;
    if (u(rng) < 0.3) p.evidence_conf_bound = u(rng);
    p.filter_tool_relevance = u(rng) < 0.5;

    const auto& in = data.test[i];
    auto a = vlm.answer(in.image_ref, in.question);
    const Prediction pr{a.text, confidence::self_prompt_confidence(a.logits), a.logits, std::nullopt};
    const auto res = verifier::run(in, pr, p, set, {});
    const auto& t = res.trace;

    if (selective::decide(pr.confidence, p.gamma)) { EXPECT_TRUE(res.outcome.is_answered()); }
    if (!selective::decide(pr.confidence, p.gamma)) { EXPECT_NE(res.outcome.provenance, Provenance::kThreshold); }

    std::set<std::string> reliable_keys;
    std::size_t relevant = 0;
    const auto visit = [&](const verifier::EvidenceVerdict& v) {
      if (v.reliable) {
        EXPECT_GE(v.evidence.confidence.value(), p.evidence_bound());
        EXPECT_TRUE(reliable_keys.insert(verifier::normalize_statement(v.evidence.statement)).second);
      }
      if (v.relevant) {
        EXPECT_TRUE(v.reliable);
        ++relevant;
      }
    };
    for (const auto& v : t.tool_evidences) visit(v);
    for (const auto& turn : t.turns) {
      EXPECT_LE(static_cast<int>(turn.questions.size()), p.k_per_turn);
      for (const auto& v : turn.evidences) {
        visit(v);
        if (v.relevant) { EXPECT_GE(v.relevance->delta, p.delta_min); }
      }
    }
    EXPECT_LE(relevant, reliable_keys.size());
    const auto audit = harness::replay_trace(t);
    EXPECT_TRUE(audit.ok()) << in.id << ": " << (audit.problems.empty() ? "" : audit.problems[0]);
  }
}

TEST(Replay, DetectsTampering) {
  ScriptVlm vlm;
  vlm.replies[kFloorQ] = {"{red, white}", 0.95};
  ScriptQgen qgen;
  qgen.questions = {kFloorQ};
  sim::SimParaphraser para;
  sim::ExactNli nli;
  sim::ExactNegator neg;
  modelio::ClientSet set{&vlm, &qgen, &para, &nli, &neg, {}};
  RecoverrParams p;
  p.gamma = 0.9;
  auto t = verifier::run(floor_instance(), pred("2", 0.5), p, set, {}).trace;
  ASSERT_TRUE(harness::replay_trace(t).ok());
  auto raised = t;
  raised.params.p_nli_min = 1.5;
  EXPECT_FALSE(harness::replay_trace(raised).ok());
  auto bound = t;
  bound.params.evidence_conf_bound = 0.99;
  EXPECT_FALSE(harness::replay_trace(bound).ok());
}

// ---------------------------------------------------------------------------
// synthetic world

TEST(ExactNli, Examples) {
  EXPECT_DOUBLE_EQ(sim::exact_nli({"floor_tile_colors = {red, white}."}, "floor_tile_colors_count = 2."), 1.0);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"bus_colors = {yellow, blue}."}, "bus_flag = uk."), 0.0);
  EXPECT_DOUBLE_EQ(sim::exact_nli({}, "bus_flag = uk."), 0.5);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"has_meat = no."}, "diet = vegetarian."), 0.5);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"has_meat = no.", "has_vegetables = yes."}, "diet = vegetarian."), 1.0);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"has_meat = yes."}, "diet = vegetarian."), 0.0);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"has_snow = yes.", "has_snow = no."}, "activity = skiing."), 0.5);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"The bus is red."}, "bus_flag = uk."), 0.5);
  EXPECT_DOUBLE_EQ(sim::exact_nli({"bus_colors \xE2\x89\xA0 {blue, red, white}."}, "bus_flag = uk."), 0.0);
}

TEST(ExactNegate, SwapsOperator) {
  EXPECT_EQ(sim::exact_negate("floor_tile_colors_count = 2."), "floor_tile_colors_count \xE2\x89\xA0 2.");
  EXPECT_EQ(sim::exact_negate("floor_tile_colors_count != 2"), "floor_tile_colors_count = 2.");
  EXPECT_THROW(sim::exact_negate("nonsense"), InvalidInput);
}

TEST(Statements, ParseAndSplit) {
  const auto a = sim::parse_assertion("bus_colors = {white, blue}.");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->value, "{blue, white}");
  EXPECT_FALSE(sim::parse_assertion("bus_colors = {purple}."));
  EXPECT_FALSE(sim::parse_assertion("wings = 2."));
  EXPECT_EQ(sim::split_statements("a = b. c = d."), (std::vector<std::string>{"a = b.", "c = d."}));
}

// Premises made of true facts never contradict the world, and adding more
// true facts never flips a decided verdict.
TEST(ExactNli, PropertySoundAndMonotone) {
  const auto& cat = sim::Catalog::standard();
  std::mt19937_64 rng(17);
  sim::SimDatasetSpec spec;
  spec.n_instances = 150;
  spec.calibration_size = 0;
  const auto data = sim::gen_dataset(spec, 3);
  for (const auto& in : data.test) {
    const auto& w = data.worlds.at(in.image_ref);
    const auto all = cat.complete(w.facts);
    std::vector<std::string> attrs;
    for (const auto& [k, v] : all) attrs.push_back(k);
    std::shuffle(attrs.begin(), attrs.end(), rng);
    const auto& domain = cat.domain(w.target);
    const std::string h_value = domain[std::uniform_int_distribution<std::size_t>(0, domain.size() - 1)(rng)];
    const std::string h = sim::format_assertion({w.target, false, h_value});
    const bool h_true = all.at(w.target) == h_value;
    std::vector<std::string> premise;
    double decided = -1.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(attrs.size(), 8); ++i) {
      premise.push_back(sim::format_assertion({attrs[i], false, all.at(attrs[i])}));
      const double v = sim::exact_nli(premise, h);
      if (v == 1.0) { EXPECT_TRUE(h_true); }
      if (v == 0.0) { EXPECT_FALSE(h_true); }
      if (decided >= 0.0) { EXPECT_EQ(v, decided); }
      if (v != 0.5) decided = v;
    }
  }
}

TEST(Dataset, DeterministicAndComplete) {
  sim::SimDatasetSpec spec;
  spec.n_instances = 1000;
  spec.calibration_size = 300;
  const auto a = sim::gen_dataset(spec, 11);
  const auto b = sim::gen_dataset(spec, 11);
  ASSERT_EQ(a.calibration.size() + a.test.size(), 1000u);
  EXPECT_EQ(a.calibration.size(), 300u);
  const auto& cat = sim::Catalog::standard();
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    EXPECT_EQ(nlohmann::json(a.test[i]), nlohmann::json(b.test[i]));
    const auto& w = a.worlds.at(a.test[i].image_ref);
    EXPECT_EQ(nlohmann::json(w), nlohmann::json(b.worlds.at(a.test[i].image_ref)));
    ASSERT_EQ(a.test[i].gold_answers.size(), 1u);
    EXPECT_EQ(a.test[i].gold_answers[0], cat.evaluate(w.target, w.facts));
    const auto deps = cat.dependencies(w.target);
    for (const auto& q : w.bank) {
      const auto attr = cat.attribute_for(q);
      ASSERT_TRUE(attr);
      EXPECT_NE(std::find(deps.begin(), deps.end(), *attr), deps.end());
    }
  }
  EXPECT_EQ(sim::distractor_count(2, 0.5), 2u);
  EXPECT_EQ(sim::distractor_count(3, 0.0), 0u);
}

TEST(SimQgen, BankRules) {
  sim::WorldStore store;
  auto w = floor_world("{red, white}");
  w.target = "diet";
  w.bank = {"Is there a clock?", "Are there any meat items on the plate?", "Are there vegetables on the plate?"};
  store.add(w);
  sim::SimQgen qgen(store);
  modelio::QgenRequest req;
  req.image_ref = "w1";
  req.k = 10;
  EXPECT_EQ(qgen.generate(req).questions.size(), 3u);
  req.known_evidence = {"has_meat = no.", "has_vegetables = yes."};
  EXPECT_EQ(qgen.generate(req).questions, std::vector<std::string>{"Is there a clock?"});
  req.asked = {"Is there a clock?"};
  EXPECT_TRUE(qgen.generate(req).questions.empty());

  sim::SimDatasetSpec spec;
  spec.n_instances = 50;
  spec.calibration_size = 0;
  const auto data = sim::gen_dataset(spec, 8);
  sim::SimQgen fresh(data.worlds);
  const auto& cat = sim::Catalog::standard();
  for (const auto& in : data.test) {
    modelio::QgenRequest r;
    r.image_ref = in.image_ref;
    r.k = 1;
    const auto q = fresh.generate(r).questions;
    ASSERT_EQ(q.size(), 1u);
    const auto deps = cat.dependencies(data.worlds.at(in.image_ref).target);
    EXPECT_NE(std::find(deps.begin(), deps.end(), *cat.attribute_for(q[0])), deps.end());
  }
}

TEST(Profile, CalibratedDecilesMatch) {
  sim::ConfidenceDensity d = sim::ConfidenceDensity::uniform(0.0, 1.0);
  std::mt19937_64 rng(1);
  std::vector<double> sum(10, 0.0), hits(10, 0.0), n(10, 0.0);
  for (int i = 0; i < 100000; ++i) {
    const double c = d.sample(rng);
    const bool ok = std::uniform_real_distribution<double>(0, 1)(rng) < c;
    const int b = std::min(9, static_cast<int>(c * 10));
    sum[b] += c;
    hits[b] += ok;
    n[b] += 1;
  }
  for (int b = 0; b < 10; ++b) EXPECT_NEAR(hits[b] / n[b], sum[b] / n[b], 0.02) << "bin " << b;
}

TEST(Profile, OverconfidentNeverBelowLatent) {
  sim::SimVlmProfile p;
  p.mode = sim::ConfidenceMode::kOverconfident;
  p.shift = 1.5;
  for (int i = 0; i <= 1000; ++i) {
    const double c = i / 1000.0;
    EXPECT_GE(p.report(c), c);
  }
}

TEST(Profile, PointMassDerivedAlwaysCorrect) {
  sim::SimDatasetSpec spec;
  spec.n_instances = 200;
  spec.calibration_size = 0;
  const auto data = sim::gen_dataset(spec, 4);
  sim::SimVlmProfile p;
  p.derived = sim::ConfidenceDensity::beta(1.0, 20.0);
  sim::SimVlm vlm(data.worlds, p);
  for (const auto& in : data.test) {
    EXPECT_EQ(vlm.answer(in.image_ref, in.question).text, in.gold_answers[0]);
  }
}

TEST(ClosedForm, UniformExamples) {
  sim::SimVlmProfile p;
  p.derived = sim::ConfidenceDensity::uniform(0.0, 1.0);
  EXPECT_NEAR(sim::closed_form_vanilla_risk(p, 0.8), 0.1, 1e-12);
  EXPECT_NEAR(sim::closed_form_vanilla_risk(p, 1.0), 0.0, 1e-12);
  p.mode = sim::ConfidenceMode::kDistorted;
  EXPECT_THROW(sim::closed_form_vanilla_risk(p, 0.5), Unsupported);
}

TEST(ClosedForm, BetaMatchesQuadrature) {
  // Midpoint-rule integration of (1 - c) f(c) over [gamma, 1].
  for (double mean : {0.55, 0.8, 0.95}) {
    for (double gamma : {0.3, 0.6, 0.85}) {
      sim::SimVlmProfile p;
      p.derived = sim::ConfidenceDensity::beta(mean, 20.0);
      const double a = p.derived.alpha(), b = p.derived.beta_param();
      const int steps = 200000;
      double num = 0.0, den = 0.0;
      for (int i = 0; i < steps; ++i) {
        const double c = gamma + (1.0 - gamma) * (i + 0.5) / steps;
        const double f = std::exp((a - 1) * std::log(c) + (b - 1) * std::log1p(-c));
        num += (1 - c) * f;
        den += f;
      }
      EXPECT_NEAR(sim::closed_form_vanilla_risk(p, gamma), num / den, 1e-6) << mean << " " << gamma;
    }
  }
}

// Draws (logits, correct) for the target questions of a generated dataset.
std::vector<confidence::LabeledLogits> sim_samples(const sim::SimVlmProfile& profile, std::size_t n,
                                                   std::uint64_t seed) {
  sim::SimDatasetSpec spec;
  spec.n_instances = n;
  spec.calibration_size = 0;
  const auto data = sim::gen_dataset(spec, seed);
  sim::SimVlm vlm(data.worlds, profile, sim::Catalog::standard(), false);
  std::vector<confidence::LabeledLogits> out;
  for (const auto& in : data.test) {
    const auto a = vlm.answer(in.image_ref, in.question);
    out.push_back({a.logits, a.text == in.gold_answers[0]});
  }
  return out;
}

double ece_of(const std::vector<confidence::LabeledLogits>& s, const confidence::Calibrator& cal) {
  std::vector<confidence::ScoredConfidence> sc;
  for (const auto& x : s) sc.push_back({cal(x.logits), x.correct});
  return confidence::calibration_report(sc).ece;
}

TEST(PlattOnSim, CalibratedStaysCalibrated) {
  sim::SimVlmProfile p;
  p.derived = sim::ConfidenceDensity::uniform(0.0, 1.0);
  p.seed = 3;
  const auto fit = sim_samples(p, 20000, 21);
  const auto held = sim_samples(p, 20000, 22);
  const auto model = confidence::fit_platt(fit);
  EXPECT_LE(ece_of(held, {model}), ece_of(held, {}) + 0.005);
}

TEST(PlattOnSim, OverconfidentUpperBinsExceedAccuracy) {
  sim::SimVlmProfile p;
  p.derived = sim::ConfidenceDensity::uniform(0.0, 1.0);
  p.mode = sim::ConfidenceMode::kOverconfident;
  p.shift = 1.0;
  const auto s = sim_samples(p, 20000, 23);
  std::vector<confidence::ScoredConfidence> sc;
  for (const auto& x : s) sc.push_back({confidence::self_prompt_confidence(x.logits), x.correct});
  const auto report = confidence::calibration_report(sc);
  for (const auto& b : report.bins) {
    if (b.bin_low >= 0.5 && b.count > 0) {
      EXPECT_GT(b.mean_confidence, b.empirical_accuracy) << b.bin_low;
    }
  }
  const auto model = confidence::fit_platt(s);
  EXPECT_LT(ece_of(s, {model}), report.ece);
}

}  // namespace
