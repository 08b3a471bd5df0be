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

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "recoverr/harness/accuracy.hpp"
#include "recoverr/harness/calibration.hpp"
#include "recoverr/harness/config.hpp"
#include "recoverr/harness/eval.hpp"
#include "recoverr/harness/replay.hpp"
#include "recoverr/harness/report.hpp"
#include "recoverr/modelio/backend.hpp"
#include "recoverr/modelio/remote_clients.hpp"
#include "recoverr/sim/dataset.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace recoverr;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("recoverr_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// config

TEST(Config, DefaultsFileAndOverrides) {
  const auto dir = scratch("config");
  std::ofstream(dir / "c.json") << R"({"r": 0.1, "recoverr": {"n_turns": 3}, "paths": {"dataset": "d.jsonl"}})";
  json resolved;
  const auto c = harness::load_config((dir / "c.json").string(),
                                      {"recoverr.k_per_turn=4", "method=vanilla", "model_name=blip"}, &resolved);
  EXPECT_DOUBLE_EQ(c.r, 0.1);
  EXPECT_DOUBLE_EQ(c.recoverr.r, 0.1);
  EXPECT_EQ(c.recoverr.n_turns, 3);
  EXPECT_EQ(c.recoverr.k_per_turn, 4);
  EXPECT_DOUBLE_EQ(c.recoverr.delta_min, 0.2);
  EXPECT_EQ(c.method, harness::Method::kVanilla);
  EXPECT_EQ(c.model_name, "blip");
  EXPECT_EQ(c.paths.dataset, "d.jsonl");
  EXPECT_EQ(resolved["recoverr"]["k_per_turn"], 4);
  EXPECT_EQ(c.params_for(0.7).gamma, 0.7);
  auto tools = c;
  tools.method = harness::Method::kVisionTools;
  EXPECT_EQ(tools.params_for(0.7).n_turns, 0);
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_THROW(harness::load_config("", {"r=1.5"}), ConfigError);
  EXPECT_THROW(harness::load_config("", {"noequals"}), ConfigError);
  EXPECT_THROW(harness::load_config("", {"method=oracle"}), ConfigError);
  EXPECT_THROW(harness::load_config("", {"accuracy.mode=fuzzy"}), ConfigError);
  EXPECT_THROW(harness::load_config("", {"recoverr.n_turns=\"many\""}), ConfigError);
  EXPECT_THROW(harness::load_config("", {"recoverr.k_per_turn=0"}), ConfigError);
  EXPECT_NO_THROW(harness::load_config("", {"recoverr.p_nli_min=1.5"}));
}

// ---------------------------------------------------------------------------
// accuracy

TEST(Accuracy, Examples) {
  EXPECT_DOUBLE_EQ(harness::judge_accuracy("Vegetarian.", {"vegetarian"}, "exact"), 1.0);
  EXPECT_DOUBLE_EQ(harness::judge_accuracy("U.K.", {"Sweden", "Ukraine"}, "exact"), 0.0);
  EXPECT_DOUBLE_EQ(harness::judge_accuracy("Two", {"2"}, "exact"), 1.0);
  EXPECT_DOUBLE_EQ(harness::judge_accuracy("the red bus", {"red bus"}, "exact"), 1.0);
  EXPECT_NEAR(harness::judge_accuracy("red double decker", {"red bus"}, "soft"), 0.4, 1e-12);
  EXPECT_THROW(harness::judge_accuracy("a", {}, "exact"), InvalidInput);
  EXPECT_THROW(harness::judge_accuracy("a", {"a"}, "llm_judge"), ConfigError);
  const harness::JudgeFn half = [](const std::string&, const std::vector<std::string>&, const std::string&) {
    return 0.5;
  };
  EXPECT_DOUBLE_EQ(harness::judge_accuracy("a", {"b"}, "llm_judge", half), 0.5);
}

// ---------------------------------------------------------------------------
// end-to-end on the simulator

struct SimExperiment {
  fs::path root;
  harness::RunConfig config;

  explicit SimExperiment(const std::string& name, std::size_t n = 600, std::size_t cal = 300) {
    root = scratch(name);
    sim::SimDatasetSpec spec;
    spec.n_instances = n;
    spec.calibration_size = cal;
    sim::save_dataset(sim::gen_dataset(spec, 5), root / "data");
    config = harness::load_config(
        "", {"paths.worlds=" + json((root / "data" / "worlds.jsonl").string()).dump(),
             "paths.calibration=" + json((root / "data" / "calibration.jsonl").string()).dump(),
             "paths.dataset=" + json((root / "data" / "test.jsonl").string()).dump(),
             "paths.artifacts=" + json((root / "artifacts").string()).dump(), "seeds.vlm=1",
             "seeds.tools=2", "sim.profile.base.mean=0.8", "recoverr.n_turns=3", "recoverr.k_per_turn=3"});
  }

  harness::EvalResult run(harness::Method m, const std::string& out,
                          std::optional<std::size_t> max = std::nullopt) {
    auto c = config;
    c.method = m;
    c.paths.output = (root / out).string();
    c.max_instances = max;
    const auto bundle = harness::ClientBundle::from_config(c);
    return harness::run_eval(c, *bundle);
  }

  void calibrate() {
    const auto bundle = harness::ClientBundle::from_config(config);
    harness::run_calibration(config, *bundle);
  }
};

TEST(Calibration, ArtifactsRoundTrip) {
  SimExperiment e("calibration");
  e.calibrate();
  const auto a = harness::load_artifacts(e.config.paths.artifacts);
  EXPECT_EQ(a.n_fit + a.n_threshold, 300u);
  ASSERT_TRUE(a.platt);
  EXPECT_EQ(a.threshold_scores.size(), a.n_threshold);
  const auto again = selective::select_threshold(a.threshold_scores, e.config.r);
  EXPECT_EQ(again.gamma, a.threshold.gamma);
  EXPECT_EQ(harness::artifacts_json(harness::artifacts_from_json(harness::artifacts_json(a))),
            harness::artifacts_json(a));
  EXPECT_TRUE(fs::exists(fs::path(e.config.paths.artifacts) / "reliability_after.csv"));

  std::vector<harness::CalibrationSample> tiny(3);
  EXPECT_THROW(harness::calibrate_samples(tiny, 0.2, e.config.calibration), ConfigError);
}

TEST(Eval, MissingArtifactsIsConfigError) {
  SimExperiment e("noartifacts", 40, 20);
  EXPECT_THROW(e.run(harness::Method::kVanilla, "v"), ConfigError);
}

TEST(Eval, DeterministicResumableAndSuperset) {
  SimExperiment e("eval");
  e.calibrate();
  const auto van = e.run(harness::Method::kVanilla, "vanilla");
  const auto rec = e.run(harness::Method::kRecoverr, "recoverr");
  const auto rec2 = e.run(harness::Method::kRecoverr, "recoverr2");
  ASSERT_TRUE(van.complete && rec.complete && rec2.complete);
  ASSERT_EQ(rec.records.size(), 300u);
  for (std::size_t i = 0; i < rec.records.size(); ++i) {
    EXPECT_EQ(harness::record_json(rec.records[i], false), harness::record_json(rec2.records[i], false));
    if (van.records[i].decision == Decision::kAnswered) {
      EXPECT_EQ(rec.records[i].decision, Decision::kAnswered);
    }
  }
  EXPECT_GE(rec.metrics->coverage, van.metrics->coverage);
  EXPECT_EQ(harness::read_text(e.root / "recoverr" / "traces" / harness::trace_file_name(rec.records[0].id)).empty(),
            false);

  // Interrupted run: 120 records, a torn final line, then a resume.
  const auto part = e.run(harness::Method::kRecoverr, "resumed", 120);
  EXPECT_FALSE(part.complete);
  EXPECT_FALSE(part.metrics);
  {
    std::ofstream torn(e.root / "resumed" / "records.jsonl", std::ios::app);
    torn << R"({"id": "half)";
  }
  const auto rest = e.run(harness::Method::kRecoverr, "resumed");
  EXPECT_EQ(rest.resumed, 120u);
  ASSERT_TRUE(rest.complete);
  EXPECT_EQ(json(*rest.metrics), json(*rec.metrics));
  EXPECT_EQ(harness::read_text(e.root / "resumed" / "metrics.json"),
            harness::read_text(e.root / "recoverr" / "metrics.json"));
  EXPECT_EQ(harness::read_records(e.root / "resumed" / "records.jsonl").size(), 300u);

  // Same directory, different parameters.
  auto other = e.config;
  other.recoverr.n_turns = 1;
  other.method = harness::Method::kRecoverr;
  other.paths.output = (e.root / "recoverr").string();
  EXPECT_THROW(harness::run_eval(other, *harness::ClientBundle::from_config(other)), ConfigError);

  for (const auto& entry : fs::directory_iterator(e.root / "recoverr" / "traces")) {
    const auto t = harness::read_json(entry.path()).get<verifier::RecoverrTrace>();
    const auto audit = harness::replay_trace(t);
    EXPECT_TRUE(audit.ok()) << entry.path() << ": " << (audit.problems.empty() ? "" : audit.problems[0]);
  }

  // Report over the finished runs.
  const auto tables = harness::report_tables({e.root / "vanilla", e.root / "recoverr"}, e.root / "report",
                                             e.root / "artifacts");
  ASSERT_EQ(tables.runs.size(), 2u);
  ASSERT_EQ(tables.comparisons.size(), 1u);
  EXPECT_EQ(tables.comparisons[0].method_label, "recoverr");
  for (const char* f : {"table.csv", "table.md", "comparison.csv", "curves/vanilla.csv", "curves/recoverr.csv",
                        "calibration_before.csv", "calibration_after.csv"}) {
    EXPECT_TRUE(fs::exists(e.root / "report" / f)) << f;
  }
  const auto one = harness::build_report({e.root / "recoverr"});
  EXPECT_TRUE(one.comparisons.empty());
  const auto md = harness::percent_table(one);
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 3);
  EXPECT_THROW(harness::build_report({e.root / "resumed_missing"}), Error);

  SimExperiment f("eval_other", 500, 300);
  fs::copy(e.root / "artifacts", f.root / "artifacts", fs::copy_options::recursive);
  f.run(harness::Method::kVanilla, "vanilla");
  EXPECT_THROW(harness::build_report({e.root / "vanilla", f.root / "vanilla"}), ComparisonError);
}

TEST(Eval, VanillaRecordsCarryThresholdProvenance) {
  SimExperiment e("vanilla_only", 200, 100);
  e.calibrate();
  const auto v = e.run(harness::Method::kVanilla, "v");
  for (const auto& r : v.records) {
    EXPECT_EQ(r.provenance, Provenance::kThreshold);
    EXPECT_EQ(r.vanilla_answered, r.decision == Decision::kAnswered);
  }
}

// ---------------------------------------------------------------------------
// model client over a fake chat server

json chat_reply(const std::string& text, const std::vector<std::pair<std::string, double>>& top) {
  json tops = json::array();
  for (const auto& [t, lp] : top) tops.push_back({{"token", t}, {"logprob", lp}});
  json content = json::array();
  if (!top.empty()) content.push_back({{"token", top[0].first}, {"logprob", top[0].second}, {"top_logprobs", tops}});
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}},
                                    {"logprobs", {{"content", content}}}}})}};
}

struct FakeServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::atomic<int> failures_left{0};
  std::atomic<int> fail_status{500};
  std::atomic<int> delay_ms{0};
  std::function<json(const json&)> reply = [](const json&) { return chat_reply("yes", {{"yes", -0.1}}); };

  FakeServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms.load()));
      if (failures_left > 0) {
        --failures_left;
        res.status = fail_status;
        return;
      }
      res.set_content(reply(json::parse(req.body)).dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread.join();
  }

  std::shared_ptr<modelio::HttpChatBackend> backend(int retries = 2) const {
    modelio::BackendConfig c;
    c.id = "fake";
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.model = "m";
    c.max_retries = retries;
    c.retry_backoff_ms = 1;
    c.timeout_ms = 5000;
    return std::make_shared<modelio::HttpChatBackend>(c);
  }
};

modelio::ClientRequest verify_request(const std::string& prompt) {
  modelio::ClientRequest r;
  r.role = modelio::Role::kVlmVerify;
  r.prompt = prompt;
  r.want_logprobs = true;
  return r;
}

TEST(ModelClient, DiskCacheSurvivesRestart) {
  FakeServer fake;
  const auto cache = scratch("cache");
  {
    modelio::ModelClient client(fake.backend(), cache, 2);
    const auto a = client.call(verify_request("p1"));
    ASSERT_TRUE(a.yes_no_logits);
    EXPECT_EQ(client.call(verify_request("p1")), a);
    EXPECT_EQ(client.network_calls(), 1u);
  }
  modelio::ModelClient restarted(fake.backend(), cache, 2);
  restarted.call(verify_request("p1"));
  EXPECT_EQ(restarted.network_calls(), 0u);
  EXPECT_EQ(fake.hits, 1);
  auto other = verify_request("p1");
  other.decode.seed = 9;
  restarted.call(other);
  EXPECT_EQ(fake.hits, 2);
}

TEST(ModelClient, ConcurrentIdenticalRequestsShareOneCall) {
  FakeServer fake;
  fake.delay_ms = 100;
  modelio::ModelClient client(fake.backend(), std::nullopt, 8);
  std::vector<std::thread> threads;
  std::vector<modelio::ClientReply> replies(6);
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&, i] { replies[i] = client.call(verify_request("same")); });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(fake.hits, 1);
  for (const auto& r : replies) EXPECT_EQ(r, replies[0]);
}

TEST(ModelClient, RetriesTransientStatuses) {
  FakeServer fake;
  fake.failures_left = 2;
  modelio::ModelClient client(fake.backend(2), std::nullopt, 1);
  EXPECT_NO_THROW(client.call(verify_request("a")));
  EXPECT_EQ(fake.hits, 3);

  fake.failures_left = 5;
  fake.fail_status = 429;
  EXPECT_THROW(client.call(verify_request("b")), TransportError);

  fake.failures_left = 1;
  fake.fail_status = 400;
  EXPECT_THROW(client.call(verify_request("c")), TransportError);
}

TEST(ModelClient, MissingLogprobsIsCapabilityError) {
  FakeServer fake;
  fake.reply = [](const json&) { return chat_reply("yes", {}); };
  modelio::ModelClient client(fake.backend(), std::nullopt, 1);
  EXPECT_THROW(client.call(verify_request("v")), CapabilityError);
  modelio::ClientRequest nli = verify_request("n");
  nli.role = modelio::Role::kNli;
  EXPECT_THROW(client.call(nli), CapabilityError);
  modelio::ClientRequest free_text = verify_request("q");
  free_text.role = modelio::Role::kQgen;
  free_text.want_logprobs = false;
  EXPECT_NO_THROW(client.call(free_text));
}

TEST(ModelClient, OneSidedTopListGetsFloorLogprob) {
  FakeServer fake;
  fake.reply = [](const json&) { return chat_reply("yes", {{"Yes", -0.2}, {"maybe", -3.0}}); };
  modelio::ModelClient client(fake.backend(), std::nullopt, 1);
  const auto r = client.call(verify_request("v"));
  ASSERT_TRUE(r.yes_no_logits);
  EXPECT_DOUBLE_EQ(r.yes_no_logits->logit_yes, -0.2);
  EXPECT_DOUBLE_EQ(r.yes_no_logits->logit_no, -3.0);
}

TEST(RemoteQgen, StripsNumberingAndDropsAskedQuestions) {
  FakeServer fake;
  std::string seen_prompt;
  fake.reply = [&](const json& body) {
    seen_prompt = body["messages"][0]["content"].get<std::string>();
    return chat_reply("1. Is there a clock?\n2) What colors are the floor tiles?\n\n- Is it raining?\n4. Extra?",
                      {});
  };
  modelio::ModelClient client(fake.backend(), std::nullopt, 1);
  modelio::RemoteQgen qgen(client);
  modelio::QgenRequest req;
  req.question = "How many colors are the floor tiles?";
  req.answer = "2";
  req.k = 3;
  req.asked = {"Is there a clock?"};
  req.known_evidence = {"The floor is tiled."};
  const auto out = qgen.generate(req);
  EXPECT_EQ(out.questions, (std::vector<std::string>{"What colors are the floor tiles?", "Is it raining?"}));
  EXPECT_NE(seen_prompt.find("The floor is tiled."), std::string::npos);
  EXPECT_NE(seen_prompt.find("How many colors are the floor tiles?"), std::string::npos);
}

TEST(RemoteVlm, AnswerThenVerify) {
  FakeServer fake;
  fake.reply = [](const json& body) {
    if (body["max_tokens"] == 1) return chat_reply("no", {{"no", std::log(0.6)}, {"yes", std::log(0.2)}});
    return chat_reply(" Red.\nmore", {{"Red", -0.1}});
  };
  modelio::ModelClient client(fake.backend(), std::nullopt, 1);
  modelio::RemoteVlm vlm(client);
  const auto a = vlm.answer("img.png", "What color is the bus?");
  EXPECT_EQ(a.text, "Red.");
  EXPECT_NEAR(confidence::self_prompt_confidence(a.logits).value(), 0.25, 1e-12);
  EXPECT_EQ(a.transcripts.size(), 2u);
}

}  // namespace
