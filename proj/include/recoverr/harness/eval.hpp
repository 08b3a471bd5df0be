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

/** @file eval.hpp
 *
 * The evaluation loop. Instances go to a bounded worker pool; finished
 * records are appended to records.jsonl strictly in dataset order, so an
 * interrupted run always leaves a prefix and resuming it yields the same
 * file as an uninterrupted run.
 *
 * Output directory layout:
 *
 *     run_meta.json    dataset digest, method, model, r, gamma, parameters
 *     records.jsonl    one RunRecord per instance
 *     traces/<id>.json one verification trace per instance
 *     metrics.json     MetricsReport, written once every instance is done
 *     metrics.csv      the same as one CSV row
 */

#ifndef RECOVERR_HARNESS_EVAL_HPP_
#define RECOVERR_HARNESS_EVAL_HPP_

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/error.hpp"
#include "recoverr/harness/calibration.hpp"
#include "recoverr/harness/config.hpp"
#include "recoverr/harness/io.hpp"
#include "recoverr/harness/pipeline.hpp"
#include "recoverr/modelio/cache.hpp"
#include "recoverr/selective.hpp"
#include "recoverr/verifier.hpp"

namespace recoverr::harness {

struct RunRecord {
  std::string id;
  std::string answer;  // the VLM's answer, whether or not it was given
  double confidence = 0.0;
  std::optional<VerificationLogits> logits;
  double accuracy = 0.0;
  Decision decision = Decision::kAbstained;
  Provenance provenance = Provenance::kThreshold;
  bool vanilla_answered = false;
  bool failed_closed = false;
  std::string terminal_event;
  int exit_turn = 0;
  std::string trace_ref;
  double wall_ms = 0.0;
  CallCounts calls;

  selective::OutcomeRow outcome_row() const {
    return selective::OutcomeRow{decision == Decision::kAnswered, accuracy, provenance,
                                 vanilla_answered, failed_closed};
  }
};

inline nlohmann::json record_json(const RunRecord& r, bool with_wall_time = true) {
  nlohmann::json j{{"id", r.id},
                   {"answer", r.answer},
                   {"confidence", r.confidence},
                   {"logits", r.logits ? nlohmann::json(*r.logits) : nlohmann::json(nullptr)},
                   {"accuracy", r.accuracy},
                   {"decision", to_string(r.decision)},
                   {"provenance", to_string(r.provenance)},
                   {"vanilla_answered", r.vanilla_answered},
                   {"failed_closed", r.failed_closed},
                   {"terminal_event", r.terminal_event},
                   {"exit_turn", r.exit_turn},
                   {"trace_ref", r.trace_ref},
                   {"calls", r.calls}};
  if (with_wall_time) j["wall_ms"] = r.wall_ms;
  return j;
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  j.at("id").get_to(r.id);
  j.at("answer").get_to(r.answer);
  j.at("confidence").get_to(r.confidence);
  if (!j.at("logits").is_null()) r.logits = j.at("logits").get<VerificationLogits>();
  j.at("accuracy").get_to(r.accuracy);
  r.decision = decision_from_string(j.at("decision").get<std::string>());
  r.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  j.at("vanilla_answered").get_to(r.vanilla_answered);
  j.at("failed_closed").get_to(r.failed_closed);
  j.at("terminal_event").get_to(r.terminal_event);
  j.at("exit_turn").get_to(r.exit_turn);
  j.at("trace_ref").get_to(r.trace_ref);
  r.wall_ms = j.value("wall_ms", 0.0);
  r.calls = j.at("calls").get<CallCounts>();
  return r;
}

/// The decision-relevant part of a record: id, decision, given answer and
/// accuracy. Two runs that agree on this agree on every metric.
inline nlohmann::json outcome_projection(const RunRecord& r) {
  return nlohmann::json{{"id", r.id},
                        {"decision", to_string(r.decision)},
                        {"output", r.decision == Decision::kAnswered ? nlohmann::json(r.answer) : nullptr},
                        {"accuracy", r.accuracy}};
}

inline selective::MetricsReport metrics_of(const std::vector<RunRecord>& records) {
  std::vector<selective::OutcomeRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(r.outcome_row());
  return selective::compute_metrics(rows);
}

struct InstanceResult {
  RunRecord record;
  verifier::RecoverrTrace trace;
};

inline std::string trace_file_name(const std::string& id) {
  std::string out = id;
  for (auto& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return out + ".json";
}

/// Runs one instance through the chosen method.
inline InstanceResult evaluate_instance(const Instance& instance, Method method,
                                        const verifier::RecoverrParams& params,
                                        const modelio::ClientSet& shared,
                                        const confidence::Calibrator& calibrator,
                                        const AccuracyJudge& judge) {
  const auto start = std::chrono::steady_clock::now();
  CountedClients counted(shared);
  auto clients = counted.set();
  InstanceResult out;
  auto& rec = out.record;
  rec.id = instance.id;
  rec.trace_ref = "traces/" + trace_file_name(instance.id);

  std::optional<InitialPrediction> initial;
  try {
    initial = predict(instance, *clients.vlm, calibrator, judge);
  } catch (const TransportError& ex) {
    if (params.propagate_errors) throw;
    rec.failed_closed = true;
    rec.terminal_event = "failed_closed";
    out.trace.instance_id = instance.id;
    out.trace.image_ref = instance.image_ref;
    out.trace.question = instance.question;
    out.trace.params = params;
    out.trace.terminal_event = "failed_closed";
    out.trace.error = ex.what();
  }

  if (initial) {
    const Prediction& pred = initial->prediction;
    rec.answer = pred.answer;
    rec.confidence = pred.confidence.value();
    rec.logits = initial->logits;
    rec.accuracy = *pred.accuracy;
    rec.vanilla_answered = selective::decide(pred.confidence, params.gamma);

    if (method == Method::kVanilla) {
      auto& t = out.trace;
      t.instance_id = instance.id;
      t.image_ref = instance.image_ref;
      t.question = instance.question;
      t.initial_answer = pred.answer;
      t.initial_confidence = rec.confidence;
      t.params = params;
      t.decision = rec.vanilla_answered ? Decision::kAnswered : Decision::kAbstained;
      t.provenance = Provenance::kThreshold;
      t.terminal_event = rec.vanilla_answered ? "threshold" : "below_threshold";
    } else {
      auto result = verifier::run(instance, pred, params, clients, calibrator);
      out.trace = std::move(result.trace);
      rec.failed_closed = result.failed_closed;
    }
    rec.decision = out.trace.decision;
    rec.provenance = out.trace.provenance;
    rec.terminal_event = out.trace.terminal_event;
    rec.exit_turn = out.trace.exit_turn;
  }
  rec.calls = counted.counts();
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

struct RunMeta {
  std::string dataset_sha256;
  std::string dataset_path;
  Method method = Method::kRecoverr;
  std::string model;
  double r = 0.0;
  double gamma = selective::kAbstainAll;
  nlohmann::json params;
  std::size_t n = 0;
};

inline nlohmann::json meta_json(const RunMeta& m) {
  return nlohmann::json{{"dataset_sha256", m.dataset_sha256},
                        {"dataset_path", m.dataset_path},
                        {"method", to_string(m.method)},
                        {"model", m.model},
                        {"r", m.r},
                        {"gamma", m.gamma},
                        {"params", m.params},
                        {"n", m.n}};
}

inline RunMeta meta_from_json(const nlohmann::json& j) {
  RunMeta m;
  j.at("dataset_sha256").get_to(m.dataset_sha256);
  m.dataset_path = j.value("dataset_path", std::string());
  m.method = method_from_string(j.at("method").get<std::string>());
  j.at("model").get_to(m.model);
  j.at("r").get_to(m.r);
  j.at("gamma").get_to(m.gamma);
  m.params = j.at("params");
  j.at("n").get_to(m.n);
  return m;
}

struct EvalOptions {
  int parallelism = 1;
  std::optional<std::filesystem::path> output_dir;  // in-memory only when empty
  bool write_traces = true;
  std::optional<std::size_t> max_new_instances;  // stop early (resumable)
};

struct EvalResult {
  std::vector<RunRecord> records;  // dataset order
  std::optional<selective::MetricsReport> metrics;  // set once every instance is done
  std::size_t resumed = 0;  // records found on disk at start
  bool complete = false;
};

namespace detail {

// Loads complete record lines and cuts off a trailing partial line.
inline std::vector<RunRecord> load_records_for_resume(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  if (!std::filesystem::exists(path)) return out;
  std::string text = read_text(path);
  const auto last_newline = text.rfind('\n');
  const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (keep != text.size()) {
    std::filesystem::resize_file(path, keep);
    text.resize(keep);
  }
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw InvalidInput(path.string() + ": corrupt record: " + ex.what());
    }
  }
  return out;
}

}  // namespace detail

inline void write_metrics(const std::filesystem::path& dir, const RunMeta& meta,
                          const selective::MetricsReport& m);

/// Evaluates every instance not already recorded in the output directory.
inline EvalResult evaluate(const std::vector<Instance>& instances, Method method,
                           const verifier::RecoverrParams& params, const modelio::ClientSet& clients,
                           const confidence::Calibrator& calibrator, const AccuracyJudge& judge,
                           const EvalOptions& options, const RunMeta& meta) {
  if (instances.empty()) throw InvalidInput("evaluate: empty dataset");
  params.validate();
  EvalResult result;
  std::filesystem::path records_path;
  std::ofstream sink;
  std::map<std::string, RunRecord> done;

  if (options.output_dir) {
    const auto& dir = *options.output_dir;
    std::filesystem::create_directories(dir);
    const auto meta_path = dir / "run_meta.json";
    const nlohmann::json mj = meta_json(meta);
    if (std::filesystem::exists(meta_path)) {
      if (read_json(meta_path) != mj) {
        throw ConfigError("output directory " + dir.string() +
                          " holds a different run (run_meta.json differs); use a fresh directory");
      }
    } else {
      write_text_atomic(meta_path, mj.dump(2) + "\n");
    }
    records_path = dir / "records.jsonl";
    for (auto& r : detail::load_records_for_resume(records_path)) {
      const std::string id = r.id;
      done.emplace(id, std::move(r));
    }
    result.resumed = done.size();
    sink.open(records_path, std::ios::app | std::ios::binary);
    if (!sink) throw Error("cannot append to " + records_path.string());
    if (options.write_traces) std::filesystem::create_directories(dir / "traces");
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!done.count(instances[i].id)) todo.push_back(i);
  }
  const std::size_t limit =
      options.max_new_instances ? std::min(*options.max_new_instances, todo.size()) : todo.size();

  std::vector<std::optional<RunRecord>> fresh(instances.size());
  std::mutex mu;
  std::map<std::size_t, std::string> ready;
  std::size_t write_pos = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::string failed_id;

  const auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= limit || stop.load()) return;
      const Instance& in = instances[todo[k]];
      try {
        auto res = evaluate_instance(in, method, params, clients, calibrator, judge);
        if (options.output_dir && options.write_traces) {
          write_text_atomic(*options.output_dir / res.record.trace_ref,
                            nlohmann::json(res.trace).dump(1) + "\n");
        }
        std::string line = record_json(res.record).dump() + "\n";
        std::lock_guard<std::mutex> lock(mu);
        fresh[todo[k]] = std::move(res.record);
        ready.emplace(k, std::move(line));
        while (!ready.empty() && ready.begin()->first == write_pos) {
          if (sink.is_open()) {
            sink << ready.begin()->second;
            sink.flush();
          }
          ready.erase(ready.begin());
          ++write_pos;
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) {
          failure = std::current_exception();
          failed_id = in.id;
        }
        stop = true;
        return;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(options.parallelism, static_cast<int>(std::max<std::size_t>(limit, 1))));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (sink.is_open()) sink.close();
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const CapabilityError& ex) {
      throw CapabilityError("instance " + failed_id + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error("instance " + failed_id + ": " + ex.what());
    }
  }

  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (auto it = done.find(instances[i].id); it != done.end()) {
      result.records.push_back(it->second);
    } else if (fresh[i]) {
      result.records.push_back(std::move(*fresh[i]));
    }
  }
  result.complete = result.records.size() == instances.size();
  if (result.complete) {
    if (options.output_dir) {
      // Metrics come from the persisted records alone.
      const auto persisted = detail::load_records_for_resume(records_path);
      result.metrics = metrics_of(persisted);
      write_metrics(*options.output_dir, meta, *result.metrics);
    } else {
      result.metrics = metrics_of(result.records);
    }
  }
  return result;
}

inline std::string metrics_csv_header() {
  return "method,model,r,gamma,n,coverage,risk,effective_reliability,selective_recall,"
         "answered_correct,answered_incorrect,abstained,failed_closed,d_abstain,d_selected,"
         "d_recovered,recovered_risk,dataset_sha256";
}

inline std::string csv_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v).dump() : std::string();
}

inline std::string metrics_csv_row(const RunMeta& meta, const selective::MetricsReport& m) {
  std::string row = std::string(to_string(meta.method)) + "," + meta.model + "," +
                    nlohmann::json(meta.r).dump() + "," + nlohmann::json(meta.gamma).dump() + "," +
                    std::to_string(m.n) + "," + nlohmann::json(m.coverage).dump() + "," +
                    csv_number(m.risk) + "," + nlohmann::json(m.effective_reliability).dump() + "," +
                    csv_number(m.selective_recall) + "," + std::to_string(m.answered_correct) + "," +
                    std::to_string(m.answered_incorrect) + "," + std::to_string(m.abstained) + "," +
                    std::to_string(m.failed_closed) + "," + std::to_string(m.vanilla_abstain_size) +
                    "," + std::to_string(m.vanilla_answer_size) + "," +
                    std::to_string(m.recovered_size) + "," + csv_number(m.recovered_risk) + "," +
                    meta.dataset_sha256;
  return row;
}

inline void write_metrics(const std::filesystem::path& dir, const RunMeta& meta,
                          const selective::MetricsReport& m) {
  write_text_atomic(dir / "metrics.json", nlohmann::json(m).dump(2) + "\n");
  write_text_atomic(dir / "metrics.csv", metrics_csv_header() + "\n" + metrics_csv_row(meta, m) + "\n");
}

inline std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) { out.push_back(record_from_json(j)); });
  return out;
}

/// The `run` step: loads calibration artifacts and the dataset, then
/// evaluates into paths.output.
inline EvalResult run_eval(const RunConfig& config, const ClientBundle& bundle) {
  if (config.paths.dataset.empty()) throw ConfigError("paths.dataset is not set");
  if (!std::filesystem::exists(config.paths.dataset)) {
    throw ConfigError("dataset not found: " + config.paths.dataset);
  }
  if (config.paths.artifacts.empty() ||
      !std::filesystem::exists(std::filesystem::path(config.paths.artifacts) / "calibration.json")) {
    throw ConfigError("calibration artifacts not found; run `calibrate` first (paths.artifacts)");
  }
  const auto artifacts = load_artifacts(config.paths.artifacts);
  const auto instances = read_instances(config.paths.dataset);
  double gamma = artifacts.threshold.gamma;
  if (config.r != artifacts.r) {
    if (artifacts.threshold_scores.empty()) {
      throw ConfigError("artifacts were calibrated for a different r and hold no threshold scores");
    }
    gamma = selective::select_threshold(artifacts.threshold_scores, config.r).gamma;
  }
  const auto params = config.params_for(gamma);

  RunMeta meta;
  meta.dataset_sha256 = modelio::sha256_hex(read_text(config.paths.dataset));
  meta.dataset_path = config.paths.dataset;
  meta.method = config.method;
  meta.model = config.model_name;
  meta.r = config.r;
  meta.gamma = params.gamma;
  meta.params = params;
  meta.n = instances.size();

  EvalOptions options;
  options.parallelism = config.parallelism;
  if (!config.paths.output.empty()) options.output_dir = config.paths.output;
  options.write_traces = config.write_traces;
  options.max_new_instances = config.max_instances;
  const AccuracyJudge judge{config.accuracy.mode, bundle.judge()};
  return evaluate(instances, config.method, params, bundle.set(), artifacts.calibrator(), judge,
                  options, meta);
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_EVAL_HPP_
