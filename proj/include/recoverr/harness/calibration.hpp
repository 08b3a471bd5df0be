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

#ifndef RECOVERR_HARNESS_CALIBRATION_HPP_
#define RECOVERR_HARNESS_CALIBRATION_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/harness/config.hpp"
#include "recoverr/harness/io.hpp"
#include "recoverr/harness/pipeline.hpp"
#include "recoverr/selective.hpp"

namespace recoverr::harness {

inline constexpr std::size_t kMinCalibrationInstances = 4;

/// One scored calibration instance, as persisted: {id, logit_yes, logit_no,
/// correct, accuracy, token_probs}.
struct CalibrationSample {
  std::string id;
  VerificationLogits logits;
  bool correct = false;
  double accuracy = 0.0;
  std::vector<double> token_probs;
};

inline void to_json(nlohmann::json& j, const CalibrationSample& s) {
  j = nlohmann::json{{"id", s.id},
                     {"logit_yes", s.logits.logit_yes},
                     {"logit_no", s.logits.logit_no},
                     {"correct", s.correct},
                     {"accuracy", s.accuracy},
                     {"token_probs", s.token_probs}};
}

inline void from_json(const nlohmann::json& j, CalibrationSample& s) {
  j.at("id").get_to(s.id);
  s.logits.logit_yes = j.at("logit_yes").get<double>();
  s.logits.logit_no = j.at("logit_no").get<double>();
  j.at("correct").get_to(s.correct);
  s.accuracy = j.value("accuracy", s.correct ? 1.0 : 0.0);
  s.token_probs = j.value("token_probs", std::vector<double>{});
}

/// Sizes of the Platt-fit and threshold parts of a calibration set of n.
/// The configured sizes apply when both fit; otherwise the set is halved.
inline std::pair<std::size_t, std::size_t> calibration_split(std::size_t n, const CalibrationConfig& c) {
  if (n < kMinCalibrationInstances) {
    throw ConfigError("calibration set has " + std::to_string(n) + " instances; at least " +
                      std::to_string(kMinCalibrationInstances) + " are required");
  }
  if (c.fit_size > 0 && c.threshold_size > 0 && n >= c.fit_size + c.threshold_size) {
    return {c.fit_size, c.threshold_size};
  }
  return {n / 2, n - n / 2};
}

struct CalibrationArtifacts {
  double r = 0.0;
  std::string method = "platt";
  std::optional<confidence::PlattModel> platt;
  selective::ThresholdChoice threshold;
  confidence::CalibrationReport before;  // self-prompt confidence, threshold part
  confidence::CalibrationReport after;   // calibrated confidence, threshold part
  std::map<std::string, confidence::CalibrationReport> token_baselines;
  std::size_t n_fit = 0;
  std::size_t n_threshold = 0;
  std::vector<selective::ScoredPrediction> threshold_scores;

  confidence::Calibrator calibrator() const { return confidence::Calibrator{platt}; }
};

inline nlohmann::json artifacts_json(const CalibrationArtifacts& a) {
  nlohmann::json baselines = nlohmann::json::object();
  for (const auto& [name, rep] : a.token_baselines) baselines[name] = rep;
  return nlohmann::json{{"r", a.r},
                        {"method", a.method},
                        {"platt", a.platt ? nlohmann::json(*a.platt) : nlohmann::json(nullptr)},
                        {"gamma", a.threshold.gamma},
                        {"threshold_coverage", a.threshold.coverage},
                        {"threshold_risk", selective::optional_json(a.threshold.risk)},
                        {"before", a.before},
                        {"after", a.after},
                        {"token_baselines", baselines},
                        {"n_fit", a.n_fit},
                        {"n_threshold", a.n_threshold}};
}

inline confidence::CalibrationReport report_from_json(const nlohmann::json& j) {
  confidence::CalibrationReport r;
  r.ece = j.at("ece").get<double>();
  for (const auto& b : j.at("bins")) {
    confidence::CalibrationBin bin;
    bin.bin_low = b.at("bin_low").get<double>();
    bin.bin_high = b.at("bin_high").get<double>();
    bin.count = b.at("count").get<std::size_t>();
    bin.mean_confidence = b.at("mean_confidence").is_null() ? 0.0 : b.at("mean_confidence").get<double>();
    bin.empirical_accuracy =
        b.at("empirical_accuracy").is_null() ? 0.0 : b.at("empirical_accuracy").get<double>();
    r.bins.push_back(bin);
  }
  return r;
}

inline CalibrationArtifacts artifacts_from_json(const nlohmann::json& j) {
  CalibrationArtifacts a;
  a.r = j.at("r").get<double>();
  a.method = j.at("method").get<std::string>();
  if (!j.at("platt").is_null()) a.platt = j.at("platt").get<confidence::PlattModel>();
  a.threshold.gamma = j.at("gamma").get<double>();
  a.threshold.coverage = j.at("threshold_coverage").get<double>();
  a.threshold.risk = selective::optional_from_json(j.at("threshold_risk"));
  a.before = report_from_json(j.at("before"));
  a.after = report_from_json(j.at("after"));
  for (const auto& [name, rep] : j.at("token_baselines").items()) {
    a.token_baselines[name] = report_from_json(rep);
  }
  a.n_fit = j.at("n_fit").get<std::size_t>();
  a.n_threshold = j.at("n_threshold").get<std::size_t>();
  return a;
}

/// Scores every calibration instance with the VLM (uncalibrated).
inline std::vector<CalibrationSample> score_calibration_set(const std::vector<Instance>& instances,
                                                            modelio::VisionLanguageModel& vlm,
                                                            const AccuracyJudge& judge,
                                                            double correct_threshold) {
  std::vector<CalibrationSample> out;
  out.reserve(instances.size());
  const confidence::Calibrator raw;
  for (const auto& in : instances) {
    auto p = predict(in, vlm, raw, judge);
    CalibrationSample s;
    s.id = in.id;
    s.logits = p.logits;
    s.accuracy = *p.prediction.accuracy;
    s.correct = s.accuracy >= correct_threshold;
    s.token_probs = std::move(p.token_probs);
    out.push_back(std::move(s));
  }
  return out;
}

/// Fits Platt on the first part, picks gamma@r on the second and reports
/// calibration before and after on the second.
inline CalibrationArtifacts calibrate_samples(const std::vector<CalibrationSample>& samples, double r,
                                              const CalibrationConfig& config) {
  const auto [n_fit, n_thr] = calibration_split(samples.size(), config);
  CalibrationArtifacts a;
  a.r = r;
  a.method = config.method;
  a.n_fit = n_fit;
  a.n_threshold = n_thr;

  if (config.method == "platt") {
    std::vector<confidence::LabeledLogits> fit;
    fit.reserve(n_fit);
    for (std::size_t i = 0; i < n_fit; ++i) fit.push_back({samples[i].logits, samples[i].correct});
    a.platt = confidence::fit_platt(fit);
  }
  const confidence::Calibrator calibrated{a.platt};
  const confidence::Calibrator raw;

  std::vector<confidence::ScoredConfidence> before;
  std::vector<confidence::ScoredConfidence> after;
  std::map<std::string, std::vector<confidence::ScoredConfidence>> token;
  for (std::size_t i = n_fit; i < n_fit + n_thr; ++i) {
    const auto& s = samples[i];
    const Confidence c = calibrated(s.logits);
    a.threshold_scores.push_back({c.value(), s.accuracy});
    before.push_back({raw(s.logits), s.correct});
    after.push_back({c, s.correct});
    if (!s.token_probs.empty()) {
      using confidence::TokenAggregation;
      token["product"].push_back({confidence::token_seq_confidence(s.token_probs, TokenAggregation::kProduct), s.correct});
      token["mean"].push_back({confidence::token_seq_confidence(s.token_probs, TokenAggregation::kMean), s.correct});
      token["first"].push_back({confidence::token_seq_confidence(s.token_probs, TokenAggregation::kFirst), s.correct});
    }
  }
  a.threshold = selective::select_threshold(a.threshold_scores, r);
  a.before = confidence::calibration_report(before, config.num_bins);
  a.after = confidence::calibration_report(after, config.num_bins);
  for (const auto& [name, scored] : token) {
    if (scored.size() == n_thr) a.token_baselines[name] = confidence::calibration_report(scored, config.num_bins);
  }
  return a;
}

inline void write_bins_csv(const std::filesystem::path& path, const confidence::CalibrationReport& r) {
  std::string text = "bin_low,bin_high,mean_confidence,empirical_accuracy,count\n";
  for (const auto& b : r.bins) {
    text += nlohmann::json(b.bin_low).dump() + "," + nlohmann::json(b.bin_high).dump() + ",";
    text += b.count ? nlohmann::json(b.mean_confidence).dump() : std::string();
    text += ",";
    text += b.count ? nlohmann::json(b.empirical_accuracy).dump() : std::string();
    text += "," + std::to_string(b.count) + "\n";
  }
  write_text_atomic(path, text);
}

/// Writes calibration.json, platt.json, calibration_samples.jsonl,
/// threshold_scores.jsonl and reliability-curve CSVs into dir.
inline void save_artifacts(const CalibrationArtifacts& a, const std::vector<CalibrationSample>& samples,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "calibration.json", artifacts_json(a).dump(2) + "\n");
  if (a.platt) write_text_atomic(dir / "platt.json", nlohmann::json(*a.platt).dump(2) + "\n");
  std::vector<nlohmann::json> rows;
  for (const auto& s : samples) rows.emplace_back(s);
  write_jsonl(dir / "calibration_samples.jsonl", rows);
  rows.clear();
  for (const auto& s : a.threshold_scores) rows.push_back({{"confidence", s.confidence}, {"accuracy", s.accuracy}});
  write_jsonl(dir / "threshold_scores.jsonl", rows);
  write_bins_csv(dir / "reliability_before.csv", a.before);
  write_bins_csv(dir / "reliability_after.csv", a.after);
  for (const auto& [name, rep] : a.token_baselines) write_bins_csv(dir / ("reliability_" + name + ".csv"), rep);
}

inline CalibrationArtifacts load_artifacts(const std::filesystem::path& dir) {
  auto a = artifacts_from_json(read_json(dir / "calibration.json"));
  if (std::filesystem::exists(dir / "threshold_scores.jsonl")) {
    for_each_jsonl(dir / "threshold_scores.jsonl", [&](const nlohmann::json& j) {
      a.threshold_scores.push_back({j.at("confidence").get<double>(), j.at("accuracy").get<double>()});
    });
  }
  return a;
}

/// The `calibrate` step: scores the calibration file, fits, selects gamma
/// and persists everything under paths.artifacts.
inline CalibrationArtifacts run_calibration(const RunConfig& config, const ClientBundle& bundle) {
  if (config.paths.calibration.empty()) throw ConfigError("paths.calibration is not set");
  if (!std::filesystem::exists(config.paths.calibration)) {
    throw ConfigError("calibration dataset not found: " + config.paths.calibration);
  }
  const auto instances = read_instances(config.paths.calibration);
  calibration_split(instances.size(), config.calibration);
  const AccuracyJudge judge{config.accuracy.mode, bundle.judge()};
  const auto samples =
      score_calibration_set(instances, *bundle.set().vlm, judge, config.accuracy.threshold);
  auto artifacts = calibrate_samples(samples, config.r, config.calibration);
  if (!config.paths.artifacts.empty()) save_artifacts(artifacts, samples, config.paths.artifacts);
  return artifacts;
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_CALIBRATION_HPP_
