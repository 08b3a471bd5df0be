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

/** @file config.hpp
 *
 * RunConfig: a JSON document whose every key can be overridden with
 * `path.to.key=value` pairs (value parsed as JSON, else taken as a string).
 */

#ifndef RECOVERR_HARNESS_CONFIG_HPP_
#define RECOVERR_HARNESS_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/harness/io.hpp"
#include "recoverr/modelio/backend.hpp"
#include "recoverr/sim/dataset.hpp"
#include "recoverr/sim/profile.hpp"
#include "recoverr/verifier.hpp"

namespace recoverr::harness {

enum class Method { kVanilla, kVisionTools, kRecoverr };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kVanilla:
      return "vanilla";
    case Method::kVisionTools:
      return "vision_tools";
    case Method::kRecoverr:
      return "recoverr";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "vanilla") return Method::kVanilla;
  if (s == "vision_tools") return Method::kVisionTools;
  if (s == "recoverr") return Method::kRecoverr;
  throw ConfigError("unknown method '" + s + "' (expected vanilla, vision_tools or recoverr)");
}

struct AccuracyConfig {
  std::string mode = "exact";  // exact | soft | llm_judge
  double threshold = 0.5;      // binarization for calibration labels
};

struct CalibrationConfig {
  std::string method = "platt";  // platt | none
  int num_bins = 10;
  std::size_t fit_size = 12000;
  std::size_t threshold_size = 5000;
};

struct Paths {
  std::string dataset;
  std::string calibration;
  std::string cache;
  std::string output;
  std::string artifacts;      // calibration artifacts (calibration.json)
  std::string worlds;         // simulator worlds
  std::string tool_evidence;  // optional precomputed tool statements
};

struct Seeds {
  std::uint64_t vlm = 0;
  std::uint64_t qgen = 0;
  std::uint64_t tools = 0;
  std::uint64_t dataset = 0;
};

struct SimSettings {
  sim::SimVlmProfile profile;
  bool use_tool = true;
  double tool_coverage = 0.3;
  double tool_accuracy = 0.95;
  sim::SimDatasetSpec dataset;
};

struct RunConfig {
  double r = 0.2;
  Method method = Method::kRecoverr;
  std::string model_name = "sim";
  verifier::RecoverrParams recoverr;
  AccuracyConfig accuracy;
  CalibrationConfig calibration;
  Paths paths;
  Seeds seeds;
  std::string backend = "sim";  // sim | http
  std::map<std::string, modelio::BackendConfig> backends;  // vlm, qgen, paraphrase, nli, judge
  SimSettings sim;
  int parallelism = 1;
  bool write_traces = true;
  bool record_transcripts = true;
  std::optional<std::size_t> max_instances;  // stop after this many new instances

  /// Recoverr parameters for a method, with r and gamma filled in.
  verifier::RecoverrParams params_for(double gamma) const {
    verifier::RecoverrParams p = recoverr;
    p.r = r;
    p.gamma = gamma;
    if (method == Method::kVisionTools) p.n_turns = 0;
    return p;
  }

  void validate() const {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("r must lie in [0,1]");
    if (accuracy.mode != "exact" && accuracy.mode != "soft" && accuracy.mode != "llm_judge") {
      throw ConfigError("unknown accuracy mode '" + accuracy.mode + "'");
    }
    if (calibration.method != "platt" && calibration.method != "none") {
      throw ConfigError("unknown calibration method '" + calibration.method + "'");
    }
    if (calibration.num_bins < 1) throw ConfigError("calibration.num_bins must be >= 1");
    if (backend != "sim" && backend != "http") throw ConfigError("backend must be sim or http");
    if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
    try {
      recoverr.validate();
    } catch (const InvalidInput& ex) {
      throw ConfigError(ex.what());
    }
  }
};

inline nlohmann::json default_config_json() {
  RunConfig c;
  nlohmann::json backends = nlohmann::json::object();
  return nlohmann::json{
      {"r", c.r},
      {"method", to_string(c.method)},
      {"model_name", c.model_name},
      {"recoverr",
       {{"n_turns", c.recoverr.n_turns},
        {"k_per_turn", c.recoverr.k_per_turn},
        {"delta_min", c.recoverr.delta_min},
        {"p_nli_min", c.recoverr.p_nli_min},
        {"evidence_conf_bound", nullptr},
        {"tool_confidence", c.recoverr.tool_confidence},
        {"filter_tool_relevance", c.recoverr.filter_tool_relevance},
        {"propagate_errors", c.recoverr.propagate_errors}}},
      {"accuracy", {{"mode", c.accuracy.mode}, {"threshold", c.accuracy.threshold}}},
      {"calibration",
       {{"method", c.calibration.method},
        {"num_bins", c.calibration.num_bins},
        {"fit_size", c.calibration.fit_size},
        {"threshold_size", c.calibration.threshold_size}}},
      {"paths",
       {{"dataset", ""}, {"calibration", ""}, {"cache", ""}, {"output", ""}, {"artifacts", ""},
        {"worlds", ""}, {"tool_evidence", ""}}},
      {"seeds", {{"vlm", 0}, {"qgen", 0}, {"tools", 0}, {"dataset", 0}}},
      {"backend", c.backend},
      {"backends", backends},
      {"sim",
       {{"profile", c.sim.profile},
        {"use_tool", c.sim.use_tool},
        {"tool_coverage", c.sim.tool_coverage},
        {"tool_accuracy", c.sim.tool_accuracy},
        {"dataset", c.sim.dataset}}},
      {"parallelism", c.parallelism},
      {"write_traces", c.write_traces},
      {"record_transcripts", c.record_transcripts},
      {"max_instances", nullptr}};
}

/// Applies "a.b.c=value". Value text that parses as JSON is used as such;
/// anything else is a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  std::string pointer;
  std::size_t start = 0;
  while (start <= key.size()) {
    std::size_t end = key.find('.', start);
    if (end == std::string::npos) end = key.size();
    pointer += "/" + key.substr(start, end - start);
    start = end + 1;
  }
  doc[nlohmann::json::json_pointer(pointer)] = value;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.r = j.value("r", c.r);
    c.method = method_from_string(j.value("method", std::string(to_string(c.method))));
    c.model_name = j.value("model_name", c.model_name);
    if (j.contains("recoverr")) {
      const auto& p = j["recoverr"];
      c.recoverr.n_turns = p.value("n_turns", c.recoverr.n_turns);
      c.recoverr.k_per_turn = p.value("k_per_turn", c.recoverr.k_per_turn);
      c.recoverr.delta_min = p.value("delta_min", c.recoverr.delta_min);
      c.recoverr.p_nli_min = p.value("p_nli_min", c.recoverr.p_nli_min);
      if (p.contains("evidence_conf_bound") && !p["evidence_conf_bound"].is_null()) {
        c.recoverr.evidence_conf_bound = p["evidence_conf_bound"].get<double>();
      }
      c.recoverr.tool_confidence = p.value("tool_confidence", c.recoverr.tool_confidence);
      c.recoverr.filter_tool_relevance =
          p.value("filter_tool_relevance", c.recoverr.filter_tool_relevance);
      c.recoverr.propagate_errors = p.value("propagate_errors", c.recoverr.propagate_errors);
    }
    c.recoverr.r = c.r;
    if (j.contains("accuracy")) {
      c.accuracy.mode = j["accuracy"].value("mode", c.accuracy.mode);
      c.accuracy.threshold = j["accuracy"].value("threshold", c.accuracy.threshold);
    }
    if (j.contains("calibration")) {
      const auto& k = j["calibration"];
      c.calibration.method = k.value("method", c.calibration.method);
      c.calibration.num_bins = k.value("num_bins", c.calibration.num_bins);
      c.calibration.fit_size = k.value("fit_size", c.calibration.fit_size);
      c.calibration.threshold_size = k.value("threshold_size", c.calibration.threshold_size);
    }
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.paths.dataset = p.value("dataset", c.paths.dataset);
      c.paths.calibration = p.value("calibration", c.paths.calibration);
      c.paths.cache = p.value("cache", c.paths.cache);
      c.paths.output = p.value("output", c.paths.output);
      c.paths.artifacts = p.value("artifacts", c.paths.artifacts);
      c.paths.worlds = p.value("worlds", c.paths.worlds);
      c.paths.tool_evidence = p.value("tool_evidence", c.paths.tool_evidence);
    }
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      c.seeds.vlm = s.value("vlm", c.seeds.vlm);
      c.seeds.qgen = s.value("qgen", c.seeds.qgen);
      c.seeds.tools = s.value("tools", c.seeds.tools);
      c.seeds.dataset = s.value("dataset", c.seeds.dataset);
    }
    c.backend = j.value("backend", c.backend);
    if (j.contains("backends")) {
      for (const auto& [role, cfg] : j["backends"].items()) {
        auto b = cfg.get<modelio::BackendConfig>();
        if (!cfg.contains("id")) b.id = role;
        c.backends[role] = b;
      }
    }
    if (j.contains("sim")) {
      const auto& s = j["sim"];
      if (s.contains("profile")) c.sim.profile = s["profile"].get<sim::SimVlmProfile>();
      c.sim.use_tool = s.value("use_tool", c.sim.use_tool);
      c.sim.tool_coverage = s.value("tool_coverage", c.sim.tool_coverage);
      c.sim.tool_accuracy = s.value("tool_accuracy", c.sim.tool_accuracy);
      if (s.contains("dataset")) c.sim.dataset = s["dataset"].get<sim::SimDatasetSpec>();
    }
    c.parallelism = j.value("parallelism", c.parallelism);
    c.write_traces = j.value("write_traces", c.write_traces);
    c.record_transcripts = j.value("record_transcripts", c.record_transcripts);
    if (j.contains("max_instances") && !j["max_instances"].is_null()) {
      c.max_instances = j["max_instances"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

/// Defaults, then the file (if any), then the overrides in order.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             nlohmann::json* resolved = nullptr) {
  nlohmann::json doc = default_config_json();
  if (!path.empty()) doc.merge_patch(read_json(path));
  for (const auto& o : overrides) apply_override(doc, o);
  if (resolved) *resolved = doc;
  return config_from_json(doc);
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_CONFIG_HPP_
