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

// recoverr command line: calibrate, select-threshold, run, simulate gen,
// report, replay-trace.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/harness/calibration.hpp"
#include "recoverr/harness/config.hpp"
#include "recoverr/harness/eval.hpp"
#include "recoverr/harness/io.hpp"
#include "recoverr/harness/pipeline.hpp"
#include "recoverr/harness/replay.hpp"
#include "recoverr/harness/report.hpp"
#include "recoverr/selective.hpp"
#include "recoverr/sim/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace recoverr;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kAuditFailed = 3 };

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<double> r;
  std::string method;
  std::string dataset;
  std::string calibration;
  std::string artifacts;
  std::string output;
  std::string worlds;
  bool print_config = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON config file");
    cmd->add_option("-s,--set", overrides, "override a config key, e.g. recoverr.n_turns=5")
        ->take_all();
    cmd->add_option("--r", r, "target risk");
    cmd->add_option("--method", method, "vanilla | vision_tools | recoverr");
    cmd->add_option("--dataset", dataset, "paths.dataset");
    cmd->add_option("--calibration", calibration, "paths.calibration");
    cmd->add_option("--artifacts", artifacts, "paths.artifacts");
    cmd->add_option("--output", output, "paths.output");
    cmd->add_option("--worlds", worlds, "paths.worlds (sim backend)");
    cmd->add_flag("--print-config", print_config, "print the resolved config");
  }

  harness::RunConfig load() const {
    std::vector<std::string> all = overrides;
    const auto str = [&](const char* key, const std::string& v) {
      if (!v.empty()) all.push_back(std::string(key) + "=" + json(v).dump());
    };
    if (r) all.push_back("r=" + json(*r).dump());
    str("method", method);
    str("paths.dataset", dataset);
    str("paths.calibration", calibration);
    str("paths.artifacts", artifacts);
    str("paths.output", output);
    str("paths.worlds", worlds);
    json resolved;
    auto cfg = harness::load_config(config_path, all, &resolved);
    if (print_config) std::cerr << resolved.dump(2) << "\n";
    return cfg;
  }
};

int cmd_calibrate(const ConfigFlags& flags) {
  const auto config = flags.load();
  const auto bundle = harness::ClientBundle::from_config(config);
  const auto a = harness::run_calibration(config, *bundle);
  json out = harness::artifacts_json(a);
  out.erase("before");
  out.erase("after");
  out["ece_before"] = a.before.ece;
  out["ece_after"] = a.after.ece;
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_select_threshold(const std::string& artifacts, const std::string& scores, double r) {
  std::vector<selective::ScoredPrediction> points;
  if (!scores.empty()) {
    harness::for_each_jsonl(scores, [&](const json& j) {
      points.push_back({j.at("confidence").get<double>(), j.at("accuracy").get<double>()});
    });
  } else {
    points = harness::load_artifacts(artifacts).threshold_scores;
  }
  const auto choice = selective::select_threshold(points, r);
  std::cout << json{{"r", r},
                    {"gamma", choice.gamma},
                    {"coverage", choice.coverage},
                    {"risk", selective::optional_json(choice.risk)},
                    {"n", points.size()}}
                   .dump(2)
            << "\n";
  return kOk;
}

int cmd_run(const ConfigFlags& flags) {
  const auto config = flags.load();
  const auto bundle = harness::ClientBundle::from_config(config);
  const auto result = harness::run_eval(config, *bundle);
  json out{{"records", result.records.size()},
           {"resumed", result.resumed},
           {"complete", result.complete}};
  if (result.metrics) out["metrics"] = *result.metrics;
  if (!config.paths.output.empty()) out["output"] = config.paths.output;
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int cmd_simulate_gen(const std::string& out_dir, std::uint64_t seed, const std::string& spec_path,
                     std::size_t n, std::size_t calibration_size, double distractor_ratio) {
  sim::SimDatasetSpec spec;
  if (!spec_path.empty()) spec = harness::read_json(spec_path).get<sim::SimDatasetSpec>();
  if (n) spec.n_instances = n;
  if (calibration_size) spec.calibration_size = calibration_size;
  if (distractor_ratio >= 0.0) spec.distractor_ratio = distractor_ratio;
  const auto data = sim::gen_dataset(spec, seed);
  sim::save_dataset(data, out_dir);
  harness::write_text_atomic(fs::path(out_dir) / "spec.json",
                             json{{"seed", seed}, {"spec", spec}}.dump(2) + "\n");
  std::cout << json{{"worlds", (fs::path(out_dir) / "worlds.jsonl").string()},
                    {"calibration", (fs::path(out_dir) / "calibration.jsonl").string()},
                    {"test", (fs::path(out_dir) / "test.jsonl").string()},
                    {"n_calibration", data.calibration.size()},
                    {"n_test", data.test.size()}}
                   .dump(2)
            << "\n";
  return kOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir,
               const std::string& calibration) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  std::optional<fs::path> cal;
  if (!calibration.empty()) cal = calibration;
  const auto tables = harness::report_tables(dirs, out_dir, cal);
  std::cout << harness::percent_table(tables);
  return kOk;
}

int cmd_replay(const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
    } else {
      files.emplace_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  std::size_t bad = 0;
  for (const auto& f : files) {
    const auto trace = harness::read_json(f).get<verifier::RecoverrTrace>();
    const auto audit = harness::replay_trace(trace);
    if (audit.ok()) {
      if (files.size() == 1) {
        std::cout << f.string() << ": ok (" << trace.terminal_event << ", turns " << audit.turns
                  << ", reliable " << audit.reliable << ", relevant " << audit.relevant << ")\n";
      }
      continue;
    }
    ++bad;
    for (const auto& p : audit.problems) std::cout << f.string() << ": " << p << "\n";
  }
  std::cout << files.size() << " traces, " << bad << " with problems\n";
  return bad ? kAuditFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recoverr: selective prediction with evidence-based recovery"};
  app.require_subcommand(1);

  ConfigFlags cal_flags;
  auto* calibrate = app.add_subcommand("calibrate", "fit Platt scaling and choose gamma for r");
  cal_flags.attach(calibrate);

  std::string st_artifacts, st_scores;
  double st_r = 0.2;
  auto* select = app.add_subcommand("select-threshold", "choose gamma for a target risk");
  select->add_option("--artifacts", st_artifacts, "calibration artifacts directory");
  select->add_option("--scores", st_scores, "threshold_scores.jsonl to use instead");
  select->add_option("--r", st_r, "target risk")->required();

  ConfigFlags run_flags;
  auto* run = app.add_subcommand("run", "evaluate a method on a dataset (resumable)");
  run_flags.attach(run);

  auto* simulate = app.add_subcommand("simulate", "synthetic worlds");
  simulate->require_subcommand(1);
  std::string gen_out, gen_spec;
  std::uint64_t gen_seed = 0;
  std::size_t gen_n = 0, gen_cal = 0;
  double gen_rho = -1.0;
  auto* gen = simulate->add_subcommand("gen", "generate worlds and question splits");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--spec", gen_spec, "dataset spec JSON");
  gen->add_option("--n", gen_n, "number of instances");
  gen->add_option("--calibration-size", gen_cal, "instances in the calibration split");
  gen->add_option("--distractor-ratio", gen_rho, "fraction of distractor sub-questions");

  std::vector<std::string> rep_runs;
  std::string rep_out, rep_cal;
  auto* report = app.add_subcommand("report", "tables and curves from finished runs");
  report->add_option("runs", rep_runs, "run output directories")->required();
  report->add_option("--out", rep_out, "report directory")->required();
  report->add_option("--calibration", rep_cal, "calibration artifacts directory");

  std::vector<std::string> replay_paths;
  auto* replay = app.add_subcommand("replay-trace", "audit recorded traces offline");
  replay->add_option("traces", replay_paths, "trace files or directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) return cmd_calibrate(cal_flags);
    if (select->parsed()) {
      if (st_artifacts.empty() && st_scores.empty()) {
        std::cerr << "error: select-threshold needs --artifacts or --scores\n";
        return kConfig;
      }
      return cmd_select_threshold(st_artifacts, st_scores, st_r);
    }
    if (run->parsed()) return cmd_run(run_flags);
    if (gen->parsed()) return cmd_simulate_gen(gen_out, gen_seed, gen_spec, gen_n, gen_cal, gen_rho);
    if (report->parsed()) return cmd_report(rep_runs, rep_out, rep_cal);
    if (replay->parsed()) return cmd_replay(replay_paths);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kConfig;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
