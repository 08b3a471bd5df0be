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

#ifndef RECOVERR_HARNESS_REPORT_HPP_
#define RECOVERR_HARNESS_REPORT_HPP_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/harness/calibration.hpp"
#include "recoverr/harness/eval.hpp"
#include "recoverr/harness/io.hpp"
#include "recoverr/selective.hpp"

namespace recoverr::harness {

struct LoadedRun {
  std::string label;
  RunMeta meta;
  std::vector<RunRecord> records;
  selective::MetricsReport metrics;  // recomputed from records
};

inline LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  run.label = dir.filename().string();
  if (run.label.empty()) run.label = dir.parent_path().filename().string();
  run.meta = meta_from_json(read_json(dir / "run_meta.json"));
  run.records = read_records(dir / "records.jsonl");
  if (run.records.size() != run.meta.n) {
    throw InvalidInput(dir.string() + ": run is incomplete (" + std::to_string(run.records.size()) +
                       " of " + std::to_string(run.meta.n) + " records)");
  }
  run.metrics = metrics_of(run.records);
  return run;
}

inline std::vector<selective::ScoredPrediction> scored_of(const std::vector<RunRecord>& records) {
  std::vector<selective::ScoredPrediction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.confidence, r.accuracy});
  return out;
}

/// Vanilla coverage at the risk another method reached, on the same data.
struct Comparison {
  std::string method_label;
  std::string vanilla_label;
  double r = 0.0;
  std::optional<double> method_risk;
  double method_coverage = 0.0;
  double vanilla_coverage_at_risk = 0.0;
};

struct ReportTables {
  std::vector<LoadedRun> runs;
  std::vector<Comparison> comparisons;
};

inline std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

inline ReportTables build_report(const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty()) throw InvalidInput("report: no runs given");
  ReportTables t;
  for (const auto& d : run_dirs) t.runs.push_back(load_run(d));
  for (const auto& run : t.runs) {
    if (run.meta.dataset_sha256 != t.runs.front().meta.dataset_sha256) {
      throw ComparisonError("runs '" + t.runs.front().label + "' and '" + run.label +
                            "' were made on different datasets");
    }
  }
  for (const auto& van : t.runs) {
    if (van.meta.method != Method::kVanilla) continue;
    const auto curve_input = scored_of(van.records);
    for (const auto& other : t.runs) {
      if (other.meta.method == Method::kVanilla || other.meta.r != van.meta.r ||
          other.meta.model != van.meta.model) {
        continue;
      }
      Comparison c;
      c.method_label = other.label;
      c.vanilla_label = van.label;
      c.r = other.meta.r;
      c.method_risk = other.metrics.risk;
      c.method_coverage = other.metrics.coverage;
      c.vanilla_coverage_at_risk =
          c.method_risk ? selective::coverage_at_risk(curve_input, *c.method_risk) : 0.0;
      t.comparisons.push_back(c);
    }
  }
  return t;
}

inline std::string percent_table(const ReportTables& t) {
  std::string out = "| run | method | model | r | C | R | Phi_1 | R_SP |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& run : t.runs) {
    const auto& m = run.metrics;
    out += "| " + run.label + " | " + to_string(run.meta.method) + " | " + run.meta.model + " | " +
           percent(run.meta.r) + " | " + percent(m.coverage) + " | " + percent(m.risk) + " | " +
           percent(m.effective_reliability) + " | " + percent(m.selective_recall) + " |\n";
  }
  if (!t.comparisons.empty()) {
    out += "\n| run | r | R | C | vanilla C at R |\n|---|---|---|---|---|\n";
    for (const auto& c : t.comparisons) {
      out += "| " + c.method_label + " | " + percent(c.r) + " | " + percent(c.method_risk) + " | " +
             percent(c.method_coverage) + " | " + percent(c.vanilla_coverage_at_risk) + " |\n";
    }
  }
  return out;
}

/// Writes table.csv (full precision), table.md (percentages, one decimal),
/// comparison.csv, and curves/<run>.csv; with a calibration directory also
/// reliability-curve CSVs.
inline ReportTables report_tables(const std::vector<std::filesystem::path>& run_dirs,
                                  const std::filesystem::path& out_dir,
                                  const std::optional<std::filesystem::path>& calibration_dir = {}) {
  auto t = build_report(run_dirs);
  std::filesystem::create_directories(out_dir / "curves");
  std::string csv = "run," + metrics_csv_header() + "\n";
  for (const auto& run : t.runs) csv += run.label + "," + metrics_csv_row(run.meta, run.metrics) + "\n";
  write_text_atomic(out_dir / "table.csv", csv);
  write_text_atomic(out_dir / "table.md", percent_table(t));

  std::string cmp = "run,vanilla_run,r,risk,coverage,vanilla_coverage_at_risk\n";
  for (const auto& c : t.comparisons) {
    cmp += c.method_label + "," + c.vanilla_label + "," + nlohmann::json(c.r).dump() + "," +
           csv_number(c.method_risk) + "," + nlohmann::json(c.method_coverage).dump() + "," +
           nlohmann::json(c.vanilla_coverage_at_risk).dump() + "\n";
  }
  if (!t.comparisons.empty()) write_text_atomic(out_dir / "comparison.csv", cmp);

  for (const auto& run : t.runs) {
    std::string curve = "gamma,coverage,risk\n";
    for (const auto& p : selective::risk_coverage_curve(scored_of(run.records))) {
      curve += nlohmann::json(p.gamma).dump() + "," + nlohmann::json(p.coverage).dump() + "," +
               nlohmann::json(p.risk).dump() + "\n";
    }
    write_text_atomic(out_dir / "curves" / (run.label + ".csv"), curve);
  }

  if (calibration_dir) {
    const auto a = load_artifacts(*calibration_dir);
    write_bins_csv(out_dir / "calibration_before.csv", a.before);
    write_bins_csv(out_dir / "calibration_after.csv", a.after);
  }
  return t;
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_REPORT_HPP_
