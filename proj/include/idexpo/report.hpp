// Copyright 2026 The idexpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IDEXPO_REPORT_HPP_
#define IDEXPO_REPORT_HPP_

#include <string>
#include <vector>

#include "idexpo/stats.hpp"
#include "idexpo/train.hpp"

namespace idexpo {

// One selected run: for a (method, explainer, split) group, the grid cell
// whose validation score at the requested eta won.
struct SelectedRun {
  std::string method;
  std::string explainer;
  int split_index = 0;
  GridCell cell;
  EpochStats val;     // validation metrics of the winning cell
  MetricReport test;  // its test metrics
};

// Picks one record per (method, explainer, split) group. Candidates are
// ordered like the search grid (larger lr first, then larger lambda12, then
// larger lambda3, then larger surrogate weight) so ties resolve exactly as
// they do during the search. Groups where every cell failed produce nothing.
std::vector<SelectedRun> select_runs(const std::vector<RunRecord>& records,
                                     double eta);

// Per-method aggregate over splits, with paired comparisons against the
// cross-entropy baseline evaluated under the same explainer.
struct MethodSummary {
  std::string method;
  std::string explainer;
  int num_splits = 0;
  double mean_accuracy = 0.0, sd_accuracy = 0.0;
  double mean_insertion = 0.0, sd_insertion = 0.0;
  double mean_deletion = 0.0, sd_deletion = 0.0;
  double mean_score = 0.0, sd_score = 0.0;
  double mean_sensitivity = 0.0, sd_sensitivity = 0.0;
  bool has_sensitivity = false;
  // Paired by split index against the baseline; only splits present on both
  // sides contribute. Empty (has_baseline false) for the baseline row itself
  // and when fewer than two common splits exist.
  bool has_baseline = false;
  PairedTTest t_accuracy, t_insertion, t_deletion, t_sensitivity;
};

struct ReportTable {
  double eta = 2.0;
  double alpha = 0.05;
  std::vector<SelectedRun> selected;
  std::vector<MethodSummary> rows;
};

// Full report pass: select winners at eta, aggregate per (method, explainer),
// and test each method against the "ce" rows with the same explainer.
ReportTable build_report(const std::vector<RunRecord>& records, double eta,
                         double alpha = 0.05);

// CSV writers. Doubles are printed with 17 significant digits so the values
// reparse exactly.
std::string summary_csv(const ReportTable& table);
std::string scatter_csv(const ReportTable& table);

// Human-oriented fixed-width rendering of the summary table.
std::string summary_text(const ReportTable& table);

// Reads every *.json run record in a directory (sorted by filename).
std::vector<RunRecord> load_run_records(const std::vector<std::string>& paths);
std::vector<RunRecord> load_run_record_dir(const std::string& dir);

}  // namespace idexpo

#endif  // IDEXPO_REPORT_HPP_
