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

#include "idexpo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <tuple>
#include <utility>

namespace idexpo {

namespace {

// Baseline first, then the ranked method, then the surrogate-fit methods;
// anything unknown sorts last by name.
int method_rank(const std::string& m) {
  if (m == "ce") return 0;
  if (m == "idexpo") return 1;
  if (m == "expo-f") return 2;
  if (m == "expo-s") return 3;
  return 4;
}

bool cell_before(const GridCell& a, const GridCell& b) {
  if (a.lr != b.lr) return a.lr > b.lr;
  if (a.lambda12 != b.lambda12) return a.lambda12 > b.lambda12;
  if (a.lambda3 != b.lambda3) return a.lambda3 > b.lambda3;
  return a.expo_weight > b.expo_weight;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double sd_or_zero(const std::vector<double>& v) {
  return v.size() >= 2 ? sample_sd(v) : 0.0;
}

}  // namespace

std::vector<SelectedRun> select_runs(const std::vector<RunRecord>& records,
                                     double eta) {
  using GroupKey = std::tuple<int, std::string, std::string, int>;
  std::map<GroupKey, std::vector<const RunRecord*>> groups;
  for (const RunRecord& r : records) {
    GroupKey key{method_rank(r.method), r.method, r.explainer, r.split_index};
    groups[key].push_back(&r);
  }

  std::vector<SelectedRun> out;
  for (auto& entry : groups) {
    std::vector<const RunRecord*>& cand = entry.second;
    std::stable_sort(cand.begin(), cand.end(),
                     [](const RunRecord* a, const RunRecord* b) {
                       return cell_before(a->cell, b->cell);
                     });
    std::vector<GridRun> runs(cand.size());
    for (size_t i = 0; i < cand.size(); ++i) {
      runs[i].cell = cand[i]->cell;
      runs[i].failed = cand[i]->failed || cand[i]->best_epoch < 0;
      runs[i].val_accuracy = cand[i]->val_at_best.accuracy;
      runs[i].val_insertion = cand[i]->val_at_best.insertion;
      runs[i].val_deletion = cand[i]->val_at_best.deletion;
    }
    int pick = grid_select(runs, eta);
    if (pick < 0) continue;
    const RunRecord& r = *cand[size_t(pick)];
    SelectedRun s;
    s.method = r.method;
    s.explainer = r.explainer;
    s.split_index = r.split_index;
    s.cell = r.cell;
    s.val = r.val_at_best;
    s.test = r.test;
    out.push_back(std::move(s));
  }
  return out;
}

ReportTable build_report(const std::vector<RunRecord>& records, double eta,
                         double alpha) {
  ReportTable table;
  table.eta = eta;
  table.alpha = alpha;
  table.selected = select_runs(records, eta);

  using GroupKey = std::tuple<int, std::string, std::string>;
  std::map<GroupKey, std::vector<const SelectedRun*>> groups;
  for (const SelectedRun& s : table.selected) {
    groups[{method_rank(s.method), s.method, s.explainer}].push_back(&s);
  }
  // select_runs emits split groups in ascending split order already, but the
  // pairing below depends on it, so sort defensively.
  for (auto& entry : groups) {
    std::sort(entry.second.begin(), entry.second.end(),
              [](const SelectedRun* a, const SelectedRun* b) {
                return a->split_index < b->split_index;
              });
  }

  for (auto& entry : groups) {
    const std::vector<const SelectedRun*>& runs = entry.second;
    MethodSummary row;
    row.method = std::get<1>(entry.first);
    row.explainer = std::get<2>(entry.first);
    row.num_splits = int(runs.size());

    std::vector<double> acc, ins, del, score, sens;
    bool all_sens = true;
    for (const SelectedRun* s : runs) {
      acc.push_back(s->test.accuracy);
      ins.push_back(s->test.insertion);
      del.push_back(s->test.deletion);
      score.push_back(s->test.score);
      if (s->test.has_sensitivity) {
        sens.push_back(s->test.sensitivity);
      } else {
        all_sens = false;
      }
    }
    row.mean_accuracy = mean(acc);
    row.sd_accuracy = sd_or_zero(acc);
    row.mean_insertion = mean(ins);
    row.sd_insertion = sd_or_zero(ins);
    row.mean_deletion = mean(del);
    row.sd_deletion = sd_or_zero(del);
    row.mean_score = mean(score);
    row.sd_score = sd_or_zero(score);
    row.has_sensitivity = all_sens && !sens.empty();
    if (row.has_sensitivity) {
      row.mean_sensitivity = mean(sens);
      row.sd_sensitivity = sd_or_zero(sens);
    }

    if (row.method != "ce") {
      auto base_it = groups.find({method_rank("ce"), "ce", row.explainer});
      if (base_it != groups.end()) {
        // Pair by split index; only splits present on both sides count.
        std::map<int, const SelectedRun*> base_by_split;
        for (const SelectedRun* b : base_it->second) {
          base_by_split[b->split_index] = b;
        }
        std::vector<double> ma, mi, md, ms, ba, bi, bd, bs;
        bool sens_both = row.has_sensitivity;
        for (const SelectedRun* s : runs) {
          auto hit = base_by_split.find(s->split_index);
          if (hit == base_by_split.end()) continue;
          ma.push_back(s->test.accuracy);
          ba.push_back(hit->second->test.accuracy);
          mi.push_back(s->test.insertion);
          bi.push_back(hit->second->test.insertion);
          md.push_back(s->test.deletion);
          bd.push_back(hit->second->test.deletion);
          if (s->test.has_sensitivity && hit->second->test.has_sensitivity) {
            ms.push_back(s->test.sensitivity);
            bs.push_back(hit->second->test.sensitivity);
          } else {
            sens_both = false;
          }
        }
        if (ma.size() >= 2) {
          row.has_baseline = true;
          row.t_accuracy = paired_t_test(ma, ba, alpha);
          row.t_insertion = paired_t_test(mi, bi, alpha);
          row.t_deletion = paired_t_test(md, bd, alpha);
          if (sens_both && ms.size() >= 2) {
            row.t_sensitivity = paired_t_test(ms, bs, alpha);
          }
        }
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string summary_csv(const ReportTable& table) {
  std::ostringstream out;
  out << "method,explainer,splits,accuracy_mean,accuracy_sd,insertion_mean,"
         "insertion_sd,deletion_mean,deletion_sd,score_mean,score_sd,"
         "sensitivity_mean,sensitivity_sd,t_accuracy,p_accuracy,t_insertion,"
         "p_insertion,t_deletion,p_deletion,t_sensitivity,p_sensitivity\n";
  for (const MethodSummary& r : table.rows) {
    out << r.method << ',' << r.explainer << ',' << r.num_splits << ','
        << fmt17(r.mean_accuracy) << ',' << fmt17(r.sd_accuracy) << ','
        << fmt17(r.mean_insertion) << ',' << fmt17(r.sd_insertion) << ','
        << fmt17(r.mean_deletion) << ',' << fmt17(r.sd_deletion) << ','
        << fmt17(r.mean_score) << ',' << fmt17(r.sd_score) << ',';
    if (r.has_sensitivity) {
      out << fmt17(r.mean_sensitivity) << ',' << fmt17(r.sd_sensitivity);
    } else {
      out << ',';
    }
    auto put_test = [&out](const PairedTTest& t, bool present) {
      if (present) {
        out << ',' << fmt17(t.t) << ',' << fmt17(t.p);
      } else {
        out << ",,";
      }
    };
    put_test(r.t_accuracy, r.has_baseline);
    put_test(r.t_insertion, r.has_baseline);
    put_test(r.t_deletion, r.has_baseline);
    put_test(r.t_sensitivity, r.has_baseline && r.has_sensitivity &&
                                  r.t_sensitivity.dof > 0);
    out << '\n';
  }
  return out.str();
}

std::string scatter_csv(const ReportTable& table) {
  std::ostringstream out;
  out << "method,explainer,split,lr,lambda12,lambda3,expo_weight,val_score,"
         "test_accuracy,test_insertion,test_deletion,test_score,"
         "test_sensitivity\n";
  for (const SelectedRun& s : table.selected) {
    out << s.method << ',' << s.explainer << ',' << s.split_index << ','
        << fmt17(s.cell.lr) << ',' << fmt17(s.cell.lambda12) << ','
        << fmt17(s.cell.lambda3) << ',' << fmt17(s.cell.expo_weight) << ','
        << fmt17(s.val.score) << ',' << fmt17(s.test.accuracy) << ','
        << fmt17(s.test.insertion) << ',' << fmt17(s.test.deletion) << ','
        << fmt17(s.test.score) << ',';
    if (s.test.has_sensitivity) out << fmt17(s.test.sensitivity);
    out << '\n';
  }
  return out.str();
}

std::string summary_text(const ReportTable& table) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %-11s %2s  %-17s %-17s %-17s %-9s %s\n",
                "method", "explainer", "n", "accuracy", "insertion", "deletion",
                "sens", "p(ins) p(del)");
  out << buf;
  for (const MethodSummary& r : table.rows) {
    std::string sens = "-";
    if (r.has_sensitivity) {
      std::snprintf(buf, sizeof buf, "%+.4f", r.mean_sensitivity);
      sens = buf;
    }
    std::string ptxt = "-";
    if (r.has_baseline) {
      std::snprintf(buf, sizeof buf, "%6.4f %6.4f%s", r.t_insertion.p,
                    r.t_deletion.p,
                    r.t_insertion.significant || r.t_deletion.significant ? " *"
                                                                          : "");
      ptxt = buf;
    }
    std::snprintf(buf, sizeof buf,
                  "%-8s %-11s %2d  %6.4f +- %6.4f  %6.4f +- %6.4f  %6.4f +- "
                  "%6.4f  %-9s %s\n",
                  r.method.c_str(), r.explainer.c_str(), r.num_splits,
                  r.mean_accuracy, r.sd_accuracy, r.mean_insertion,
                  r.sd_insertion, r.mean_deletion, r.sd_deletion, sens.c_str(),
                  ptxt.c_str());
    out << buf;
  }
  return out.str();
}

std::vector<RunRecord> load_run_records(const std::vector<std::string>& paths) {
  std::vector<RunRecord> out;
  out.reserve(paths.size());
  for (const std::string& p : paths) out.push_back(load_run_record(p));
  return out;
}

std::vector<RunRecord> load_run_record_dir(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  return load_run_records(paths);
}

}  // namespace idexpo
