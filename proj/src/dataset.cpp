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

#include "idexpo/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "idexpo/rng.hpp"
#include "json.hpp"

namespace idexpo {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_cell(const std::string& cell, int row, int col) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
  if (b == e) {
    throw IngestError("missing value at row " + std::to_string(row) + ", column " +
                      std::to_string(col));
  }
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw IngestError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                      ", column " + std::to_string(col));
  }
  return v;
}

std::string stem_of(const std::string& path) {
  size_t slash = path.find_last_of("/\\");
  std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
  size_t dot = base.find_last_of('.');
  return (dot == std::string::npos) ? base : base.substr(0, dot);
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string bytes_hash(const std::string& bytes) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return bytes_hash(ss.str());
}

Dataset dataset_from_csv_text(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IngestError("empty file");
  std::vector<std::string> header = split_line(line);
  if (header.size() < 2) {
    throw IngestError("need at least one feature column and a label column");
  }
  int q = int(header.size()) - 1;

  Dataset ds;
  ds.name = name;
  ds.feature_names.assign(header.begin(), header.end() - 1);
  ds.hash = bytes_hash(text);

  std::vector<double> values;
  std::vector<double> labels;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() && in.eof()) break;
    std::vector<std::string> cells = split_line(line);
    if (int(cells.size()) != q + 1) {
      throw IngestError("row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(q + 1));
    }
    for (int c = 0; c < q; ++c) values.push_back(parse_cell(cells[c], row, c + 1));
    double lab = parse_cell(cells[q], row, q + 1);
    if (!(std::isfinite(lab) && lab == std::floor(lab))) {
      throw IngestError("label '" + cells[q] + "' is not an integer at row " +
                        std::to_string(row) + ", column " + std::to_string(q + 1));
    }
    labels.push_back(lab);
  }
  int n = int(labels.size());
  if (n == 0) throw IngestError("no data rows");

  ds.x = Tensor(n, q);
  ds.x.raw().assign(values.begin(), values.end());

  std::vector<double> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  ds.original_labels = distinct;
  ds.num_classes = int(distinct.size());
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    auto it = std::lower_bound(distinct.begin(), distinct.end(), labels[i]);
    ds.y[i] = int(it - distinct.begin());
  }
  return ds;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return dataset_from_csv_text(ss.str(), stem_of(path));
}

std::string dataset_to_csv_text(const Dataset& ds) {
  std::ostringstream out;
  for (int c = 0; c < ds.num_features(); ++c) {
    out << (c < int(ds.feature_names.size()) ? ds.feature_names[c] : "f" + std::to_string(c))
        << ",";
  }
  out << "label\n";
  for (int r = 0; r < ds.num_samples(); ++r) {
    for (int c = 0; c < ds.num_features(); ++c) out << format_g17(ds.x.at(r, c)) << ",";
    double lab = size_t(ds.y[r]) < ds.original_labels.size()
                     ? ds.original_labels[size_t(ds.y[r])]
                     : double(ds.y[r]);
    out << format_g17(lab) << "\n";
  }
  return out.str();
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot open " + path + " for writing");
  out << dataset_to_csv_text(ds);
}

std::vector<SplitSpec> make_splits(int num_samples, uint64_t master_seed) {
  if (num_samples < 3) throw IngestError("make_splits: need at least 3 samples");
  std::vector<SplitSpec> out;
  int n_train = int(std::floor(0.7 * num_samples));
  int n_val = int(std::floor(0.1 * num_samples + 0.5));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= num_samples) {
    throw IngestError("make_splits: degenerate split sizes for N=" +
                      std::to_string(num_samples));
  }
  for (int k = 0; k < 5; ++k) {
    SeedStream rng(master_seed, streams::kSplit, {uint64_t(k)});
    std::vector<int> idx(static_cast<size_t>(num_samples));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    SplitSpec s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    s.test.assign(idx.begin() + n_train + n_val, idx.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SplitSpec> make_splits(const Dataset& ds, uint64_t master_seed) {
  return make_splits(ds.num_samples(), master_seed);
}

Tensor Standardizer::transform(const Tensor& x) const {
  if (x.cols() != int(mean.size())) {
    throw ShapeError("Standardizer::transform: width " + x.shape_str() + " vs fitted " +
                     std::to_string(mean.size()));
  }
  Tensor out(x.rows(), int(kept.size()));
  for (int r = 0; r < x.rows(); ++r) {
    for (size_t j = 0; j < kept.size(); ++j) {
      int c = kept[j];
      out.at(r, int(j)) = (x.at(r, c) - mean[c]) / stdev[c];
    }
  }
  return out;
}

Tensor Standardizer::inverse(const Tensor& x) const {
  if (x.cols() != int(kept.size())) {
    throw ShapeError("Standardizer::inverse: width " + x.shape_str() + " vs kept " +
                     std::to_string(kept.size()));
  }
  Tensor out(x.rows(), int(mean.size()));
  for (int r = 0; r < x.rows(); ++r) {
    for (size_t c = 0; c < mean.size(); ++c) out.at(r, int(c)) = mean[c];
    for (size_t j = 0; j < kept.size(); ++j) {
      int c = kept[j];
      out.at(r, c) = x.at(r, int(j)) * stdev[c] + mean[c];
    }
  }
  return out;
}

std::pair<Dataset, Standardizer> standardize(const Dataset& ds, const SplitSpec& split) {
  if (split.train.empty()) throw IngestError("standardize: empty train split");
  int q = ds.num_features();
  double n = double(split.train.size());
  Standardizer st;
  st.mean.assign(size_t(q), 0.0);
  st.stdev.assign(size_t(q), 0.0);
  for (int i : split.train) {
    for (int c = 0; c < q; ++c) st.mean[c] += ds.x.at(i, c);
  }
  for (int c = 0; c < q; ++c) st.mean[c] /= n;
  std::vector<double> var(size_t(q), 0.0);
  for (int i : split.train) {
    for (int c = 0; c < q; ++c) {
      double d = ds.x.at(i, c) - st.mean[c];
      var[c] += d * d;
    }
  }
  for (int c = 0; c < q; ++c) {
    var[c] /= n;
    if (var[c] == 0.0) {
      st.dropped.push_back(c);
      st.stdev[c] = 1.0;
      std::string fname =
          c < int(ds.feature_names.size()) ? ds.feature_names[c] : std::to_string(c);
      std::fprintf(stderr,
                   "warning: feature '%s' is constant on the train split and was dropped\n",
                   fname.c_str());
    } else {
      st.kept.push_back(c);
      st.stdev[c] = std::sqrt(var[c]);
    }
  }
  if (st.kept.empty()) throw IngestError("standardize: every feature is constant");

  Dataset out = ds;
  out.x = st.transform(ds.x);
  out.feature_names.clear();
  for (int c : st.kept) {
    out.feature_names.push_back(c < int(ds.feature_names.size()) ? ds.feature_names[c]
                                                                 : "f" + std::to_string(c));
  }
  out.dropped_features = st.dropped;
  return {std::move(out), std::move(st)};
}

std::vector<double> background(const Dataset& ds, const SplitSpec& split) {
  if (split.train.empty()) throw IngestError("background: empty train split");
  std::vector<double> b(size_t(ds.num_features()), 0.0);
  for (int i : split.train) {
    for (int c = 0; c < ds.num_features(); ++c) b[size_t(c)] += ds.x.at(i, c);
  }
  for (double& v : b) v /= double(split.train.size());
  return b;
}

std::string dataset_metadata_json(const Dataset& ds) {
  nlohmann::json j;
  j["name"] = ds.name;
  j["num_samples"] = ds.num_samples();
  j["num_features"] = ds.num_features();
  j["num_classes"] = ds.num_classes;
  j["hash"] = ds.hash;
  j["original_labels"] = ds.original_labels;
  j["dropped_features"] = ds.dropped_features;
  return j.dump();
}

Dataset make_synthetic_classification(const std::string& name, int n, int q, int l,
                                      uint64_t seed) {
  if (n < 10 || q < 1 || l < 2) {
    throw IngestError("make_synthetic_classification: need n >= 10, q >= 1, l >= 2");
  }
  SeedStream rng(seed, streams::kSynthetic, {});

  // Correlated features: latent uniforms mixed linearly, then scaled and
  // shifted per feature so standardization has real work to do.
  Tensor mix(q, q);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = rng.uniform(-1.0, 1.0);
  for (int c = 0; c < q; ++c) mix.at(c, c) += 1.5;
  std::vector<double> scale(static_cast<size_t>(q)), shift(static_cast<size_t>(q));
  for (int c = 0; c < q; ++c) {
    scale[size_t(c)] = std::exp(rng.uniform(-0.7, 1.2));
    shift[size_t(c)] = rng.uniform(-3.0, 3.0);
  }
  Tensor latent(n, q);
  for (size_t i = 0; i < latent.size(); ++i) latent[i] = rng.uniform(-1.0, 1.0);
  Tensor x = matmul(latent, mix);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < q; ++c) x.at(r, c) = x.at(r, c) * scale[size_t(c)] + shift[size_t(c)];
  }

  // Random teacher network on standardized coordinates.
  int hidden = 16;
  Tensor tw1(q, hidden), tb1(1, hidden), tw2(hidden, l);
  double b1 = 1.6 / std::sqrt(double(q));
  for (size_t i = 0; i < tw1.size(); ++i) tw1[i] = rng.uniform(-b1, b1);
  for (size_t i = 0; i < tb1.size(); ++i) tb1[i] = rng.uniform(-0.3, 0.3);
  double b2 = 2.2 / std::sqrt(double(hidden));
  for (size_t i = 0; i < tw2.size(); ++i) tw2[i] = rng.uniform(-b2, b2);

  Tensor xn(n, q);
  for (int c = 0; c < q; ++c) {
    double m = 0.0;
    for (int r = 0; r < n; ++r) m += x.at(r, c);
    m /= n;
    double v = 0.0;
    for (int r = 0; r < n; ++r) {
      double d = x.at(r, c) - m;
      v += d * d;
    }
    double sd = std::sqrt(v / n);
    if (sd == 0.0) sd = 1.0;
    for (int r = 0; r < n; ++r) xn.at(r, c) = (x.at(r, c) - m) / sd;
  }
  Tensor logits = matmul(relu(add_rowvec(matmul(xn, tw1), tb1)), tw2);

  // Balance class priors toward a bell-shaped profile by adjusting per-class
  // offsets, then apply 5% label noise.
  std::vector<double> target(static_cast<size_t>(l));
  double tsum = 0.0;
  for (int c = 0; c < l; ++c) {
    double z = (c - 0.5 * (l - 1)) / (0.35 * l);
    target[size_t(c)] = std::exp(-z * z);
    tsum += target[size_t(c)];
  }
  for (double& t : target) t /= tsum;
  std::vector<double> offset(size_t(l), 0.0);
  std::vector<int> labels(static_cast<size_t>(n));
  for (int iter = 0; iter < 120; ++iter) {
    std::vector<double> count(size_t(l), 0.0);
    for (int r = 0; r < n; ++r) {
      int best = 0;
      double bv = logits.at(r, 0) + offset[0];
      for (int c = 1; c < l; ++c) {
        double v = logits.at(r, c) + offset[size_t(c)];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      labels[size_t(r)] = best;
      count[size_t(best)] += 1.0;
    }
    bool done = true;
    for (int c = 0; c < l; ++c) {
      double frac = count[size_t(c)] / n;
      if (std::abs(frac - target[size_t(c)]) > 0.01) done = false;
      offset[size_t(c)] += 0.4 * std::log(std::max(target[size_t(c)], 1e-6) /
                                          std::max(frac, 1e-6));
    }
    if (done) break;
  }
  for (int r = 0; r < n; ++r) {
    if (rng.uniform01() < 0.05) labels[size_t(r)] = int(rng.bounded(uint64_t(l)));
  }

  Dataset ds;
  ds.name = name;
  for (int c = 0; c < q; ++c) ds.feature_names.push_back("f" + std::to_string(c));
  ds.x = std::move(x);
  ds.y = std::move(labels);
  ds.num_classes = l;
  for (int c = 0; c < l; ++c) ds.original_labels.push_back(double(c));
  for (int c = 0; c < l; ++c) {
    if (std::count(ds.y.begin(), ds.y.end(), c) == 0) {
      throw NumericalError("make_synthetic_classification: class " + std::to_string(c) +
                           " is empty; choose another seed");
    }
  }
  ds.hash = bytes_hash(dataset_to_csv_text(ds));
  return ds;
}

}  // namespace idexpo
