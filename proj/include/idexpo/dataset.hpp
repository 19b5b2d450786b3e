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

#ifndef IDEXPO_DATASET_HPP_
#define IDEXPO_DATASET_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "idexpo/tensor.hpp"

namespace idexpo {

// Malformed input data: the message carries the 1-based row/column location
// (the header is row 1).
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric tabular classification data. Labels are dense 0..L-1; the sorted
// original label values are kept so outputs can refer back to them.
struct Dataset {
  std::string name;
  std::vector<std::string> feature_names;
  Tensor x;                             // N x Q
  std::vector<int> y;                   // size N, values 0..num_classes-1
  int num_classes = 0;
  std::vector<double> original_labels;  // sorted distinct values before remap
  std::string hash;                     // content hash of the source bytes
  std::vector<int> dropped_features;    // original indices removed by standardize

  int num_samples() const { return x.rows(); }
  int num_features() const { return x.cols(); }
};

struct SplitSpec {
  std::vector<int> train, val, test;
};

// CSV with a header row; every cell numeric, last column an integer class
// label. Labels are remapped to 0..L-1 by sorted original value.
Dataset load_csv(const std::string& path);
Dataset dataset_from_csv_text(const std::string& text, const std::string& name);
std::string dataset_to_csv_text(const Dataset& ds);
void save_csv(const Dataset& ds, const std::string& path);

// Five random splits of sizes floor(0.7N) / round(0.1N) / remainder, shuffled
// by child seeds derived from the master seed.
std::vector<SplitSpec> make_splits(int num_samples, uint64_t master_seed);
std::vector<SplitSpec> make_splits(const Dataset& ds, uint64_t master_seed);

// Per-feature affine transform fitted on the train split only.
struct Standardizer {
  std::vector<double> mean, stdev;      // per original feature
  std::vector<int> kept;                // original indices that survived
  std::vector<int> dropped;             // constant on the train split

  Tensor transform(const Tensor& x) const;
  // Reconstructs original-width rows; dropped columns are filled with their
  // train-split constant.
  Tensor inverse(const Tensor& x) const;
};

// Returns the dataset with all rows transformed (constant features dropped)
// plus the fitted transform. Statistics use only split.train rows.
std::pair<Dataset, Standardizer> standardize(const Dataset& ds, const SplitSpec& split);

// Per-feature mean over the train split: the masking background b.
std::vector<double> background(const Dataset& ds, const SplitSpec& split);

// FNV-1a 64-bit content hashes, hex encoded.
std::string bytes_hash(const std::string& bytes);
std::string file_hash(const std::string& path);

std::string dataset_metadata_json(const Dataset& ds);

// Deterministic stand-in generator: correlated uniform features pushed
// through a random teacher network, class priors balanced to a bell profile,
// 5% label noise. Used for tests and offline experiment fixtures.
Dataset make_synthetic_classification(const std::string& name, int n, int q, int l,
                                      uint64_t seed);

}  // namespace idexpo

#endif  // IDEXPO_DATASET_HPP_
