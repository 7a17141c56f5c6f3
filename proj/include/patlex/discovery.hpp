// Copyright 2026 The patlex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PATLEX_DISCOVERY_HPP_
#define PATLEX_DISCOVERY_HPP_

#include <map>
#include <string>
#include <vector>

#include "patlex/grid.hpp"

namespace patlex {

struct DiscoveryConfig {
  int max_iterations = 10;  // outer train/decode rounds
  int em_iters = 3;         // EM iterations inside each re-estimation
  bool relabel_enabled = false;
  std::uint64_t seed = 0;
  // stop early once fewer than this fraction of segments changes
  double change_threshold = 0.01;

  void validate() const;
};

struct IterationRecord {
  double loglik = 0.0;        // corpus Viterbi log-likelihood after decoding
  double change_ratio = 1.0;  // fraction of segments changed vs previous labels
  long relabel_changes = 0;   // flips in the relabel pass feeding this iteration
};

struct DiscoverResult {
  PatternSet set;
  std::vector<Labeling> labels;
  std::vector<IterationRecord> history;
  std::vector<std::string> skipped;  // utterances too short for initialization
};

/// Everything produced by a grid run: models, labels and per-iteration
/// history for each (m, n) point. Points that failed are reported in
/// `errors` and absent from the other maps.
struct GridModels {
  GranularityGrid grid;
  std::map<GridPoint, PatternSet> sets;
  GridLabeling labels;
  std::map<GridPoint, std::vector<IterationRecord>> history;
  std::map<GridPoint, std::vector<std::string>> skipped;
  std::map<GridPoint, std::string> errors;
};

// Iterative discovery for one configuration: initial chunk clustering,
// then alternating constrained re-estimation and pattern-loop decoding
// until convergence or the iteration cap.
DiscoverResult discover(const Corpus& corpus, const Granularity& psi,
                        const DiscoveryConfig& cfg);

// All grid points. Independent runs (per-point seeds derived from the base
// seed) when relabeling is disabled; the enhanced loop otherwise.
GridModels discover_grid(const Corpus& corpus, const GranularityGrid& grid,
                         const DiscoveryConfig& cfg);

// One enhanced iteration across the grid: relabel every point's current
// sequences against their contexts, re-train every set on the relabeled
// sequences, then re-decode to produce the next iteration's labels.
void enhance_step(GridModels& models, const Corpus& corpus,
                  const DiscoveryConfig& cfg);

// Fraction of `current` segments without an identical (begin, end,
// pattern) twin in `previous`.
double segment_change_ratio(const std::vector<Labeling>& previous,
                            const std::vector<Labeling>& current);

// Run directory: <dir>/<m>x<n>/model.plxm, <dir>/<m>x<n>/labels.jsonl
// (plus labels_relabeled.jsonl after enhanced runs) and <dir>/history.json.
void save_run(const std::string& dir, const GridModels& models);
GridModels load_run(const std::string& dir);

}  // namespace patlex

#endif  // PATLEX_DISCOVERY_HPP_
