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

#ifndef PATLEX_RELABEL_HPP_
#define PATLEX_RELABEL_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "patlex/grid.hpp"

namespace patlex {

/// Context value marking a sequence edge or grid edge; every factor whose
/// context is the boundary contributes probability exactly 1.
inline constexpr int kBoundaryContext = -1;

enum class BigramTable {
  kTimeForward = 0,   // P(w | previous pattern)
  kTimeBackward,      // P(w | next pattern)
  kPhoneticLower,     // P(w | aligned pattern, smaller n)
  kPhoneticUpper,     // P(w | aligned pattern, larger n)
  kTemporalLower,     // P(w | aligned pattern, smaller m)
  kTemporalUpper,     // P(w | aligned pattern, larger m)
};
inline constexpr int kNumBigramTables = 6;

/// Katz-smoothed conditional table P(w | context). Seen bigrams keep a
/// Good-Turing discounted ML estimate (counts above the cutoff are not
/// discounted); the freed mass backs off to the unigram, renormalized over
/// the unseen words, so every row sums to one. Degenerate count-of-counts
/// fall back to absolute discounting with D = 0.5.
struct KatzTable {
  int context_size = 0;  // number of conditioning values
  int vocab = 0;
  Matrix<double> prob;   // context_size x vocab

  double operator()(int w, int context) const {
    return context == kBoundaryContext ? 1.0 : prob(context, w);
  }
};

KatzTable build_katz_table(const Matrix<std::uint32_t>& counts,
                           const std::vector<double>& unigram, int cutoff = 5,
                           double absolute_discount = 0.5);

/// The six conditional tables for one grid point. Cross-granularity tables
/// are absent at grid edges; lookups on absent tables return 1.
struct BigramModel {
  GridPoint point;
  int vocab = 0;
  std::vector<double> unigram;  // add-one smoothed, backoff target
  std::array<std::optional<KatzTable>, kNumBigramTables> tables;
};

// BOUNDARY context or absent table -> exactly 1.0.
double katz_prob(const BigramModel& model, BigramTable table, int w, int context);

/// The six context values for one sequence position, before smoothing.
struct ContextTriple {
  int time_prev = kBoundaryContext;
  int time_next = kBoundaryContext;
  int phon_lower = kBoundaryContext;
  int phon_upper = kBoundaryContext;
  int temp_lower = kBoundaryContext;
  int temp_upper = kBoundaryContext;
};

// Pattern index of the neighbor-set segment containing the central frame
// floor((begin+end)/2) of segment `position` in labeling_self. Both
// labelings must tile the same utterance.
int align_context(const Labeling& labeling_self, const Labeling& labeling_neighbor,
                  int position);

// Context of position l at one grid point, read from the frozen labels.
ContextTriple gather_context(const GridLabeling& grid_labels,
                             const GranularityGrid& grid, const GridPoint& point,
                             std::size_t utt_index, int position);

// Builds all per-point bigram models from the decoded sequences: forward
// and backward time bigrams within each sequence, plus central-frame
// aligned conditionals against each existing grid neighbor.
std::map<GridPoint, BigramModel> estimate_bigrams(const GridLabeling& grid_labels,
                                                  const GranularityGrid& grid);

// argmax over w of the product of the six context factors (log domain);
// ties resolve to the lowest index.
int relabel_position(const GridLabeling& grid_labels,
                     const std::map<GridPoint, BigramModel>& bigrams,
                     const GranularityGrid& grid, const GridPoint& point,
                     std::size_t utt_index, int position);

struct RelabelResult {
  GridLabeling labels;                   // flagged relabeled, boundaries untouched
  std::map<GridPoint, long> changes;     // positions whose index flipped
  long total_changes() const;
};

// One simultaneous relabeling sweep over every position of every sequence
// of every grid point. All decisions are computed against the frozen input
// labels. Input must be flagged raw.
RelabelResult relabel_pass(const GridLabeling& grid_labels,
                           const GranularityGrid& grid);

// Debug dump: one JSON record {table, context, w, prob} per line.
void dump_bigrams(const std::string& path, const BigramModel& model);

}  // namespace patlex

#endif  // PATLEX_RELABEL_HPP_
