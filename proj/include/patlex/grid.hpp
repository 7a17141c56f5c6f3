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

#ifndef PATLEX_GRID_HPP_
#define PATLEX_GRID_HPP_

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "patlex/hmm.hpp"

namespace patlex {

/// One (m, n) point of the granularity grid.
struct GridPoint {
  int states_per_pattern = 0;  // m
  int num_patterns = 0;        // n

  auto operator<=>(const GridPoint&) const = default;
};

inline std::string point_name(const GridPoint& p) {
  return std::to_string(p.states_per_pattern) + "x" + std::to_string(p.num_patterns);
}

/// The M x N array of model configurations trained jointly.
struct GranularityGrid {
  std::vector<int> temporal_values;  // sorted values of m
  std::vector<int> phonetic_values;  // sorted values of n
  int gaussians_per_state = 4;

  void validate() const;
  std::vector<GridPoint> points() const;  // temporal-major order
  Granularity granularity_at(const GridPoint& p) const {
    return Granularity{p.states_per_pattern, p.num_patterns, gaussians_per_state};
  }

  // Adjacent value on an axis, or nullopt at a grid edge.
  std::optional<GridPoint> phonetic_neighbor(const GridPoint& p, int direction) const;
  std::optional<GridPoint> temporal_neighbor(const GridPoint& p, int direction) const;
};

/// Decoded (or relabeled) pattern sequences for every grid point. Each
/// point holds one Labeling per surviving utterance, in corpus order.
struct GridLabeling {
  std::map<GridPoint, std::vector<Labeling>> labels;
  bool relabeled = false;

  const std::vector<Labeling>* find(const GridPoint& p) const {
    auto it = labels.find(p);
    return it == labels.end() ? nullptr : &it->second;
  }
  // Segment covering position l of an utterance's pattern sequence.
  const Segment& segment(const GridPoint& p, std::size_t utt_index, int position) const;

  void validate_complete(const GranularityGrid& grid) const;
};

}  // namespace patlex

#endif  // PATLEX_GRID_HPP_
