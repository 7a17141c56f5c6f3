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

#ifndef PATLEX_RETRIEVAL_HPP_
#define PATLEX_RETRIEVAL_HPP_

#include <map>
#include <string>
#include <vector>

#include "patlex/discovery.hpp"
#include "patlex/similarity.hpp"

namespace patlex {

/// Document-by-query table of pattern similarities W(i,j) = S(d_i, q_j).
struct MatchingMatrix {
  std::string doc_id;
  std::string query_id;
  Matrix<double> entries;  // D x Q
};

struct RankedList {
  std::string query_id;
  struct Entry {
    std::string doc_id;
    double fused_score = 0.0;
    std::map<GridPoint, double> per_set;  // R(d,q) per grid point
  };
  std::vector<Entry> entries;  // non-increasing score, doc_id breaks ties
};

MatchingMatrix matching_matrix(const std::vector<int>& doc_seq,
                               const std::vector<int>& query_seq,
                               const SimilarityMatrix& S);

// max over start offsets of the diagonal sum of Q entries; entries outside
// the document contribute 0 and any offset with at least one overlapping
// entry is allowed.
double relevance(const MatchingMatrix& W);

std::vector<int> pattern_sequence(const Labeling& lab);

// Decodes the query under every grid point's pattern set, scores each
// archive document with the diagonal relevance, and fuses the per-set
// scores with an unweighted mean.
RankedList search(const FeatureSequence& query, const GridModels& grid_models,
                  const std::map<GridPoint, SimilarityMatrix>& sims);

}  // namespace patlex

#endif  // PATLEX_RETRIEVAL_HPP_
