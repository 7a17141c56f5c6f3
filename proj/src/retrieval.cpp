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

#include "patlex/retrieval.hpp"

#include <algorithm>

namespace patlex {

MatchingMatrix matching_matrix(const std::vector<int>& doc_seq,
                               const std::vector<int>& query_seq,
                               const SimilarityMatrix& S) {
  const int n = static_cast<int>(S.entries.rows());
  MatchingMatrix W;
  W.entries = Matrix<double>(doc_seq.size(), query_seq.size(), 0.0);
  for (std::size_t i = 0; i < doc_seq.size(); ++i) {
    if (doc_seq[i] < 0 || doc_seq[i] >= n)
      throw ValidationError("document pattern index out of range");
    for (std::size_t j = 0; j < query_seq.size(); ++j) {
      if (query_seq[j] < 0 || query_seq[j] >= n)
        throw ValidationError("query pattern index out of range");
      W.entries(i, j) = S.entries(doc_seq[i], query_seq[j]);
    }
  }
  return W;
}

double relevance(const MatchingMatrix& W) {
  const int D = static_cast<int>(W.entries.rows());
  const int Q = static_cast<int>(W.entries.cols());
  if (D < 1 || Q < 1) throw ValidationError("relevance on empty matching matrix");
  double best = kNegInf;
  for (int offset = -(Q - 1); offset <= D - 1; ++offset) {
    double acc = 0.0;
    for (int j = 0; j < Q; ++j) {
      const int i = offset + j;
      if (i >= 0 && i < D) acc += W.entries(i, j);
    }
    if (acc > best) best = acc;
  }
  return best;
}

std::vector<int> pattern_sequence(const Labeling& lab) {
  std::vector<int> seq;
  seq.reserve(lab.segments.size());
  for (const auto& seg : lab.segments) seq.push_back(seg.pattern);
  return seq;
}

RankedList search(const FeatureSequence& query, const GridModels& grid_models,
                  const std::map<GridPoint, SimilarityMatrix>& sims) {
  if (grid_models.sets.empty())
    throw ValidationError("search requires at least one trained pattern set");
  int max_states = 0;
  for (const auto& [point, set] : grid_models.sets)
    max_states = std::max(max_states, point.states_per_pattern);
  if (query.num_frames() < max_states)
    throw ValidationError("query '" + query.utterance_id + "' has " +
                          std::to_string(query.num_frames()) +
                          " frames, shorter than the longest pattern (" +
                          std::to_string(max_states) + " states)");

  // canonical document order: first appearance across grid points
  std::vector<std::string> doc_ids;
  std::map<std::string, std::size_t> doc_index;
  for (const auto& [point, labs] : grid_models.labels.labels) {
    for (const auto& lab : labs) {
      if (doc_index.emplace(lab.utterance_id, doc_ids.size()).second)
        doc_ids.push_back(lab.utterance_id);
    }
  }
  if (doc_ids.empty()) throw ValidationError("search archive is empty");

  RankedList out;
  out.query_id = query.utterance_id;
  out.entries.resize(doc_ids.size());
  for (std::size_t d = 0; d < doc_ids.size(); ++d)
    out.entries[d].doc_id = doc_ids[d];

  const double num_sets = static_cast<double>(grid_models.sets.size());
  for (const auto& [point, set] : grid_models.sets) {
    const auto sim_it = sims.find(point);
    if (sim_it == sims.end())
      throw ValidationError("missing similarity matrix for point " +
                            point_name(point));
    const Labeling query_lab = viterbi_decode(query, set);
    const std::vector<int> query_seq = pattern_sequence(query_lab);
    const auto& labs = grid_models.labels.labels.at(point);
    std::vector<double> scores(labs.size(), 0.0);
    parallel_for(labs.size(), [&](std::size_t i) {
      scores[i] = relevance(
          matching_matrix(pattern_sequence(labs[i]), query_seq, sim_it->second));
    });
    for (std::size_t i = 0; i < labs.size(); ++i) {
      auto& entry = out.entries[doc_index.at(labs[i].utterance_id)];
      entry.per_set[point] = scores[i];
      entry.fused_score += scores[i] / num_sets;
    }
  }

  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const RankedList::Entry& a, const RankedList::Entry& b) {
                     if (a.fused_score != b.fused_score)
                       return a.fused_score > b.fused_score;
                     return a.doc_id < b.doc_id;
                   });
  return out;
}

}  // namespace patlex
