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

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "patlex/retrieval.hpp"
#include "test_util.hpp"

using namespace patlex;

namespace {

SimilarityMatrix identity_like(int n, double off_diagonal) {
  SimilarityMatrix sim;
  sim.entries = Matrix<double>(n, n, off_diagonal);
  for (int i = 0; i < n; ++i) sim.entries(i, i) = 1.0;
  return sim;
}

}  // namespace

TEST_CASE("matching matrix lookups") {
  const SimilarityMatrix S = identity_like(2, 0.2);
  const MatchingMatrix W = matching_matrix({0, 1}, {1}, S);
  REQUIRE(W.entries.rows() == 2);
  REQUIRE(W.entries.cols() == 1);
  CHECK(W.entries(0, 0) == 0.2);
  CHECK(W.entries(1, 0) == 1.0);

  const std::vector<int> seq{0, 1, 0, 1, 1, 0};
  const MatchingMatrix self = matching_matrix(seq, seq, identity_like(2, 0.0));
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(self.entries(i, i) == 1.0);

  const MatchingMatrix shape =
      matching_matrix({0, 1, 0, 1, 0, 1}, {1, 0, 1}, identity_like(2, 0.1));
  CHECK(shape.entries.rows() == 6);
  CHECK(shape.entries.cols() == 3);

  CHECK_THROWS_AS(matching_matrix({0, 5}, {0}, S), ValidationError);
}

TEST_CASE("relevance diagonal sums") {
  SUBCASE("perfect match scores Q") {
    const std::vector<int> seq{0, 1, 0, 1};
    const MatchingMatrix W = matching_matrix(seq, seq, identity_like(2, 0.0));
    CHECK(relevance(W) == doctest::Approx(2.0));  // off-diagonal hits also 1
  }

  SUBCASE("single column takes the best row") {
    MatchingMatrix W;
    W.entries = Matrix<double>(3, 1, 0.0);
    W.entries(0, 0) = 0.1;
    W.entries(1, 0) = 0.9;
    W.entries(2, 0) = 0.3;
    CHECK(relevance(W) == doctest::Approx(0.9).epsilon(1e-12));
  }

  SUBCASE("matches brute force enumeration on random matrices") {
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
      const int D = 1 + static_cast<int>(rng.uniform_int(0, 11));
      const int Q = 1 + static_cast<int>(rng.uniform_int(0, 5));
      MatchingMatrix W;
      W.entries = Matrix<double>(D, Q, 0.0);
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < Q; ++j) W.entries(i, j) = rng.uniform();
      CHECK(relevance(W) ==
            doctest::Approx(oracle::ref_relevance(W.entries)).epsilon(1e-12));
    }
  }

  SUBCASE("bounds and monotonicity") {
    Rng rng(66);
    for (int trial = 0; trial < 50; ++trial) {
      const int D = 1 + static_cast<int>(rng.uniform_int(0, 7));
      const int Q = 1 + static_cast<int>(rng.uniform_int(0, 4));
      MatchingMatrix W;
      W.entries = Matrix<double>(D, Q, 0.0);
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < Q; ++j) W.entries(i, j) = rng.uniform();
      const double r = relevance(W);
      CHECK(r >= 0.0);
      CHECK(r <= static_cast<double>(Q) + 1e-12);

      MatchingMatrix W2 = W;
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < Q; ++j)
          W2.entries(i, j) = std::min(1.0, W2.entries(i, j) + rng.uniform(0.0, 0.3));
      CHECK(relevance(W2) >= r - 1e-12);
    }
  }

  SUBCASE("zero-similarity padding never changes relevance") {
    Rng rng(77);
    MatchingMatrix W;
    W.entries = Matrix<double>(4, 3, 0.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) W.entries(i, j) = rng.uniform();
    const double base = relevance(W);
    MatchingMatrix padded;
    padded.entries = Matrix<double>(6, 3, 0.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) padded.entries(i, j) = W.entries(i, j);
    CHECK(relevance(padded) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("empty matrix is rejected") {
    MatchingMatrix W;
    CHECK_THROWS_AS(relevance(W), ValidationError);
  }
}

TEST_CASE("grid search") {
  // Two clearly separated single-state patterns so decoding is exact.
  const auto set = make_set({make_pattern(0, {{0.0}}, 1.0, 0.5),
                             make_pattern(1, {{10.0}}, 1.0, 0.5)},
                            1);
  const GridPoint point{1, 2};

  GridModels gm;
  gm.grid.temporal_values = {1};
  gm.grid.phonetic_values = {2};
  gm.grid.gaussians_per_state = 1;
  gm.sets.emplace(point, set);

  const auto doc_a = sequence_from("doc_a", {{0.0f}, {0.0f}, {10.0f}, {10.0f}});
  const auto doc_b = sequence_from("doc_b", {{10.0f}, {10.0f}, {10.0f}, {10.0f}});
  const auto doc_c = sequence_from("doc_c", {{0.0f}, {0.0f}, {0.0f}, {0.0f}});
  std::vector<Labeling> labs;
  for (const auto* doc : {&doc_a, &doc_b, &doc_c})
    labs.push_back(viterbi_decode(*doc, set));
  gm.labels.labels.emplace(point, labs);

  std::map<GridPoint, SimilarityMatrix> sims;
  sims.emplace(point, similarity_matrix(set, 100.0));

  SUBCASE("single grid point: fused equals the per-set score") {
    const RankedList result = search(doc_a, gm, sims);
    REQUIRE(result.entries.size() == 3);
    for (const auto& entry : result.entries) {
      REQUIRE(entry.per_set.size() == 1);
      CHECK(entry.fused_score ==
            doctest::Approx(entry.per_set.at(point)).epsilon(1e-12));
    }
    // the archive contains the query itself: it must rank first
    CHECK(result.entries[0].doc_id == "doc_a");
  }

  SUBCASE("query shorter than the longest pattern is rejected") {
    GridModels tall = gm;
    const GridPoint big{5, 2};
    std::vector<PatternHMM> five;
    five.push_back(make_pattern(0, {{0.0}, {0.0}, {0.0}, {0.0}, {0.0}}));
    five.push_back(make_pattern(1, {{9.0}, {9.0}, {9.0}, {9.0}, {9.0}}));
    tall.grid.temporal_values = {1, 5};
    tall.sets.emplace(big, make_set(five, 1));
    tall.labels.labels.emplace(big, labs);
    const auto query = sequence_from("q", {{0.0f}, {0.0f}});
    CHECK_THROWS_AS(search(query, tall, sims), ValidationError);
  }

  SUBCASE("fused score is the mean over grid points") {
    // second grid point with swapped means changes per-set scores
    GridModels two = gm;
    const GridPoint other{2, 2};
    const auto set2 = make_set({make_pattern(0, {{0.0}, {0.0}}, 1.0, 0.5),
                                make_pattern(1, {{10.0}, {10.0}}, 1.0, 0.5)},
                               1);
    two.grid.temporal_values = {1, 2};
    two.sets.emplace(other, set2);
    std::vector<Labeling> labs2;
    for (const auto* doc : {&doc_a, &doc_b, &doc_c})
      labs2.push_back(viterbi_decode(*doc, set2));
    two.labels.labels.emplace(other, labs2);
    std::map<GridPoint, SimilarityMatrix> sims2 = sims;
    sims2.emplace(other, similarity_matrix(set2, 100.0));

    const RankedList result = search(doc_a, two, sims2);
    for (const auto& entry : result.entries) {
      REQUIRE(entry.per_set.size() == 2);
      const double mean =
          (entry.per_set.at(point) + entry.per_set.at(other)) / 2.0;
      CHECK(entry.fused_score == doctest::Approx(mean).epsilon(1e-12));
    }
    // hand arithmetic: doubling one point's scores reorders by the new mean
    std::vector<std::pair<double, std::string>> doubled;
    for (const auto& entry : result.entries)
      doubled.emplace_back(
          (2.0 * entry.per_set.at(point) + entry.per_set.at(other)) / 2.0,
          entry.doc_id);
    std::stable_sort(doubled.begin(), doubled.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    CHECK(doubled[0].second == "doc_a");
  }

  SUBCASE("ranking is deterministic across runs") {
    const RankedList a = search(doc_b, gm, sims);
    const RankedList b = search(doc_b, gm, sims);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      CHECK(a.entries[i].doc_id == b.entries[i].doc_id);
      CHECK(a.entries[i].fused_score == b.entries[i].fused_score);
    }
  }
}
