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

#include <algorithm>
#include <cmath>

#include "patlex/discovery.hpp"
#include "patlex/relabel.hpp"
#include "test_util.hpp"

using namespace patlex;

namespace {

struct SyntheticTruth {
  Corpus corpus;
  std::vector<std::vector<int>> frame_truth;  // generating pattern per frame
};

// Two well separated patterns (means +-5 per dimension, unit noise),
// alternating realizations of random duration.
SyntheticTruth two_pattern_corpus(int num_utterances, std::uint64_t seed,
                                  bool alternate = false) {
  SyntheticTruth out;
  Rng rng(seed);
  for (int u = 0; u < num_utterances; ++u) {
    FeatureSequence seq;
    seq.utterance_id = "u" + std::to_string(u);
    std::vector<float> frames;
    std::vector<int> truth;
    const int segments = 4 + static_cast<int>(rng.uniform_int(0, 3));
    int prev = static_cast<int>(rng.uniform_int(0, 1));
    for (int s = 0; s < segments; ++s) {
      const int pattern =
          alternate ? (s % 2) : static_cast<int>(rng.uniform_int(0, 1));
      const int duration = 3 + static_cast<int>(rng.uniform_int(0, 3));
      for (int t = 0; t < duration; ++t) {
        for (int d = 0; d < 2; ++d) {
          const double mean = pattern == 0 ? -5.0 : 5.0;
          frames.push_back(static_cast<float>(mean + rng.normal()));
        }
        truth.push_back(pattern);
      }
      prev = pattern;
    }
    (void)prev;
    seq.frames = Matrix<float>(frames.size() / 2, 2);
    std::copy(frames.begin(), frames.end(), seq.frames.data());
    out.corpus.utterances.push_back(std::move(seq));
    out.frame_truth.push_back(std::move(truth));
  }
  return out;
}

// Frame-level agreement with the generating partition, maximized over the
// two possible index permutations.
double partition_agreement(const SyntheticTruth& truth,
                           const std::vector<Labeling>& labels) {
  long agree_id = 0, agree_swap = 0, total = 0;
  for (std::size_t u = 0; u < labels.size(); ++u) {
    const auto& expected = truth.frame_truth[u];
    for (const auto& seg : labels[u].segments) {
      for (int t = seg.begin; t < seg.end; ++t) {
        ++total;
        if (seg.pattern == expected[t]) ++agree_id;
        if (seg.pattern == 1 - expected[t]) ++agree_swap;
      }
    }
  }
  return static_cast<double>(std::max(agree_id, agree_swap)) / total;
}

bool labels_equal(const std::vector<Labeling>& a, const std::vector<Labeling>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].utterance_id != b[i].utterance_id) return false;
    if (a[i].segments != b[i].segments) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("discover recovers a planted two-pattern corpus") {
  const SyntheticTruth truth = two_pattern_corpus(12, 101);
  DiscoveryConfig cfg;
  cfg.max_iterations = 5;
  cfg.em_iters = 2;
  cfg.seed = 7;
  const Granularity psi{1, 2, 1};
  const DiscoverResult res = discover(truth.corpus, psi, cfg);
  CHECK(partition_agreement(truth, res.labels) >= 0.99);
  CHECK(res.history.size() <= 5);
  CHECK(!res.history.empty());
}

TEST_CASE("t_max=1 is exactly decode(train(init))") {
  const SyntheticTruth truth = two_pattern_corpus(6, 33);
  DiscoveryConfig cfg;
  cfg.max_iterations = 1;
  cfg.em_iters = 2;
  cfg.seed = 11;
  const Granularity psi{1, 2, 2};
  const DiscoverResult res = discover(truth.corpus, psi, cfg);

  const auto init = init_labels(truth.corpus, psi, cfg.seed);
  const PatternSet set = train_models(truth.corpus, init, psi, cfg.em_iters);
  std::vector<Labeling> expected;
  for (const auto& lab : init)
    expected.push_back(
        viterbi_decode(*truth.corpus.find(lab.utterance_id), set));
  CHECK(labels_equal(res.labels, expected));
}

TEST_CASE("discovery is deterministic given the seed") {
  const SyntheticTruth truth = two_pattern_corpus(8, 55);
  DiscoveryConfig cfg;
  cfg.max_iterations = 4;
  cfg.em_iters = 2;
  cfg.seed = 99;
  const Granularity psi{2, 2, 2};
  const DiscoverResult a = discover(truth.corpus, psi, cfg);
  const DiscoverResult b = discover(truth.corpus, psi, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loglik == b.history[i].loglik);
    CHECK(a.history[i].change_ratio == b.history[i].change_ratio);
  }
  CHECK(labels_equal(a.labels, b.labels));
}

TEST_CASE("grid degeneracy and independence") {
  const SyntheticTruth truth = two_pattern_corpus(8, 77);
  DiscoveryConfig cfg;
  cfg.max_iterations = 3;
  cfg.em_iters = 2;
  cfg.seed = 5;

  SUBCASE("1x1 grid equals a single discover run") {
    GranularityGrid grid;
    grid.temporal_values = {2};
    grid.phonetic_values = {2};
    grid.gaussians_per_state = 2;
    const GridModels gm = discover_grid(truth.corpus, grid, cfg);
    const GridPoint point{2, 2};
    REQUIRE(gm.errors.empty());

    DiscoveryConfig point_cfg = cfg;
    point_cfg.seed = mix_seed(cfg.seed, 2, 2);
    const DiscoverResult solo =
        discover(truth.corpus, grid.granularity_at(point), point_cfg);
    CHECK(labels_equal(gm.labels.labels.at(point), solo.labels));
    REQUIRE(gm.history.at(point).size() == solo.history.size());
    for (std::size_t i = 0; i < solo.history.size(); ++i)
      CHECK(gm.history.at(point)[i].loglik == solo.history[i].loglik);
  }

  SUBCASE("independent grid points equal independent runs") {
    GranularityGrid grid;
    grid.temporal_values = {1, 2};
    grid.phonetic_values = {2, 3};
    grid.gaussians_per_state = 1;
    const GridModels gm = discover_grid(truth.corpus, grid, cfg);
    REQUIRE(gm.errors.empty());
    for (const GridPoint& point : grid.points()) {
      DiscoveryConfig point_cfg = cfg;
      point_cfg.seed =
          mix_seed(cfg.seed, point.states_per_pattern, point.num_patterns);
      const DiscoverResult solo =
          discover(truth.corpus, grid.granularity_at(point), point_cfg);
      CHECK(labels_equal(gm.labels.labels.at(point), solo.labels));
    }
  }

  SUBCASE("per-iteration loglik improves from the first iteration") {
    GranularityGrid grid;
    grid.temporal_values = {1, 2};
    grid.phonetic_values = {2, 3};
    grid.gaussians_per_state = 1;
    const GridModels gm = discover_grid(truth.corpus, grid, cfg);
    for (const auto& [point, hist] : gm.history) {
      REQUIRE(!hist.empty());
      CHECK(hist.back().loglik >= hist.front().loglik - 1e-6);
    }
  }
}

TEST_CASE("grid failures are contained per point") {
  const SyntheticTruth truth = two_pattern_corpus(4, 13);  // ~12-42 frames each
  GranularityGrid grid;
  grid.temporal_values = {1, 40};  // no utterance reaches 80 frames
  grid.phonetic_values = {2};
  grid.gaussians_per_state = 1;
  DiscoveryConfig cfg;
  cfg.max_iterations = 2;
  cfg.em_iters = 1;
  cfg.seed = 3;
  const GridModels gm = discover_grid(truth.corpus, grid, cfg);
  CHECK(gm.sets.count(GridPoint{1, 2}) == 1);
  CHECK(gm.errors.count(GridPoint{40, 2}) == 1);
  CHECK(gm.sets.count(GridPoint{40, 2}) == 0);
}

TEST_CASE("enhanced loop with self-consistent sequences matches plain discovery") {
  // strictly alternating patterns: every bigram is deterministic, so the
  // relabel pass never fires and the enhanced loop degenerates
  const SyntheticTruth truth = two_pattern_corpus(8, 123, /*alternate=*/true);
  GranularityGrid grid;
  grid.temporal_values = {1};
  grid.phonetic_values = {2};
  grid.gaussians_per_state = 1;
  DiscoveryConfig plain;
  plain.max_iterations = 4;
  plain.em_iters = 2;
  plain.seed = 21;
  DiscoveryConfig enhanced = plain;
  enhanced.relabel_enabled = true;

  const GridModels a = discover_grid(truth.corpus, grid, plain);
  const GridModels b = discover_grid(truth.corpus, grid, enhanced);
  const GridPoint point{1, 2};
  REQUIRE(a.errors.empty());
  REQUIRE(b.errors.empty());
  for (const auto& rec : b.history.at(point)) CHECK(rec.relabel_changes == 0);
  CHECK(labels_equal(a.labels.labels.at(point), b.labels.labels.at(point)));
}

TEST_CASE("enhance_step is deterministic and keeps the tiling") {
  const SyntheticTruth truth = two_pattern_corpus(8, 31);
  GranularityGrid grid;
  grid.temporal_values = {1, 2};
  grid.phonetic_values = {2, 3};
  grid.gaussians_per_state = 1;
  DiscoveryConfig cfg;
  cfg.max_iterations = 2;
  cfg.em_iters = 1;
  cfg.seed = 17;
  cfg.relabel_enabled = true;

  GridModels base = discover_grid(truth.corpus, grid, cfg);
  GridModels a = base, b = base;
  enhance_step(a, truth.corpus, cfg);
  enhance_step(b, truth.corpus, cfg);
  for (const auto& [point, labs] : a.labels.labels) {
    CHECK(labels_equal(labs, b.labels.labels.at(point)));
    for (std::size_t u = 0; u < labs.size(); ++u)
      labs[u].validate(truth.corpus.find(labs[u].utterance_id)->num_frames(),
                       point.states_per_pattern);
  }
  for (const auto& [point, hist] : a.history)
    CHECK(hist.size() == base.history.at(point).size() + 1);
}

TEST_CASE("run directory round trip") {
  TempDir tmp("run_io");
  const SyntheticTruth truth = two_pattern_corpus(6, 91);
  GranularityGrid grid;
  grid.temporal_values = {1, 2};
  grid.phonetic_values = {2};
  grid.gaussians_per_state = 2;
  DiscoveryConfig cfg;
  cfg.max_iterations = 2;
  cfg.em_iters = 2;
  cfg.seed = 41;
  const GridModels gm = discover_grid(truth.corpus, grid, cfg);
  save_run(tmp.dir(), gm);
  const GridModels back = load_run(tmp.dir());
  CHECK(back.grid.temporal_values == grid.temporal_values);
  CHECK(back.grid.phonetic_values == grid.phonetic_values);
  for (const auto& [point, labs] : gm.labels.labels) {
    CHECK(labels_equal(labs, back.labels.labels.at(point)));
    REQUIRE(back.history.at(point).size() == gm.history.at(point).size());
    for (std::size_t i = 0; i < gm.history.at(point).size(); ++i)
      CHECK(back.history.at(point)[i].loglik == gm.history.at(point)[i].loglik);
  }
  // corpus loglik is additive over utterances
  for (const auto& [point, labs] : gm.labels.labels) {
    double total = 0.0;
    for (const auto& lab : labs) total += lab.log_likelihood;
    CHECK(gm.history.at(point).back().loglik == doctest::Approx(total).epsilon(1e-12));
  }
}
