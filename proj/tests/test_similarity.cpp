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
#include "patlex/similarity.hpp"
#include "test_util.hpp"

using namespace patlex;

namespace {

GaussianComponent gauss1d(double mean, double var, double weight = 1.0) {
  GaussianComponent c;
  c.weight = weight;
  c.mean = {mean};
  c.var = {var};
  return c;
}

}  // namespace

TEST_CASE("gaussian_kl closed forms") {
  const auto a = gauss1d(0.0, 1.0);
  CHECK(gaussian_kl(a, a) == 0.0);

  const auto b = gauss1d(1.0, 1.0);
  CHECK(gaussian_kl(a, b) == doctest::Approx(0.5).epsilon(1e-12));

  const auto wide = gauss1d(0.0, 2.0);
  const double expected = 0.5 * (std::log(2.0) + 0.5 - 1.0);
  CHECK(gaussian_kl(a, wide) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(gaussian_kl(a, wide) > 0.0);
  CHECK(gaussian_kl(wide, a) > 0.0);
}

TEST_CASE("variational mixture divergence") {
  SUBCASE("identical mixtures give exactly zero") {
    const StateMixture f{gauss1d(-1.0, 0.5, 0.3), gauss1d(2.0, 1.5, 0.7)};
    CHECK(gmm_kl_variational(f, f) == 0.0);
  }

  SUBCASE("single components collapse to gaussian_kl exactly") {
    const StateMixture f{gauss1d(0.0, 1.0)};
    const StateMixture g{gauss1d(2.5, 0.7)};
    CHECK(gmm_kl_variational(f, g) ==
          doctest::Approx(gaussian_kl(f[0], g[0])).epsilon(1e-15));
  }

  SUBCASE("well separated mixtures agree with Monte-Carlo KL") {
    struct Case {
      StateMixture f, g;
    };
    const std::vector<Case> cases{
        {{gauss1d(0.0, 1.0, 0.5), gauss1d(30.0, 1.0, 0.5)},
         {gauss1d(0.5, 1.0, 0.5), gauss1d(30.5, 1.0, 0.5)}},
        {{gauss1d(-10.0, 0.8, 0.7), gauss1d(15.0, 1.5, 0.3)},
         {gauss1d(-9.5, 1.0, 0.6), gauss1d(15.5, 1.2, 0.4)}},
    };
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const double d = gmm_kl_variational(cases[i].f, cases[i].g);
      const auto mc = oracle::ref_mc_kl_1d(cases[i].f, cases[i].g, 1000000,
                                           900 + static_cast<std::uint64_t>(i));
      CHECK(std::abs(d - mc.estimate) <= 3.0 * mc.stderr_);
    }
  }
}

TEST_CASE("hmm_kl sums state divergences symmetrically") {
  const auto p = make_pattern(0, {{0.0}, {4.0}});
  const auto q = make_pattern(1, {{1.0}, {6.0}});
  const double expected =
      gaussian_kl(p.states[0][0], q.states[0][0]) +
      gaussian_kl(q.states[0][0], p.states[0][0]) +
      gaussian_kl(p.states[1][0], q.states[1][0]) +
      gaussian_kl(q.states[1][0], p.states[1][0]);
  CHECK(hmm_kl(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(hmm_kl(p, p) == 0.0);
  CHECK(hmm_kl(p, q) == hmm_kl(q, p));

  const auto longer = make_pattern(2, {{0.0}, {1.0}, {2.0}});
  CHECK_THROWS_AS(hmm_kl(p, longer), ValidationError);
}

TEST_CASE("similarity matrix") {
  SUBCASE("diagonal is exactly one, KL=100 at beta=100 gives 1/e") {
    // unit variances, means 10 apart: symmetric KL = 10^2 = 100
    const auto set =
        make_set({make_pattern(0, {{0.0}}), make_pattern(1, {{10.0}})}, 1);
    const SimilarityMatrix sim = similarity_matrix(set, 100.0);
    sim.validate();
    CHECK(sim.entries(0, 0) == 1.0);
    CHECK(sim.entries(1, 1) == 1.0);
    CHECK(sim.entries(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(sim.entries(0, 1) == sim.entries(1, 0));
  }

  SUBCASE("small beta approaches the delta function") {
    const auto set =
        make_set({make_pattern(0, {{0.0}}), make_pattern(1, {{2.0}})}, 1);
    // symmetric KL = 4 >= 1
    const SimilarityMatrix sim = similarity_matrix(set, 1e-6);
    CHECK(sim.entries(0, 1) < 1e-6);
    CHECK(sim.entries(0, 0) == 1.0);
  }

  SUBCASE("entrywise monotone in beta") {
    Rng rng(13);
    std::vector<PatternHMM> patterns;
    for (int p = 0; p < 4; ++p) {
      std::vector<std::vector<double>> means(2);
      for (auto& m : means) m = {3.0 * rng.normal(), 3.0 * rng.normal()};
      patterns.push_back(make_pattern(p, means, rng.uniform(0.5, 2.0)));
    }
    const auto set = make_set(patterns, 2);
    const SimilarityMatrix s1 = similarity_matrix(set, 10.0);
    const SimilarityMatrix s2 = similarity_matrix(set, 50.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j) CHECK(s1.entries(i, j) <= s2.entries(i, j));
  }

  SUBCASE("beta must be positive") {
    const auto set =
        make_set({make_pattern(0, {{0.0}}), make_pattern(1, {{1.0}})}, 1);
    CHECK_THROWS_AS(similarity_matrix(set, 0.0), ValidationError);
    CHECK_THROWS_AS(similarity_matrix(set, -1.0), ValidationError);
  }

  SUBCASE("file round trip") {
    TempDir tmp("sim_io");
    const auto set =
        make_set({make_pattern(0, {{0.0}}), make_pattern(1, {{3.0}})}, 1);
    const SimilarityMatrix sim = similarity_matrix(set, 100.0);
    save_similarity(tmp.file("s.plxs"), sim);
    const SimilarityMatrix back = load_similarity(tmp.file("s.plxs"));
    CHECK(back.entries == sim.entries);
  }
}
