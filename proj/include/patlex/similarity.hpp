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

#ifndef PATLEX_SIMILARITY_HPP_
#define PATLEX_SIMILARITY_HPP_

#include <string>

#include "patlex/hmm.hpp"

namespace patlex {

/// Inter-pattern similarity S(i,j) = exp(-KL(i,j)/beta) for one pattern
/// set: symmetric, unit diagonal, entries in (0,1].
struct SimilarityMatrix {
  Granularity granularity;
  double beta = 100.0;
  Matrix<double> entries;  // n x n

  void validate() const;
};

// Closed-form KL(a||b) in nats for diagonal-covariance Gaussians.
double gaussian_kl(const GaussianComponent& a, const GaussianComponent& b);

// Variational mixture divergence D_var(f||g) (matched-pair bound on the
// true KL), clamped below at zero. Collapses to gaussian_kl for single
// component mixtures.
double gmm_kl_variational(const StateMixture& f, const StateMixture& g);

// Symmetric state-wise divergence: sum over states of D_var both ways.
// States are matched by index, so both patterns need the same length.
double hmm_kl(const PatternHMM& p, const PatternHMM& q);

SimilarityMatrix similarity_matrix(const PatternSet& set, double beta = 100.0);

// Binary format: magic "PLXS", u32le n, then the upper triangle
// (row-major, diagonal included) as float64le.
void save_similarity(const std::string& path, const SimilarityMatrix& sim);
SimilarityMatrix load_similarity(const std::string& path);

}  // namespace patlex

#endif  // PATLEX_SIMILARITY_HPP_
