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

#include "patlex/similarity.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace patlex {

namespace {

constexpr char kSimilarityMagic[4] = {'P', 'L', 'X', 'S'};

}  // namespace

void SimilarityMatrix::validate() const {
  const std::size_t n = entries.rows();
  if (n == 0 || entries.cols() != n)
    throw ValidationError("similarity matrix must be square and non-empty");
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (entries(i, i) != 1.0)
      throw ValidationError("similarity diagonal must be exactly 1");
    for (std::size_t j = 0; j < n; ++j) {
      if (entries(i, j) != entries(j, i))
        throw ValidationError("similarity matrix must be symmetric");
      if (!(entries(i, j) >= 0.0 && entries(i, j) <= 1.0))
        throw ValidationError("similarity entries must lie in [0,1]");
    }
  }
}

double gaussian_kl(const GaussianComponent& a, const GaussianComponent& b) {
  if (a.mean.size() != b.mean.size())
    throw ValidationError("gaussian_kl dimension mismatch");
  double acc = 0.0;
  for (std::size_t d = 0; d < a.mean.size(); ++d) {
    const double diff = a.mean[d] - b.mean[d];
    acc += std::log(b.var[d] / a.var[d]) + (a.var[d] + diff * diff) / b.var[d] - 1.0;
  }
  return 0.5 * acc;
}

double gmm_kl_variational(const StateMixture& f, const StateMixture& g) {
  double total = 0.0;
  std::vector<double> terms(std::max(f.size(), g.size()));
  for (std::size_t a = 0; a < f.size(); ++a) {
    for (std::size_t a2 = 0; a2 < f.size(); ++a2)
      terms[a2] = std::log(f[a2].weight) - gaussian_kl(f[a], f[a2]);
    const double num = log_sum_exp(terms.data(), f.size());
    for (std::size_t b = 0; b < g.size(); ++b)
      terms[b] = std::log(g[b].weight) - gaussian_kl(f[a], g[b]);
    const double den = log_sum_exp(terms.data(), g.size());
    total += f[a].weight * (num - den);
  }
  return total < 0.0 ? 0.0 : total;
}

double hmm_kl(const PatternHMM& p, const PatternHMM& q) {
  if (p.num_states() != q.num_states())
    throw ValidationError("hmm_kl requires equal state counts (" +
                          std::to_string(p.num_states()) + " vs " +
                          std::to_string(q.num_states()) + ")");
  double total = 0.0;
  for (int s = 0; s < p.num_states(); ++s)
    total += gmm_kl_variational(p.states[s], q.states[s]) +
             gmm_kl_variational(q.states[s], p.states[s]);
  return total;
}

SimilarityMatrix similarity_matrix(const PatternSet& set, double beta) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  set.validate();
  const int n = set.granularity.num_patterns;
  SimilarityMatrix sim;
  sim.granularity = set.granularity;
  sim.beta = beta;
  sim.entries = Matrix<double>(n, n, 0.0);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> values(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    values[k] = std::exp(-hmm_kl(set.patterns[i], set.patterns[j]) / beta);
  });
  for (int i = 0; i < n; ++i) sim.entries(i, i) = 1.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    sim.entries(i, j) = values[k];
    sim.entries(j, i) = values[k];
  }
  return sim;
}

void save_similarity(const std::string& path, const SimilarityMatrix& sim) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write similarity file: " + path);
  out.write(kSimilarityMagic, 4);
  const std::uint32_t n = static_cast<std::uint32_t>(sim.entries.rows());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i; j < n; ++j) {
      const double v = sim.entries(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  if (!out) throw IoError("short write to " + path);
}

SimilarityMatrix load_similarity(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open similarity file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSimilarityMagic, 4) != 0)
    throw FormatError("bad similarity magic in " + path);
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n == 0) throw FormatError("bad similarity header in " + path);
  SimilarityMatrix sim;
  sim.entries = Matrix<double>(n, n, 0.0);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i; j < n; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      sim.entries(i, j) = v;
      sim.entries(j, i) = v;
    }
  if (!in) throw FormatError("truncated similarity payload in " + path);
  return sim;
}

}  // namespace patlex
