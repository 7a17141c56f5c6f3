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

#ifndef PATLEX_HMM_HPP_
#define PATLEX_HMM_HPP_

#include <optional>
#include <string>
#include <vector>

#include "patlex/corpus.hpp"

namespace patlex {

/// Model configuration psi = (states per pattern, number of patterns).
/// The state count sets the temporal granularity, the pattern count the
/// phonetic granularity.
struct Granularity {
  int states_per_pattern = 3;   // m
  int num_patterns = 50;        // n
  int gaussians_per_state = 4;  // fixed acoustic granularity

  void validate() const;
  bool operator==(const Granularity&) const = default;
};

struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;  // diagonal covariance

  double log_density(const float* frame, int dim) const;
};

/// One emitting state: a diagonal-covariance Gaussian mixture.
using StateMixture = std::vector<GaussianComponent>;

double mixture_log_density(const StateMixture& state, const float* frame, int dim);

/// Strict left-to-right HMM, no skips: from state s either stay with
/// self_loop[s] or advance with 1 - self_loop[s]. Advancing out of the
/// last state leaves the pattern, so any realization lasts >= m frames.
struct PatternHMM {
  int pattern_index = 0;
  std::vector<StateMixture> states;
  std::vector<double> self_loop;

  int num_states() const { return static_cast<int>(states.size()); }
};

struct PatternSet {
  Granularity granularity;
  int feature_dim = 0;
  std::vector<PatternHMM> patterns;

  void validate() const;
};

struct Segment {
  int pattern = 0;
  int begin = 0;  // inclusive frame
  int end = 0;    // exclusive frame

  bool operator==(const Segment&) const = default;
};

/// Decoded pattern sequence for one utterance. Segments tile [0, T).
struct Labeling {
  std::string utterance_id;
  std::vector<Segment> segments;
  double log_likelihood = 0.0;

  int num_segments() const { return static_cast<int>(segments.size()); }
  void validate(int total_frames, int min_segment_frames = 1) const;
  // Index of the segment containing frame t.
  int segment_at_frame(int t) const;
};

// Chunk-and-cluster initial labeling: utterances are cut into chunks of
// 2m frames (remainder merged into the last chunk) and chunk means are
// clustered with k-means, k = n. Utterances shorter than 2m frames are
// skipped and reported through `skipped`; an empty result is an error.
std::vector<Labeling> init_labels(const Corpus& corpus, const Granularity& psi,
                                  std::uint64_t seed,
                                  std::vector<std::string>* skipped = nullptr);

// Max-likelihood segmentation under the pattern-loop graph: all patterns
// in parallel, uniform 1/n entry and re-entry after each final state.
// log_likelihood is the Viterbi path score. Requires T >= m.
Labeling viterbi_decode(const FeatureSequence& features, const PatternSet& set);

/// Per-pattern EM diagnostics from train_models. Each phase is one run of
/// EM iterations at a fixed mixture size; `loglik` holds the assigned-data
/// log-likelihood before each update plus one final value, so within a
/// phase the sequence must be non-decreasing (up to 1e-6).
struct TrainStats {
  struct Phase {
    int gaussians = 0;
    std::vector<double> loglik;
  };
  std::vector<std::vector<Phase>> per_pattern;  // [pattern][phase]
};

// Re-estimates every pattern on the frames of its assigned segments with
// boundaries fixed. Without a prior set this grows mixtures 1 -> 2 -> ...
// up to psi.gaussians_per_state (binary mean splits, two EM iterations
// after each split); with a prior it refines the prior's parameters.
// Patterns with no assigned segments keep the prior's parameters.
PatternSet train_models(const Corpus& corpus, const std::vector<Labeling>& labels,
                        const Granularity& psi, int em_iters,
                        const PatternSet* prior = nullptr,
                        TrainStats* stats = nullptr);

// Log-likelihood of the frames under the labeled pattern sequence: per
// segment, 1/n entry + forward over the segment's states + exit from the
// final state, summed over segments.
double loglik(const FeatureSequence& features, const PatternSet& set,
              const Labeling& labels);

// Model file: magic "PLXM", u32le version, u32le m/n/G/F, then per pattern
// per state weights, means, variances as float64le, then the m self-loop
// probabilities per pattern.
void save_pattern_set(const std::string& path, const PatternSet& set);
PatternSet load_pattern_set(const std::string& path);

// Labelings as JSON lines: {"utt":..., "segs": [[p,s,e],...], "ll":...}.
void save_labels(const std::string& path, const std::vector<Labeling>& labels,
                 bool relabeled = false);
std::vector<Labeling> load_labels(const std::string& path);

}  // namespace patlex

#endif  // PATLEX_HMM_HPP_
