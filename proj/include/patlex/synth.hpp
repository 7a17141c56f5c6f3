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

#ifndef PATLEX_SYNTH_HPP_
#define PATLEX_SYNTH_HPP_

#include <string>

#include "patlex/corpus.hpp"
#include "patlex/eval.hpp"

namespace patlex {

/// Synthetic speech-like corpus: Gaussian "phones" with jittered
/// durations, utterances as phone strings with planted multi-phone words,
/// plus one fresh realization of each word as a retrieval query.
struct SynthConfig {
  int num_phones = 20;
  int num_utterances = 300;
  int num_words = 10;
  int word_phones = 3;        // phones per planted word
  int feature_dim = 13;
  double phone_spread = 1.0;  // scale of phone mean placement
  double noise_level = 0.5;   // per-frame Gaussian noise
  int min_duration = 5;       // frames per phone
  int max_duration = 9;
  int min_utterance_phones = 8;
  int max_utterance_phones = 12;
  double word_probability = 0.35;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthOutput {
  std::string manifest_path;    // corpus.jsonl with annotations
  std::string queries_path;     // queries.jsonl
  std::string judgments_path;   // judgments.jsonl
  int num_word_instances = 0;
};

// Writes feats/*.plxf, queries/*.plxf and the three JSONL files under
// out_dir. Fully deterministic for a fixed config.
SynthOutput synthesize(const SynthConfig& config, const std::string& out_dir);

}  // namespace patlex

#endif  // PATLEX_SYNTH_HPP_
