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

#ifndef PATLEX_CORPUS_HPP_
#define PATLEX_CORPUS_HPP_

#include <string>
#include <vector>

#include "patlex/common.hpp"

namespace patlex {

/// One utterance: a T x F matrix of acoustic feature frames.
struct FeatureSequence {
  std::string utterance_id;
  Matrix<float> frames;  // T rows of F feature values
  double frame_period_ms = 10.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }

  // T >= 1, all values finite, positive frame period.
  void validate() const;
};

/// Word-level time annotation, [start_frame, end_frame). Used only by the
/// evaluation side; training never reads these.
struct WordAnnotation {
  std::string utterance_id;
  std::string word;
  int start_frame = 0;
  int end_frame = 0;
};

struct Corpus {
  std::vector<FeatureSequence> utterances;
  std::vector<WordAnnotation> annotations;

  const FeatureSequence* find(const std::string& utterance_id) const;
  int index_of(const std::string& utterance_id) const;  // -1 when absent

  // Unique ids, uniform feature dimension, annotations in range.
  void validate() const;
};

// Binary feature file: magic "PLXF", u32le T, u32le F, then T*F float32le
// row-major. read_features falls back to CSV (one frame per line) when the
// magic does not match. The utterance id is taken from the file stem.
FeatureSequence read_features(const std::string& path);
void write_features(const std::string& path, const FeatureSequence& features);

// JSON-lines manifest. Each line is either
//   {"utt": id, "features": path}
// or {"utt": id, "word": w, "start": s, "end": e}.
// Relative feature paths resolve against the manifest's directory.
Corpus load_manifest(const std::string& path);

// WAV PCM16 mono 16 kHz only; samples returned as raw int16 amplitudes.
std::vector<float> read_wav_16k_mono(const std::string& path);

}  // namespace patlex

#endif  // PATLEX_CORPUS_HPP_
