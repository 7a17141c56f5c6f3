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

#ifndef PATLEX_MFCC_HPP_
#define PATLEX_MFCC_HPP_

#include <vector>

#include "patlex/corpus.hpp"

namespace patlex {

/// 39-dimensional MFCC frontend: 13 cepstra with C0 replaced by log
/// energy, plus delta and delta-delta appended. Fixed recipe so feature
/// files are reproducible byte for byte.
struct MfccConfig {
  int sample_rate = 16000;
  int frame_length = 400;  // 25 ms
  int frame_shift = 160;   // 10 ms
  int fft_size = 512;
  int mel_filters = 26;
  int num_cepstra = 13;  // slot 0 carries log energy
  double preemphasis = 0.97;
  int delta_context = 2;  // regression over +-2 frames

  int output_dim() const { return 3 * num_cepstra; }
};

// T = floor((num_samples - frame_length) / frame_shift) + 1. Throws
// ValidationError when the signal is shorter than one analysis window.
FeatureSequence extract_mfcc(const std::vector<float>& samples,
                             const MfccConfig& config = MfccConfig());

}  // namespace patlex

#endif  // PATLEX_MFCC_HPP_
