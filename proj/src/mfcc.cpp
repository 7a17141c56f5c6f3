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

#include "patlex/mfcc.hpp"

#include <cmath>
#include <complex>

namespace patlex {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Triangular mel filterbank over FFT power bins [0, fft/2].
Matrix<double> mel_filterbank(const MfccConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(cfg.mel_filters + 2);
  for (int i = 0; i < cfg.mel_filters + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / (cfg.mel_filters + 1);
    centers[i] = mel_to_hz(mel) * cfg.fft_size / cfg.sample_rate;
  }
  Matrix<double> fb(cfg.mel_filters, bins, 0.0);
  for (int f = 0; f < cfg.mel_filters; ++f) {
    const double lo = centers[f], mid = centers[f + 1], hi = centers[f + 2];
    for (int b = 0; b < bins; ++b) {
      const double x = static_cast<double>(b);
      if (x > lo && x < mid) {
        fb(f, b) = (x - lo) / (mid - lo);
      } else if (x >= mid && x < hi) {
        fb(f, b) = (hi - x) / (hi - mid);
      }
    }
  }
  return fb;
}

// HTK-style regression deltas with edge replication.
Matrix<double> deltas(const Matrix<double>& src, int context) {
  const int rows = static_cast<int>(src.rows());
  const int cols = static_cast<int>(src.cols());
  double denom = 0.0;
  for (int k = 1; k <= context; ++k) denom += 2.0 * k * k;
  Matrix<double> out(rows, cols, 0.0);
  for (int t = 0; t < rows; ++t) {
    for (int k = 1; k <= context; ++k) {
      const int ahead = std::min(t + k, rows - 1);
      const int behind = std::max(t - k, 0);
      for (int c = 0; c < cols; ++c)
        out(t, c) += k * (src(ahead, c) - src(behind, c));
    }
    for (int c = 0; c < cols; ++c) out(t, c) /= denom;
  }
  return out;
}

}  // namespace

FeatureSequence extract_mfcc(const std::vector<float>& samples,
                             const MfccConfig& cfg) {
  if (static_cast<int>(samples.size()) < cfg.frame_length)
    throw ValidationError("signal shorter than one analysis window (" +
                          std::to_string(samples.size()) + " < " +
                          std::to_string(cfg.frame_length) + " samples)");
  const int num_frames =
      (static_cast<int>(samples.size()) - cfg.frame_length) / cfg.frame_shift + 1;
  const int bins = cfg.fft_size / 2 + 1;

  std::vector<double> window(cfg.frame_length);
  for (int i = 0; i < cfg.frame_length; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (cfg.frame_length - 1));

  const Matrix<double> fb = mel_filterbank(cfg);

  Matrix<double> statics(num_frames, cfg.num_cepstra, 0.0);
  std::vector<std::complex<double>> spec(cfg.fft_size);
  std::vector<double> frame(cfg.frame_length), power(bins), mel(cfg.mel_filters);

  for (int t = 0; t < num_frames; ++t) {
    const int off = t * cfg.frame_shift;
    // pre-emphasis then Hamming window; log energy comes from the same frame
    double energy = 0.0;
    for (int i = 0; i < cfg.frame_length; ++i) {
      const double prev = (off + i > 0) ? samples[off + i - 1] : 0.0;
      frame[i] = (samples[off + i] - cfg.preemphasis * prev) * window[i];
      energy += frame[i] * frame[i];
    }
    statics(t, 0) = std::log(std::max(energy, kLogFloor));

    for (int i = 0; i < cfg.fft_size; ++i)
      spec[i] = (i < cfg.frame_length) ? std::complex<double>(frame[i], 0.0)
                                       : std::complex<double>(0.0, 0.0);
    fft(spec);
    for (int b = 0; b < bins; ++b) power[b] = std::norm(spec[b]);

    for (int f = 0; f < cfg.mel_filters; ++f) {
      double acc = 0.0;
      const double* w = fb.row(f);
      for (int b = 0; b < bins; ++b) acc += w[b] * power[b];
      mel[f] = std::log(std::max(acc, kLogFloor));
    }
    // DCT-II, keeping c1..c12 (slot 0 already holds log energy)
    for (int c = 1; c < cfg.num_cepstra; ++c) {
      double acc = 0.0;
      for (int f = 0; f < cfg.mel_filters; ++f)
        acc += mel[f] * std::cos(kPi * c * (f + 0.5) / cfg.mel_filters);
      statics(t, c) = acc * std::sqrt(2.0 / cfg.mel_filters);
    }
  }

  const Matrix<double> d1 = deltas(statics, cfg.delta_context);
  const Matrix<double> d2 = deltas(d1, cfg.delta_context);

  FeatureSequence seq;
  seq.frame_period_ms = 1000.0 * cfg.frame_shift / cfg.sample_rate;
  seq.frames = Matrix<float>(num_frames, cfg.output_dim());
  for (int t = 0; t < num_frames; ++t) {
    for (int c = 0; c < cfg.num_cepstra; ++c) {
      seq.frames(t, c) = static_cast<float>(statics(t, c));
      seq.frames(t, cfg.num_cepstra + c) = static_cast<float>(d1(t, c));
      seq.frames(t, 2 * cfg.num_cepstra + c) = static_cast<float>(d2(t, c));
    }
  }
  return seq;
}

}  // namespace patlex
