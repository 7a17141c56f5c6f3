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

#include <filesystem>
#include <fstream>

#include "patlex/corpus.hpp"
#include "patlex/mfcc.hpp"
#include "test_util.hpp"

using namespace patlex;
namespace fs = std::filesystem;

TEST_CASE("feature file round trip is exact") {
  TempDir tmp("corpus_roundtrip");
  FeatureSequence seq;
  seq.utterance_id = "u1";
  seq.frames = Matrix<float>(100, 39);
  Rng rng(7);
  for (std::size_t i = 0; i < 100 * 39; ++i)
    seq.frames.data()[i] = static_cast<float>(rng.normal());

  const std::string path = tmp.file("u1.plxf");
  write_features(path, seq);
  const FeatureSequence back = read_features(path);
  CHECK(back.frames == seq.frames);
  CHECK(back.utterance_id == "u1");
}

TEST_CASE("binary header errors") {
  TempDir tmp("corpus_header");
  const std::string path = tmp.file("bad.plxf");
  {
    std::ofstream out(path, std::ios::binary);
    out.write("PLXF", 4);
    const std::uint32_t zero = 0, dim = 39;
    out.write(reinterpret_cast<const char*>(&zero), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
  }
  CHECK_THROWS_AS(read_features(path), FormatError);

  const std::string trunc = tmp.file("trunc.plxf");
  {
    std::ofstream out(trunc, std::ios::binary);
    out.write("PLXF", 4);
    const std::uint32_t t = 10, dim = 39;
    out.write(reinterpret_cast<const char*>(&t), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    const float v = 1.0f;
    out.write(reinterpret_cast<const char*>(&v), 4);  // far too short
  }
  CHECK_THROWS_AS(read_features(trunc), FormatError);
}

TEST_CASE("csv fallback parses within tolerance") {
  TempDir tmp("corpus_csv");
  const std::string path = tmp.file("u.csv");
  {
    std::ofstream out(path);
    out << "1.5,-2.25,0.125\n0.0,3.0,-1.0\n";
  }
  const FeatureSequence seq = read_features(path);
  REQUIRE(seq.num_frames() == 2);
  REQUIRE(seq.dim() == 3);
  CHECK(seq.frames(0, 1) == doctest::Approx(-2.25).epsilon(1e-6));
  CHECK(seq.frames(1, 2) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("manifest loading") {
  TempDir tmp("corpus_manifest");
  write_features(tmp.file("a.plxf"), constant_sequence("a", 100, 4, 0.5f));
  write_features(tmp.file("b.plxf"), constant_sequence("b", 50, 4, -1.0f));

  SUBCASE("two utterances, no annotations") {
    const std::string manifest = tmp.file("m.jsonl");
    {
      std::ofstream out(manifest);
      out << R"({"utt": "a", "features": "a.plxf"})" << "\n";
      out << R"({"utt": "b", "features": "b.plxf"})" << "\n";
    }
    const Corpus corpus = load_manifest(manifest);
    CHECK(corpus.utterances.size() == 2);
    CHECK(corpus.annotations.empty());
    CHECK(corpus.find("b")->num_frames() == 50);
  }

  SUBCASE("missing feature file is an I/O error") {
    const std::string manifest = tmp.file("missing.jsonl");
    {
      std::ofstream out(manifest);
      out << R"({"utt": "c", "features": "nonexistent.plxf"})" << "\n";
    }
    CHECK_THROWS_AS(load_manifest(manifest), IoError);
  }

  SUBCASE("annotation out of range is a validation error") {
    const std::string manifest = tmp.file("ann.jsonl");
    {
      std::ofstream out(manifest);
      out << R"({"utt": "a", "features": "a.plxf"})" << "\n";
      out << R"({"utt": "a", "word": "water", "start": 80, "end": 120})" << "\n";
    }
    CHECK_THROWS_AS(load_manifest(manifest), ValidationError);
  }

  SUBCASE("annotations load when in range") {
    const std::string manifest = tmp.file("ok.jsonl");
    {
      std::ofstream out(manifest);
      out << R"({"utt": "a", "features": "a.plxf"})" << "\n";
      out << R"({"utt": "a", "word": "water", "start": 10, "end": 30})" << "\n";
    }
    const Corpus corpus = load_manifest(manifest);
    REQUIRE(corpus.annotations.size() == 1);
    CHECK(corpus.annotations[0].word == "water");
  }

  SUBCASE("dimension mismatch is a format error") {
    write_features(tmp.file("wide.plxf"), constant_sequence("wide", 10, 7, 0.0f));
    const std::string manifest = tmp.file("dim.jsonl");
    {
      std::ofstream out(manifest);
      out << R"({"utt": "a", "features": "a.plxf"})" << "\n";
      out << R"({"utt": "wide", "features": "wide.plxf"})" << "\n";
    }
    CHECK_THROWS_AS(load_manifest(manifest), FormatError);
  }
}

TEST_CASE("wav reader enforces format") {
  TempDir tmp("corpus_wav");
  const std::string path = tmp.file("tone.wav");
  std::vector<float> samples(16000);
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = 8000.0f * std::sin(2.0 * 3.14159265358979 * 440.0 * i / 16000.0);
  write_test_wav(path, samples, 16000);
  const std::vector<float> back = read_wav_16k_mono(path);
  REQUIRE(back.size() == samples.size());
  CHECK(back[100] == doctest::Approx(std::round(samples[100])).epsilon(1e-4));

  const std::string bad_rate = tmp.file("8k.wav");
  write_test_wav(bad_rate, samples, 8000);
  CHECK_THROWS_AS(read_wav_16k_mono(bad_rate), ValidationError);
}

TEST_CASE("mfcc frame count and dimensions") {
  std::vector<float> second(16000, 0.0f);
  Rng rng(3);
  for (auto& s : second) s = static_cast<float>(1000.0 * rng.normal());
  const FeatureSequence seq = extract_mfcc(second);
  // floor((16000 - 400) / 160) + 1
  CHECK(seq.num_frames() == 98);
  CHECK(seq.dim() == 39);

  CHECK_THROWS_AS(extract_mfcc(std::vector<float>(399, 0.0f)), ValidationError);
}

TEST_CASE("mfcc on silence: identical frames, zero deltas") {
  const std::vector<float> silence(16000, 0.0f);
  const FeatureSequence seq = extract_mfcc(silence);
  for (int t = 1; t < seq.num_frames(); ++t)
    for (int d = 0; d < seq.dim(); ++d)
      CHECK(seq.frames(t, d) == seq.frames(0, d));
  for (int d = 13; d < 39; ++d) CHECK(seq.frames(0, d) == 0.0f);
}

TEST_CASE("mfcc separates tones and is deterministic") {
  std::vector<float> tone1(16000), tone2(16000);
  for (int i = 0; i < 16000; ++i) {
    tone1[i] = 5000.0f * std::sin(2.0 * 3.14159265358979 * 1000.0 * i / 16000.0);
    tone2[i] = 5000.0f * std::sin(2.0 * 3.14159265358979 * 2000.0 * i / 16000.0);
  }
  const FeatureSequence a = extract_mfcc(tone1);
  const FeatureSequence b = extract_mfcc(tone2);
  double dist = 0.0;
  for (int d = 0; d < 13; ++d) {
    const double diff = a.frames(40, d) - b.frames(40, d);
    dist += diff * diff;
  }
  CHECK(dist > 0.0);

  const FeatureSequence again = extract_mfcc(tone1);
  CHECK(again.frames == a.frames);
}

TEST_CASE("mfcc time shift moves frames by one index") {
  std::vector<float> signal(16000 + 160);
  Rng rng(11);
  for (auto& s : signal) s = static_cast<float>(2000.0 * rng.normal());
  const std::vector<float> base(signal.begin(), signal.begin() + 16000);
  const std::vector<float> shifted(signal.begin() + 160, signal.end());

  const FeatureSequence fa = extract_mfcc(base);
  const FeatureSequence fb = extract_mfcc(shifted);
  // interior frames only; delta padding distorts the edges
  for (int t = 5; t + 6 < fa.num_frames(); ++t)
    for (int d = 0; d < 39; ++d)
      CHECK(fb.frames(t - 1, d) ==
            doctest::Approx(fa.frames(t, d)).epsilon(1e-4).scale(1.0));
}
