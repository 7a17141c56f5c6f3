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

#include "patlex/corpus.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace patlex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kFeatureMagic[4] = {'P', 'L', 'X', 'F'};

std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

FeatureSequence read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file: " + path);
  FeatureSequence seq;
  seq.utterance_id = stem_of(path);
  std::vector<std::vector<float>> rows;
  std::string line;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stof(cell));
      } catch (const std::exception&) {
        throw FormatError("bad CSV value '" + cell + "' in " + path);
      }
    }
    if (row.empty()) throw FormatError("empty CSV row in " + path);
    if (dim == 0) {
      dim = row.size();
    } else if (row.size() != dim) {
      throw FormatError("ragged CSV rows in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("no frames in " + path);
  seq.frames = Matrix<float>(rows.size(), dim);
  for (std::size_t t = 0; t < rows.size(); ++t)
    std::memcpy(seq.frames.row(t), rows[t].data(), dim * sizeof(float));
  seq.validate();
  return seq;
}

}  // namespace

void FeatureSequence::validate() const {
  if (frames.rows() < 1 || frames.cols() < 1)
    throw ValidationError("feature sequence '" + utterance_id + "' is empty");
  if (!(frame_period_ms > 0))
    throw ValidationError("frame period must be positive in '" + utterance_id + "'");
  const float* p = frames.data();
  const std::size_t total = frames.rows() * frames.cols();
  for (std::size_t i = 0; i < total; ++i) {
    if (!std::isfinite(p[i]))
      throw ValidationError("non-finite feature value in '" + utterance_id + "'");
  }
}

const FeatureSequence* Corpus::find(const std::string& utterance_id) const {
  for (const auto& u : utterances)
    if (u.utterance_id == utterance_id) return &u;
  return nullptr;
}

int Corpus::index_of(const std::string& utterance_id) const {
  for (std::size_t i = 0; i < utterances.size(); ++i)
    if (utterances[i].utterance_id == utterance_id) return static_cast<int>(i);
  return -1;
}

void Corpus::validate() const {
  std::unordered_map<std::string, int> frames_by_id;
  std::size_t dim = 0;
  for (const auto& u : utterances) {
    u.validate();
    if (!frames_by_id.emplace(u.utterance_id, u.num_frames()).second)
      throw ValidationError("duplicate utterance id '" + u.utterance_id + "'");
    if (dim == 0) {
      dim = u.frames.cols();
    } else if (u.frames.cols() != dim) {
      throw FormatError("feature dimension mismatch at '" + u.utterance_id + "': " +
                        std::to_string(u.frames.cols()) + " vs " + std::to_string(dim));
    }
  }
  for (const auto& a : annotations) {
    auto it = frames_by_id.find(a.utterance_id);
    if (it == frames_by_id.end())
      throw ValidationError("annotation references unknown utterance '" +
                            a.utterance_id + "' (word '" + a.word + "')");
    if (a.start_frame < 0 || a.start_frame >= a.end_frame || a.end_frame > it->second)
      throw ValidationError("annotation out of range: utt '" + a.utterance_id +
                            "' word '" + a.word + "' [" + std::to_string(a.start_frame) +
                            "," + std::to_string(a.end_frame) + ") with T=" +
                            std::to_string(it->second));
  }
}

FeatureSequence read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    in.close();
    return read_features_csv(path);
  }
  const std::uint32_t num_frames = read_u32le(in);
  const std::uint32_t dim = read_u32le(in);
  if (!in) throw FormatError("truncated feature header in " + path);
  if (num_frames == 0 || dim == 0)
    throw FormatError("feature header declares empty matrix in " + path);
  FeatureSequence seq;
  seq.utterance_id = stem_of(path);
  seq.frames = Matrix<float>(num_frames, dim);
  in.read(reinterpret_cast<char*>(seq.frames.data()),
          static_cast<std::streamsize>(sizeof(float) * num_frames * dim));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * num_frames * dim))
    throw FormatError("truncated feature payload in " + path);
  seq.validate();
  return seq;
}

void write_features(const std::string& path, const FeatureSequence& features) {
  features.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature file: " + path);
  out.write(kFeatureMagic, 4);
  write_u32le(out, static_cast<std::uint32_t>(features.frames.rows()));
  write_u32le(out, static_cast<std::uint32_t>(features.frames.cols()));
  out.write(reinterpret_cast<const char*>(features.frames.data()),
            static_cast<std::streamsize>(sizeof(float) * features.frames.rows() *
                                         features.frames.cols()));
  if (!out) throw IoError("short write to " + path);
}

Corpus load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  Corpus corpus;
  std::vector<std::pair<std::string, std::string>> feature_entries;  // (utt, path)
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) +
                        ": " + e.what());
    }
    if (!rec.contains("utt"))
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) +
                        ": missing \"utt\"");
    const std::string utt = rec.at("utt").get<std::string>();
    if (rec.contains("features")) {
      feature_entries.emplace_back(utt, rec.at("features").get<std::string>());
    } else if (rec.contains("word")) {
      WordAnnotation a;
      a.utterance_id = utt;
      a.word = rec.at("word").get<std::string>();
      a.start_frame = rec.at("start").get<int>();
      a.end_frame = rec.at("end").get<int>();
      corpus.annotations.push_back(std::move(a));
    } else {
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) +
                        ": expected \"features\" or \"word\"");
    }
  }

  corpus.utterances.resize(feature_entries.size());
  parallel_for(feature_entries.size(), [&](std::size_t i) {
    const auto& [utt, rel] = feature_entries[i];
    fs::path p(rel);
    if (p.is_relative()) p = base / p;
    FeatureSequence seq = read_features(p.string());
    seq.utterance_id = utt;
    corpus.utterances[i] = std::move(seq);
  });
  corpus.validate();
  return corpus;
}

std::vector<float> read_wav_16k_mono(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  char riff[4], wave[4];
  in.read(riff, 4);
  read_u32le(in);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw FormatError("not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<float> samples;
  bool got_fmt = false, got_data = false;
  while (in && !(got_fmt && got_data)) {
    char id[4];
    in.read(id, 4);
    if (!in) break;
    const std::uint32_t size = read_u32le(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> buf(size);
      in.read(buf.data(), size);
      if (size < 16) throw FormatError("short fmt chunk in " + path);
      std::memcpy(&format, buf.data() + 0, 2);
      std::memcpy(&channels, buf.data() + 2, 2);
      std::memcpy(&sample_rate, buf.data() + 4, 4);
      std::memcpy(&bits, buf.data() + 14, 2);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      std::vector<char> buf(size);
      in.read(buf.data(), size);
      if (in.gcount() != static_cast<std::streamsize>(size))
        throw FormatError("truncated data chunk in " + path);
      samples.resize(size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        std::int16_t s;
        std::memcpy(&s, buf.data() + 2 * i, 2);
        samples[i] = static_cast<float>(s);
      }
      got_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!got_fmt || !got_data) throw FormatError("missing fmt/data chunk in " + path);
  if (format != 1 || bits != 16)
    throw FormatError("only PCM16 wav supported: " + path);
  if (channels != 1) throw FormatError("only mono wav supported: " + path);
  if (sample_rate != 16000)
    throw ValidationError("unsupported sample rate " + std::to_string(sample_rate) +
                          " (expected 16000): " + path);
  return samples;
}

}  // namespace patlex
