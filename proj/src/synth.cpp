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

#include "patlex/synth.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace patlex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_phones < 2) throw ValidationError("need at least 2 phones");
  if (num_utterances < 1) throw ValidationError("need at least 1 utterance");
  if (num_words < 0) throw ValidationError("negative word count");
  if (word_phones < 1) throw ValidationError("words need at least 1 phone");
  if (feature_dim < 1) throw ValidationError("feature dim must be positive");
  if (min_duration < 1 || max_duration < min_duration)
    throw ValidationError("bad phone duration range");
  if (min_utterance_phones < 1 || max_utterance_phones < min_utterance_phones)
    throw ValidationError("bad utterance length range");
  if (word_phones > max_utterance_phones)
    throw ValidationError("word longer than any utterance (" +
                          std::to_string(word_phones) + " > " +
                          std::to_string(max_utterance_phones) + " phones)");
  if (!(noise_level >= 0.0)) throw ValidationError("negative noise level");
  if (!(word_probability >= 0.0 && word_probability <= 1.0))
    throw ValidationError("word probability must lie in [0,1]");
}

SynthOutput synthesize(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "feats");
  fs::create_directories(fs::path(out_dir) / "queries");

  Rng rng(cfg.seed);

  // phone inventory: Gaussian means on every feature dimension
  Matrix<double> phone_means(cfg.num_phones, cfg.feature_dim, 0.0);
  for (int p = 0; p < cfg.num_phones; ++p)
    for (int d = 0; d < cfg.feature_dim; ++d)
      phone_means(p, d) = cfg.phone_spread * rng.normal();

  // word inventory: distinct phone strings
  std::vector<std::vector<int>> words;
  std::set<std::vector<int>> seen;
  while (static_cast<int>(words.size()) < cfg.num_words) {
    std::vector<int> w(cfg.word_phones);
    for (int i = 0; i < cfg.word_phones; ++i)
      w[i] = static_cast<int>(rng.uniform_int(0, cfg.num_phones - 1));
    if (seen.insert(w).second) words.push_back(std::move(w));
  }

  const auto emit_phone = [&](Rng& r, int phone, std::vector<float>& frames) {
    const int dur =
        static_cast<int>(r.uniform_int(cfg.min_duration, cfg.max_duration));
    for (int t = 0; t < dur; ++t)
      for (int d = 0; d < cfg.feature_dim; ++d)
        frames.push_back(static_cast<float>(phone_means(phone, d) +
                                            cfg.noise_level * r.normal()));
    return dur;
  };

  std::ofstream manifest(fs::path(out_dir) / "corpus.jsonl", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest under " + out_dir);

  RelevanceJudgments judgments;
  std::vector<json> annotation_lines;
  SynthOutput out;

  for (int u = 0; u < cfg.num_utterances; ++u) {
    const std::string utt_id = "utt" + zero_pad(u, 4);
    const int budget = static_cast<int>(
        rng.uniform_int(cfg.min_utterance_phones, cfg.max_utterance_phones));
    std::vector<float> frames;
    int frame_cursor = 0, phones_emitted = 0;
    while (phones_emitted < budget) {
      const bool plant = cfg.num_words > 0 &&
                         budget - phones_emitted >= cfg.word_phones &&
                         rng.uniform() < cfg.word_probability;
      if (plant) {
        const int w = static_cast<int>(rng.uniform_int(0, cfg.num_words - 1));
        const int start = frame_cursor;
        for (int phone : words[w]) frame_cursor += emit_phone(rng, phone, frames);
        phones_emitted += cfg.word_phones;
        annotation_lines.push_back(json{{"utt", utt_id},
                                        {"word", "word" + zero_pad(w, 2)},
                                        {"start", start},
                                        {"end", frame_cursor}});
        judgments.relevant["query_word" + zero_pad(w, 2)].insert(utt_id);
        ++out.num_word_instances;
      } else {
        const int phone = static_cast<int>(rng.uniform_int(0, cfg.num_phones - 1));
        frame_cursor += emit_phone(rng, phone, frames);
        ++phones_emitted;
      }
    }
    FeatureSequence seq;
    seq.utterance_id = utt_id;
    seq.frames = Matrix<float>(frames.size() / cfg.feature_dim, cfg.feature_dim);
    std::copy(frames.begin(), frames.end(), seq.frames.data());
    const std::string rel = "feats/" + utt_id + ".plxf";
    write_features((fs::path(out_dir) / rel).string(), seq);
    manifest << json{{"utt", utt_id}, {"features", rel}}.dump() << '\n';
  }
  for (const auto& line : annotation_lines) manifest << line.dump() << '\n';
  manifest.close();

  // one fresh realization of each word as the spoken query
  std::ofstream queries(fs::path(out_dir) / "queries.jsonl", std::ios::trunc);
  if (!queries) throw IoError("cannot write queries manifest under " + out_dir);
  for (int w = 0; w < cfg.num_words; ++w) {
    Rng qrng(mix_seed(cfg.seed, 0x517ull, static_cast<std::uint64_t>(w)));
    std::vector<float> frames;
    for (int phone : words[w]) emit_phone(qrng, phone, frames);
    const std::string query_id = "query_word" + zero_pad(w, 2);
    FeatureSequence seq;
    seq.utterance_id = query_id;
    seq.frames = Matrix<float>(frames.size() / cfg.feature_dim, cfg.feature_dim);
    std::copy(frames.begin(), frames.end(), seq.frames.data());
    const std::string rel = "queries/" + query_id + ".plxf";
    write_features((fs::path(out_dir) / rel).string(), seq);
    queries << json{{"utt", query_id}, {"features", rel}}.dump() << '\n';
  }
  queries.close();

  // queries with no planted instance would be unjudgeable; drop them
  for (int w = 0; w < cfg.num_words; ++w) {
    const std::string qid = "query_word" + zero_pad(w, 2);
    if (judgments.relevant.count(qid) && judgments.relevant.at(qid).empty())
      judgments.relevant.erase(qid);
  }
  save_judgments((fs::path(out_dir) / "judgments.jsonl").string(), judgments);

  out.manifest_path = (fs::path(out_dir) / "corpus.jsonl").string();
  out.queries_path = (fs::path(out_dir) / "queries.jsonl").string();
  out.judgments_path = (fs::path(out_dir) / "judgments.jsonl").string();
  return out;
}

}  // namespace patlex
