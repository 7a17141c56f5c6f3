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

#include "patlex/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace patlex {

using nlohmann::json;

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

void RelevanceJudgments::validate() const {
  for (const auto& [query, docs] : relevant)
    if (docs.empty())
      throw ValidationError("judgments for query '" + query + "' are empty");
}

double gini_impurity(const std::vector<double>& fractions) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ValidationError("negative fraction in gini_impurity");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("fractions must sum to 1 (got " + std::to_string(sum) + ")");
  double impurity = 0.0;
  for (double f : fractions) impurity += f * (1.0 - f);
  return impurity;
}

ImpurityReport word_impurity(const std::vector<Labeling>& labels,
                             const std::vector<WordAnnotation>& annotations,
                             const std::string& word) {
  std::unordered_map<std::string, const Labeling*> by_id;
  for (const auto& lab : labels) by_id[lab.utterance_id] = &lab;

  const std::string target = lowercase(word);
  std::map<std::vector<int>, int> groups;
  int realizations = 0;
  for (const auto& ann : annotations) {
    if (lowercase(ann.word) != target) continue;
    auto it = by_id.find(ann.utterance_id);
    if (it == by_id.end()) continue;  // utterance not decoded (e.g. skipped)
    const Labeling& lab = *it->second;
    std::vector<int> seq;
    for (const auto& seg : lab.segments) {
      const int central = (seg.begin + seg.end) / 2;
      if (central >= ann.start_frame && central < ann.end_frame)
        seq.push_back(seg.pattern);
    }
    ++realizations;
    ++groups[seq];
  }
  if (realizations == 0)
    throw ValidationError("no realizations found for word '" + word + "'");

  ImpurityReport report;
  report.word = word;
  report.realizations = realizations;
  report.distinct_sequences = static_cast<int>(groups.size());
  for (const auto& [seq, count] : groups)
    report.fractions.push_back(static_cast<double>(count) / realizations);
  report.impurity = gini_impurity(report.fractions);
  return report;
}

double average_precision(const std::vector<std::string>& ranked,
                         const std::set<std::string>& relevant) {
  if (relevant.empty()) throw ValidationError("relevant set must be non-empty");
  if (ranked.empty()) throw ValidationError("ranking must be non-empty");
  double acc = 0.0;
  int hits = 0;
  for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
    if (relevant.count(ranked[rank])) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return acc / static_cast<double>(relevant.size());
}

double mean_average_precision(
    const std::map<std::string, std::vector<std::string>>& runs,
    const RelevanceJudgments& judgments) {
  judgments.validate();
  if (judgments.relevant.empty())
    throw ValidationError("no judged queries");
  double acc = 0.0;
  for (const auto& [query, relevant] : judgments.relevant) {
    auto it = runs.find(query);
    if (it == runs.end())
      throw ValidationError("no ranked list for judged query '" + query + "'");
    acc += average_precision(it->second, relevant);
  }
  return acc / static_cast<double>(judgments.relevant.size());
}

RelevanceJudgments load_judgments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open judgments file: " + path);
  RelevanceJudgments out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("bad judgments line in " + path + ": " + e.what());
    }
    auto& docs = out.relevant[rec.at("query").get<std::string>()];
    for (const auto& d : rec.at("relevant")) docs.insert(d.get<std::string>());
  }
  return out;
}

void save_judgments(const std::string& path, const RelevanceJudgments& judgments) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write judgments file: " + path);
  for (const auto& [query, docs] : judgments.relevant) {
    json rec{{"query", query}, {"relevant", docs}};
    out << rec.dump() << '\n';
  }
}

}  // namespace patlex
