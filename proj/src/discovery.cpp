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

#include "patlex/discovery.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "patlex/relabel.hpp"

namespace patlex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<const FeatureSequence*> kept_utterances(
    const Corpus& corpus, const std::vector<Labeling>& labels) {
  std::unordered_map<std::string, const FeatureSequence*> by_id;
  for (const auto& u : corpus.utterances) by_id[u.utterance_id] = &u;
  std::vector<const FeatureSequence*> kept;
  kept.reserve(labels.size());
  for (const auto& lab : labels) {
    auto it = by_id.find(lab.utterance_id);
    if (it == by_id.end())
      throw ValidationError("labeling references unknown utterance '" +
                            lab.utterance_id + "'");
    kept.push_back(it->second);
  }
  return kept;
}

std::vector<Labeling> decode_all(const std::vector<const FeatureSequence*>& kept,
                                 const PatternSet& set) {
  std::vector<Labeling> decoded(kept.size());
  parallel_for(kept.size(),
               [&](std::size_t i) { decoded[i] = viterbi_decode(*kept[i], set); });
  return decoded;
}

double corpus_loglik(const std::vector<Labeling>& labels) {
  double total = 0.0;
  for (const auto& lab : labels) total += lab.log_likelihood;
  return total;
}

}  // namespace

void DiscoveryConfig::validate() const {
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
  if (em_iters < 1) throw ValidationError("em_iters must be >= 1");
  if (!(change_threshold >= 0.0))
    throw ValidationError("change threshold must be non-negative");
}

double segment_change_ratio(const std::vector<Labeling>& previous,
                            const std::vector<Labeling>& current) {
  std::unordered_map<std::string, std::set<std::tuple<int, int, int>>> prev_segs;
  for (const auto& lab : previous) {
    auto& s = prev_segs[lab.utterance_id];
    for (const auto& seg : lab.segments) s.insert({seg.begin, seg.end, seg.pattern});
  }
  long total = 0, matched = 0;
  for (const auto& lab : current) {
    const auto it = prev_segs.find(lab.utterance_id);
    for (const auto& seg : lab.segments) {
      ++total;
      if (it != prev_segs.end() &&
          it->second.count({seg.begin, seg.end, seg.pattern}))
        ++matched;
    }
  }
  return total == 0 ? 0.0 : 1.0 - static_cast<double>(matched) / total;
}

DiscoverResult discover(const Corpus& corpus, const Granularity& psi,
                        const DiscoveryConfig& cfg) {
  cfg.validate();
  psi.validate();
  DiscoverResult res;
  std::vector<Labeling> prev = init_labels(corpus, psi, cfg.seed, &res.skipped);
  const auto kept = kept_utterances(corpus, prev);

  for (int t = 1; t <= cfg.max_iterations; ++t) {
    res.set = train_models(corpus, prev, psi, cfg.em_iters,
                           t == 1 ? nullptr : &res.set);
    std::vector<Labeling> decoded = decode_all(kept, res.set);
    IterationRecord rec;
    rec.loglik = corpus_loglik(decoded);
    rec.change_ratio = segment_change_ratio(prev, decoded);
    res.history.push_back(rec);
    prev = std::move(decoded);
    if (rec.change_ratio < cfg.change_threshold) break;
  }
  res.labels = std::move(prev);
  return res;
}

void enhance_step(GridModels& models, const Corpus& corpus,
                  const DiscoveryConfig& cfg) {
  cfg.validate();
  if (models.labels.relabeled)
    throw ValidationError("enhance_step expects raw decoded labels");

  const RelabelResult relabeled = relabel_pass(models.labels, models.grid);

  GridLabeling next;
  next.relabeled = false;
  for (auto& [point, set] : models.sets) {
    const Granularity psi = models.grid.granularity_at(point);
    const auto& bar_labels = relabeled.labels.labels.at(point);
    set = train_models(corpus, bar_labels, psi, cfg.em_iters, &set);

    const auto& prev_labels = models.labels.labels.at(point);
    const auto kept = kept_utterances(corpus, prev_labels);
    std::vector<Labeling> decoded = decode_all(kept, set);

    IterationRecord rec;
    rec.loglik = corpus_loglik(decoded);
    rec.change_ratio = segment_change_ratio(prev_labels, decoded);
    rec.relabel_changes = relabeled.changes.at(point);
    models.history[point].push_back(rec);
    next.labels.emplace(point, std::move(decoded));
  }
  models.labels = std::move(next);
}

GridModels discover_grid(const Corpus& corpus, const GranularityGrid& grid,
                         const DiscoveryConfig& cfg) {
  grid.validate();
  cfg.validate();
  GridModels gm;
  gm.grid = grid;

  if (!cfg.relabel_enabled) {
    for (const GridPoint& point : grid.points()) {
      DiscoveryConfig point_cfg = cfg;
      point_cfg.seed = mix_seed(cfg.seed, point.states_per_pattern, point.num_patterns);
      try {
        DiscoverResult res = discover(corpus, grid.granularity_at(point), point_cfg);
        gm.sets.emplace(point, std::move(res.set));
        gm.labels.labels.emplace(point, std::move(res.labels));
        gm.history.emplace(point, std::move(res.history));
        gm.skipped.emplace(point, std::move(res.skipped));
      } catch (const std::exception& e) {
        gm.errors[point] = e.what();
      }
    }
    return gm;
  }

  // Enhanced loop: shared first iteration, then relabel / re-train /
  // re-decode rounds over the whole grid.
  for (const GridPoint& point : grid.points()) {
    const Granularity psi = grid.granularity_at(point);
    const std::uint64_t seed =
        mix_seed(cfg.seed, point.states_per_pattern, point.num_patterns);
    try {
      std::vector<std::string> skipped;
      std::vector<Labeling> init = init_labels(corpus, psi, seed, &skipped);
      const auto kept = kept_utterances(corpus, init);
      PatternSet set = train_models(corpus, init, psi, cfg.em_iters, nullptr);
      std::vector<Labeling> decoded = decode_all(kept, set);
      IterationRecord rec;
      rec.loglik = corpus_loglik(decoded);
      rec.change_ratio = segment_change_ratio(init, decoded);
      gm.history[point].push_back(rec);
      gm.sets.emplace(point, std::move(set));
      gm.labels.labels.emplace(point, std::move(decoded));
      gm.skipped.emplace(point, std::move(skipped));
    } catch (const std::exception& e) {
      gm.errors[point] = e.what();
    }
  }

  for (int t = 2; t <= cfg.max_iterations; ++t) {
    bool any_moving = false;
    for (const auto& [point, hist] : gm.history)
      if (!hist.empty() && hist.back().change_ratio >= cfg.change_threshold)
        any_moving = true;
    if (!any_moving || gm.sets.empty()) break;
    enhance_step(gm, corpus, cfg);
  }
  return gm;
}

void save_run(const std::string& dir, const GridModels& models) {
  fs::create_directories(dir);
  for (const auto& [point, set] : models.sets) {
    const fs::path sub = fs::path(dir) / point_name(point);
    fs::create_directories(sub);
    save_pattern_set((sub / "model.plxm").string(), set);
    save_labels((sub / "labels.jsonl").string(), models.labels.labels.at(point),
                models.labels.relabeled);
  }

  json points = json::object();
  for (const auto& [point, hist] : models.history) {
    json logliks = json::array(), ratios = json::array(), relabels = json::array();
    for (const auto& rec : hist) {
      logliks.push_back(rec.loglik);
      ratios.push_back(rec.change_ratio);
      relabels.push_back(rec.relabel_changes);
    }
    json entry{{"loglik", logliks},
               {"change_ratio", ratios},
               {"relabel_changes", relabels}};
    const auto skipped = models.skipped.find(point);
    if (skipped != models.skipped.end() && !skipped->second.empty())
      entry["skipped"] = skipped->second;
    points[point_name(point)] = std::move(entry);
  }
  for (const auto& [point, err] : models.errors)
    points[point_name(point)] = json{{"error", err}};

  const json doc{{"grid",
                  {{"temporal", models.grid.temporal_values},
                   {"phonetic", models.grid.phonetic_values},
                   {"gaussians", models.grid.gaussians_per_state}}},
                 {"points", points}};
  std::ofstream out(fs::path(dir) / "history.json", std::ios::trunc);
  if (!out) throw IoError("cannot write history.json under " + dir);
  out << doc.dump(2) << '\n';
}

GridModels load_run(const std::string& dir) {
  const fs::path hist_path = fs::path(dir) / "history.json";
  std::ifstream in(hist_path);
  if (!in) throw IoError("cannot open " + hist_path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("bad history.json in " + dir + ": " + e.what());
  }

  GridModels gm;
  gm.grid.temporal_values = doc.at("grid").at("temporal").get<std::vector<int>>();
  gm.grid.phonetic_values = doc.at("grid").at("phonetic").get<std::vector<int>>();
  gm.grid.gaussians_per_state = doc.at("grid").at("gaussians").get<int>();
  gm.grid.validate();

  for (const GridPoint& point : gm.grid.points()) {
    const json& entry = doc.at("points").at(point_name(point));
    if (entry.contains("error")) {
      gm.errors[point] = entry.at("error").get<std::string>();
      continue;
    }
    std::vector<IterationRecord> hist;
    const auto& lls = entry.at("loglik");
    const auto& ratios = entry.at("change_ratio");
    const auto& relabels = entry.at("relabel_changes");
    for (std::size_t i = 0; i < lls.size(); ++i) {
      IterationRecord rec;
      rec.loglik = lls[i].get<double>();
      rec.change_ratio = ratios[i].get<double>();
      rec.relabel_changes = relabels[i].get<long>();
      hist.push_back(rec);
    }
    gm.history.emplace(point, std::move(hist));
    if (entry.contains("skipped"))
      gm.skipped[point] = entry.at("skipped").get<std::vector<std::string>>();

    const fs::path sub = fs::path(dir) / point_name(point);
    gm.sets.emplace(point, load_pattern_set((sub / "model.plxm").string()));
    gm.labels.labels.emplace(point, load_labels((sub / "labels.jsonl").string()));
  }
  return gm;
}

}  // namespace patlex
