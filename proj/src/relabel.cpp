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

#include "patlex/relabel.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace patlex {

namespace {

// Per-point index from utterance id to that point's labeling.
using LabelIndex = std::unordered_map<std::string, const Labeling*>;

std::map<GridPoint, LabelIndex> index_labels(const GridLabeling& grid_labels) {
  std::map<GridPoint, LabelIndex> out;
  for (const auto& [point, labs] : grid_labels.labels) {
    LabelIndex idx;
    for (const auto& lab : labs) idx[lab.utterance_id] = &lab;
    out.emplace(point, std::move(idx));
  }
  return out;
}

const Labeling* neighbor_labeling(const std::map<GridPoint, LabelIndex>& index,
                                  const std::optional<GridPoint>& neighbor,
                                  const std::string& utterance_id) {
  if (!neighbor) return nullptr;
  auto pit = index.find(*neighbor);
  if (pit == index.end()) return nullptr;
  auto uit = pit->second.find(utterance_id);
  return uit == pit->second.end() ? nullptr : uit->second;
}

ContextTriple gather_context_indexed(const std::map<GridPoint, LabelIndex>& index,
                                     const GranularityGrid& grid,
                                     const GridPoint& point, const Labeling& lab,
                                     int position) {
  const int K = lab.num_segments();
  if (position < 0 || position >= K)
    throw ValidationError("position " + std::to_string(position) +
                          " out of range for '" + lab.utterance_id + "'");
  ContextTriple ctx;
  if (position > 0) ctx.time_prev = lab.segments[position - 1].pattern;
  if (position + 1 < K) ctx.time_next = lab.segments[position + 1].pattern;

  const auto lookup = [&](const std::optional<GridPoint>& nbr) {
    const Labeling* nlab = neighbor_labeling(index, nbr, lab.utterance_id);
    return nlab ? align_context(lab, *nlab, position) : kBoundaryContext;
  };
  ctx.phon_lower = lookup(grid.phonetic_neighbor(point, -1));
  ctx.phon_upper = lookup(grid.phonetic_neighbor(point, +1));
  ctx.temp_lower = lookup(grid.temporal_neighbor(point, -1));
  ctx.temp_upper = lookup(grid.temporal_neighbor(point, +1));
  return ctx;
}

int argmax_product(const BigramModel& model, const ContextTriple& ctx) {
  const int n = model.vocab;
  int best_w = 0;
  double best = kNegInf;
  for (int w = 0; w < n; ++w) {
    double score = 0.0;  // boundary factors contribute log 1
    score += std::log(katz_prob(model, BigramTable::kTimeForward, w, ctx.time_prev));
    score += std::log(katz_prob(model, BigramTable::kTimeBackward, w, ctx.time_next));
    score += std::log(katz_prob(model, BigramTable::kPhoneticLower, w, ctx.phon_lower));
    score += std::log(katz_prob(model, BigramTable::kPhoneticUpper, w, ctx.phon_upper));
    score += std::log(katz_prob(model, BigramTable::kTemporalLower, w, ctx.temp_lower));
    score += std::log(katz_prob(model, BigramTable::kTemporalUpper, w, ctx.temp_upper));
    if (score > best) {
      best = score;
      best_w = w;
    }
  }
  return best_w;
}

}  // namespace

void GranularityGrid::validate() const {
  if (temporal_values.empty() || phonetic_values.empty())
    throw ValidationError("granularity grid axes must be non-empty");
  for (std::size_t i = 1; i < temporal_values.size(); ++i)
    if (temporal_values[i] <= temporal_values[i - 1])
      throw ValidationError("temporal grid values must be strictly increasing");
  for (std::size_t i = 1; i < phonetic_values.size(); ++i)
    if (phonetic_values[i] <= phonetic_values[i - 1])
      throw ValidationError("phonetic grid values must be strictly increasing");
  for (const GridPoint& p : points()) granularity_at(p).validate();
}

std::vector<GridPoint> GranularityGrid::points() const {
  std::vector<GridPoint> out;
  out.reserve(temporal_values.size() * phonetic_values.size());
  for (int m : temporal_values)
    for (int n : phonetic_values) out.push_back({m, n});
  return out;
}

std::optional<GridPoint> GranularityGrid::phonetic_neighbor(const GridPoint& p,
                                                            int direction) const {
  for (std::size_t j = 0; j < phonetic_values.size(); ++j) {
    if (phonetic_values[j] == p.num_patterns) {
      const std::int64_t k = static_cast<std::int64_t>(j) + direction;
      if (k < 0 || k >= static_cast<std::int64_t>(phonetic_values.size()))
        return std::nullopt;
      return GridPoint{p.states_per_pattern, phonetic_values[k]};
    }
  }
  return std::nullopt;
}

std::optional<GridPoint> GranularityGrid::temporal_neighbor(const GridPoint& p,
                                                            int direction) const {
  for (std::size_t i = 0; i < temporal_values.size(); ++i) {
    if (temporal_values[i] == p.states_per_pattern) {
      const std::int64_t k = static_cast<std::int64_t>(i) + direction;
      if (k < 0 || k >= static_cast<std::int64_t>(temporal_values.size()))
        return std::nullopt;
      return GridPoint{temporal_values[k], p.num_patterns};
    }
  }
  return std::nullopt;
}

const Segment& GridLabeling::segment(const GridPoint& p, std::size_t utt_index,
                                     int position) const {
  const auto* labs = find(p);
  if (!labs || utt_index >= labs->size())
    throw ValidationError("grid labeling missing point " + point_name(p) +
                          " utterance " + std::to_string(utt_index));
  const auto& lab = (*labs)[utt_index];
  if (position < 0 || position >= lab.num_segments())
    throw ValidationError("position out of range in grid labeling");
  return lab.segments[position];
}

void GridLabeling::validate_complete(const GranularityGrid& grid) const {
  for (const GridPoint& p : grid.points())
    if (labels.find(p) == labels.end())
      throw ValidationError("grid labeling missing point " + point_name(p));
}

int align_context(const Labeling& labeling_self, const Labeling& labeling_neighbor,
                  int position) {
  if (position < 0 || position >= labeling_self.num_segments())
    throw ValidationError("align_context position out of range");
  const Segment& seg = labeling_self.segments[position];
  const int central = (seg.begin + seg.end) / 2;
  const int idx = labeling_neighbor.segment_at_frame(central);
  return labeling_neighbor.segments[idx].pattern;
}

KatzTable build_katz_table(const Matrix<std::uint32_t>& counts,
                           const std::vector<double>& unigram, int cutoff,
                           double absolute_discount) {
  const int C = static_cast<int>(counts.rows());
  const int V = static_cast<int>(counts.cols());
  if (static_cast<int>(unigram.size()) != V)
    throw ValidationError("unigram size does not match vocabulary");

  // pooled count-of-counts for the Good-Turing discounts
  std::vector<double> n_r(cutoff + 2, 0.0);
  for (int c = 0; c < C; ++c) {
    for (int w = 0; w < V; ++w) {
      const std::uint32_t r = counts(c, w);
      if (r >= 1 && r <= static_cast<std::uint32_t>(cutoff + 1))
        n_r[r] += 1.0;
    }
  }
  std::vector<double> discount(cutoff + 1, 1.0);
  bool gt_valid = n_r[1] > 0.0;
  const double reserved =
      gt_valid ? (cutoff + 1) * n_r[cutoff + 1] / n_r[1] : 1.0;
  if (!(reserved < 1.0)) gt_valid = false;
  if (gt_valid) {
    for (int r = 1; r <= cutoff; ++r) {
      if (n_r[r] <= 0.0) {
        gt_valid = false;
        break;
      }
      const double r_star = (r + 1) * n_r[r + 1] / n_r[r];
      const double d = (r_star / r - reserved) / (1.0 - reserved);
      if (!(d > 0.0) || d > 1.0) {
        gt_valid = false;
        break;
      }
      discount[r] = d;
    }
  }

  KatzTable table;
  table.context_size = C;
  table.vocab = V;
  table.prob = Matrix<double>(C, V, 0.0);

  for (int c = 0; c < C; ++c) {
    double total = 0.0;
    int seen = 0;
    for (int w = 0; w < V; ++w) {
      total += counts(c, w);
      if (counts(c, w) > 0) ++seen;
    }
    double* row = table.prob.row(c);
    if (total == 0.0) {
      // context never observed: back off entirely to the unigram
      for (int w = 0; w < V; ++w) row[w] = unigram[w];
      continue;
    }
    if (seen == V) {
      // nothing unseen, no mass to reserve
      for (int w = 0; w < V; ++w) row[w] = counts(c, w) / total;
      continue;
    }
    const auto discounted = [&](std::uint32_t r, bool use_gt) {
      if (!use_gt) return (r - absolute_discount) / total;
      return r <= static_cast<std::uint32_t>(cutoff) ? discount[r] * r / total
                                                     : r / total;
    };
    bool use_gt = gt_valid;
    double leftover = 1.0;
    for (int w = 0; w < V; ++w)
      if (counts(c, w) > 0) leftover -= discounted(counts(c, w), use_gt);
    if (!(leftover > 0.0)) {
      // all seen counts above the cutoff: GT frees no mass, so fall back
      use_gt = false;
      leftover = 1.0;
      for (int w = 0; w < V; ++w)
        if (counts(c, w) > 0) leftover -= discounted(counts(c, w), use_gt);
    }
    double unseen_mass = 0.0;
    for (int w = 0; w < V; ++w)
      if (counts(c, w) == 0) unseen_mass += unigram[w];
    for (int w = 0; w < V; ++w) {
      row[w] = counts(c, w) > 0 ? discounted(counts(c, w), use_gt)
                                : leftover * unigram[w] / unseen_mass;
    }
  }
  return table;
}

double katz_prob(const BigramModel& model, BigramTable table, int w, int context) {
  if (w < 0 || w >= model.vocab)
    throw ValidationError("katz_prob: pattern index " + std::to_string(w) +
                          " out of vocabulary " + std::to_string(model.vocab));
  const int t = static_cast<int>(table);
  if (t < 0 || t >= kNumBigramTables)
    throw ValidationError("katz_prob: unknown table id");
  if (context == kBoundaryContext || !model.tables[t]) return 1.0;
  const KatzTable& kt = *model.tables[t];
  if (context < 0 || context >= kt.context_size)
    throw ValidationError("katz_prob: context index out of range");
  return kt(w, context);
}

ContextTriple gather_context(const GridLabeling& grid_labels,
                             const GranularityGrid& grid, const GridPoint& point,
                             std::size_t utt_index, int position) {
  const auto* labs = grid_labels.find(point);
  if (!labs || utt_index >= labs->size())
    throw ValidationError("gather_context: missing labeling for point " +
                          point_name(point));
  const auto index = index_labels(grid_labels);
  return gather_context_indexed(index, grid, point, (*labs)[utt_index], position);
}

std::map<GridPoint, BigramModel> estimate_bigrams(const GridLabeling& grid_labels,
                                                  const GranularityGrid& grid) {
  grid.validate();
  const auto index = index_labels(grid_labels);

  std::map<GridPoint, BigramModel> out;
  for (const GridPoint& point : grid.points()) {
    const auto* labs_ptr = grid_labels.find(point);
    if (!labs_ptr) continue;  // failed grid points are simply absent
    const auto& labs = *labs_ptr;
    const int n = point.num_patterns;

    BigramModel model;
    model.point = point;
    model.vocab = n;

    // add-one smoothed unigram over this point's own sequences
    std::vector<double> uni_counts(n, 0.0);
    double uni_total = 0.0;
    for (const auto& lab : labs) {
      for (const auto& seg : lab.segments) {
        if (seg.pattern >= n)
          throw ValidationError("label pattern " + std::to_string(seg.pattern) +
                                " exceeds vocabulary " + std::to_string(n) +
                                " at point " + point_name(point));
        uni_counts[seg.pattern] += 1.0;
        uni_total += 1.0;
      }
    }
    model.unigram.resize(n);
    for (int w = 0; w < n; ++w)
      model.unigram[w] = (uni_counts[w] + 1.0) / (uni_total + n);

    {
      Matrix<std::uint32_t> fwd(n, n, 0), bwd(n, n, 0);
      for (const auto& lab : labs) {
        for (int l = 1; l < lab.num_segments(); ++l) {
          fwd(lab.segments[l - 1].pattern, lab.segments[l].pattern) += 1;
          bwd(lab.segments[l].pattern, lab.segments[l - 1].pattern) += 1;
        }
      }
      model.tables[static_cast<int>(BigramTable::kTimeForward)] =
          build_katz_table(fwd, model.unigram);
      model.tables[static_cast<int>(BigramTable::kTimeBackward)] =
          build_katz_table(bwd, model.unigram);
    }

    const auto cross_table = [&](const std::optional<GridPoint>& neighbor)
        -> std::optional<KatzTable> {
      if (!neighbor || !grid_labels.find(*neighbor)) return std::nullopt;
      Matrix<std::uint32_t> counts(neighbor->num_patterns, n, 0);
      for (const auto& lab : labs) {
        const Labeling* nlab = neighbor_labeling(index, neighbor, lab.utterance_id);
        if (!nlab) continue;
        for (int l = 0; l < lab.num_segments(); ++l)
          counts(align_context(lab, *nlab, l), lab.segments[l].pattern) += 1;
      }
      return build_katz_table(counts, model.unigram);
    };
    model.tables[static_cast<int>(BigramTable::kPhoneticLower)] =
        cross_table(grid.phonetic_neighbor(point, -1));
    model.tables[static_cast<int>(BigramTable::kPhoneticUpper)] =
        cross_table(grid.phonetic_neighbor(point, +1));
    model.tables[static_cast<int>(BigramTable::kTemporalLower)] =
        cross_table(grid.temporal_neighbor(point, -1));
    model.tables[static_cast<int>(BigramTable::kTemporalUpper)] =
        cross_table(grid.temporal_neighbor(point, +1));

    out.emplace(point, std::move(model));
  }
  return out;
}

int relabel_position(const GridLabeling& grid_labels,
                     const std::map<GridPoint, BigramModel>& bigrams,
                     const GranularityGrid& grid, const GridPoint& point,
                     std::size_t utt_index, int position) {
  const ContextTriple ctx = gather_context(grid_labels, grid, point, utt_index, position);
  return argmax_product(bigrams.at(point), ctx);
}

long RelabelResult::total_changes() const {
  long total = 0;
  for (const auto& [point, c] : changes) total += c;
  return total;
}

RelabelResult relabel_pass(const GridLabeling& grid_labels,
                           const GranularityGrid& grid) {
  if (grid_labels.relabeled)
    throw ValidationError("relabel_pass input must be raw decoded labels");
  const auto bigrams = estimate_bigrams(grid_labels, grid);
  const auto index = index_labels(grid_labels);

  RelabelResult result;
  result.labels.relabeled = true;
  for (const auto& [point, labs] : grid_labels.labels) {
    const BigramModel& model = bigrams.at(point);
    std::vector<Labeling> out(labs.size());
    std::vector<long> changed(labs.size(), 0);
    parallel_for(labs.size(), [&](std::size_t u) {
      Labeling lab = labs[u];
      for (int l = 0; l < lab.num_segments(); ++l) {
        const ContextTriple ctx =
            gather_context_indexed(index, grid, point, labs[u], l);
        const int w = argmax_product(model, ctx);
        if (w != lab.segments[l].pattern) ++changed[u];
        lab.segments[l].pattern = w;
      }
      out[u] = std::move(lab);
    });
    long total = 0;
    for (long c : changed) total += c;
    result.labels.labels.emplace(point, std::move(out));
    result.changes[point] = total;
  }
  return result;
}

void dump_bigrams(const std::string& path, const BigramModel& model) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write bigram dump: " + path);
  static const char* kNames[kNumBigramTables] = {
      "time_forward",    "time_backward",  "phonetic_lower",
      "phonetic_upper",  "temporal_lower", "temporal_upper"};
  for (int t = 0; t < kNumBigramTables; ++t) {
    if (!model.tables[t]) continue;
    const KatzTable& kt = *model.tables[t];
    for (int c = 0; c < kt.context_size; ++c) {
      for (int w = 0; w < kt.vocab; ++w) {
        nlohmann::json rec{
            {"table", kNames[t]}, {"context", c}, {"w", w}, {"prob", kt(w, c)}};
        out << rec.dump() << '\n';
      }
    }
  }
}

}  // namespace patlex
