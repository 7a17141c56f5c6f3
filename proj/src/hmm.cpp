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

#include "patlex/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace patlex {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kSelfLoopMin = 1e-4;
constexpr double kSelfLoopMax = 1.0 - 1e-4;
constexpr double kWeightFloor = 1e-8;
constexpr char kModelMagic[4] = {'P', 'L', 'X', 'M'};
constexpr std::uint32_t kModelVersion = 1;

double clamp_self_loop(double a) {
  return std::min(kSelfLoopMax, std::max(kSelfLoopMin, a));
}

// Per-dimension corpus variance, used for the variance floor
// (1e-3 * global variance, with a tiny absolute floor for degenerate data).
std::vector<double> variance_floor(const Corpus& corpus) {
  const int dim = corpus.utterances.empty() ? 0 : corpus.utterances[0].dim();
  std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
  double count = 0.0;
  for (const auto& u : corpus.utterances) {
    for (int t = 0; t < u.num_frames(); ++t) {
      const float* x = u.frames.row(t);
      for (int d = 0; d < dim; ++d) {
        sum[d] += x[d];
        sumsq[d] += static_cast<double>(x[d]) * x[d];
      }
    }
    count += u.num_frames();
  }
  std::vector<double> floor(dim, 1e-10);
  if (count > 0) {
    for (int d = 0; d < dim; ++d) {
      const double mean = sum[d] / count;
      const double var = sumsq[d] / count - mean * mean;
      floor[d] = std::max(1e-3 * var, 1e-10);
    }
  }
  return floor;
}

// Flattened emission parameters for the decoding inner loop.
struct EmissionModel {
  int num_patterns, num_states, num_comps, dim;
  std::vector<double> gconst;   // [p][s][g]: log w - 0.5*sum(log 2*pi*var)
  std::vector<double> inv2var;  // [p][s][g][d]: 0.5 / var
  std::vector<double> mean;     // [p][s][g][d]

  explicit EmissionModel(const PatternSet& set)
      : num_patterns(set.granularity.num_patterns),
        num_states(set.granularity.states_per_pattern),
        num_comps(static_cast<int>(set.patterns[0].states[0].size())),
        dim(set.feature_dim) {
    const std::size_t psg =
        static_cast<std::size_t>(num_patterns) * num_states * num_comps;
    gconst.resize(psg);
    inv2var.resize(psg * dim);
    mean.resize(psg * dim);
    for (int p = 0; p < num_patterns; ++p) {
      for (int s = 0; s < num_states; ++s) {
        const auto& mix = set.patterns[p].states[s];
        for (int g = 0; g < num_comps; ++g) {
          const std::size_t idx =
              (static_cast<std::size_t>(p) * num_states + s) * num_comps + g;
          double c = std::log(mix[g].weight);
          for (int d = 0; d < dim; ++d) {
            c -= 0.5 * (kLog2Pi + std::log(mix[g].var[d]));
            inv2var[idx * dim + d] = 0.5 / mix[g].var[d];
            mean[idx * dim + d] = mix[g].mean[d];
          }
          gconst[idx] = c;
        }
      }
    }
  }

  // Fills out[p*num_states + s] with the state log-densities for one frame.
  void frame_log_density(const float* x, double* out) const {
    const int S = num_patterns * num_states;
    for (int ps = 0; ps < S; ++ps) {
      double best = kNegInf, acc = 0.0;
      const std::size_t base = static_cast<std::size_t>(ps) * num_comps;
      double comp[64];
      for (int g = 0; g < num_comps; ++g) {
        const std::size_t idx = base + g;
        const double* mu = &mean[idx * dim];
        const double* iv = &inv2var[idx * dim];
        double q = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double diff = x[d] - mu[d];
          q += diff * diff * iv[d];
        }
        comp[g] = gconst[idx] - q;
        if (comp[g] > best) best = comp[g];
      }
      for (int g = 0; g < num_comps; ++g) acc += std::exp(comp[g] - best);
      out[ps] = best + std::log(acc);
    }
  }
};

struct SegmentRef {
  const FeatureSequence* utt;
  int begin, end;
};

// Forward pass over one segment, strict left-to-right. Returns the segment
// log-likelihood including the exit step from the last state. alpha may be
// null when only the score is needed.
double segment_forward(const PatternHMM& hmm, const float* frames, int dim,
                       int len, Matrix<double>* alpha_out) {
  const int m = hmm.num_states();
  Matrix<double> local;
  Matrix<double>& alpha = alpha_out ? *alpha_out : local;
  alpha = Matrix<double>(len, m, kNegInf);
  std::vector<double> log_stay(m), log_adv(m);
  for (int s = 0; s < m; ++s) {
    log_stay[s] = std::log(hmm.self_loop[s]);
    log_adv[s] = std::log(1.0 - hmm.self_loop[s]);
  }
  alpha(0, 0) = mixture_log_density(hmm.states[0], frames, dim);
  for (int t = 1; t < len; ++t) {
    const float* x = frames + static_cast<std::size_t>(t) * dim;
    const int s_lo = std::max(0, m - (len - t));
    const int s_hi = std::min(m - 1, t);
    for (int s = s_lo; s <= s_hi; ++s) {
      double acc = alpha(t - 1, s) + log_stay[s];
      if (s > 0) acc = log_add(acc, alpha(t - 1, s - 1) + log_adv[s - 1]);
      alpha(t, s) =
          acc + mixture_log_density(hmm.states[s], x, dim);
    }
  }
  return alpha(len - 1, m - 1) + log_adv[m - 1];
}

// Accumulators for one pattern's EM update.
struct PatternAccum {
  Matrix<double> occ;           // [s][g]
  std::vector<Matrix<double>> sum;    // per state: [g][d]
  std::vector<Matrix<double>> sumsq;  // per state: [g][d]
  std::vector<double> stay, advance;

  PatternAccum(int m, int G, int dim)
      : occ(m, G, 0.0), stay(m, 0.0), advance(m, 0.0) {
    sum.assign(m, Matrix<double>(G, dim, 0.0));
    sumsq.assign(m, Matrix<double>(G, dim, 0.0));
  }
};

// One EM iteration (E over all segments + M in place). Returns the
// assigned-data log-likelihood of the model *before* the update.
double em_iteration(PatternHMM& hmm, const std::vector<SegmentRef>& segments,
                    int dim, const std::vector<double>& var_floor) {
  const int m = hmm.num_states();
  const int G = static_cast<int>(hmm.states[0].size());
  PatternAccum acc(m, G, dim);
  double total_ll = 0.0;

  std::vector<double> log_stay(m), log_adv(m);
  for (int s = 0; s < m; ++s) {
    log_stay[s] = std::log(hmm.self_loop[s]);
    log_adv[s] = std::log(1.0 - hmm.self_loop[s]);
  }

  for (const auto& seg : segments) {
    const int len = seg.end - seg.begin;
    const float* frames = seg.utt->frames.row(seg.begin);

    // component log-densities and state emissions for this segment
    Matrix<double> comp_ld(len, m * G);
    Matrix<double> emis(len, m);
    for (int t = 0; t < len; ++t) {
      const float* x = frames + static_cast<std::size_t>(t) * dim;
      for (int s = 0; s < m; ++s) {
        double best = kNegInf;
        for (int g = 0; g < G; ++g) {
          const double ld = std::log(hmm.states[s][g].weight) +
                            hmm.states[s][g].log_density(x, dim);
          comp_ld(t, s * G + g) = ld;
          if (ld > best) best = ld;
        }
        double e = 0.0;
        for (int g = 0; g < G; ++g) e += std::exp(comp_ld(t, s * G + g) - best);
        emis(t, s) = best + std::log(e);
      }
    }

    Matrix<double> alpha(len, m, kNegInf), beta(len, m, kNegInf);
    alpha(0, 0) = emis(0, 0);
    for (int t = 1; t < len; ++t) {
      const int s_lo = std::max(0, m - (len - t));
      const int s_hi = std::min(m - 1, t);
      for (int s = s_lo; s <= s_hi; ++s) {
        double a = alpha(t - 1, s) + log_stay[s];
        if (s > 0) a = log_add(a, alpha(t - 1, s - 1) + log_adv[s - 1]);
        alpha(t, s) = a + emis(t, s);
      }
    }
    const double seg_ll = alpha(len - 1, m - 1) + log_adv[m - 1];
    total_ll += seg_ll;

    beta(len - 1, m - 1) = log_adv[m - 1];
    for (int t = len - 2; t >= 0; --t) {
      for (int s = std::min(m - 1, t); s >= 0; --s) {
        double b = log_stay[s] + emis(t + 1, s) + beta(t + 1, s);
        if (s + 1 < m)
          b = log_add(b, log_adv[s] + emis(t + 1, s + 1) + beta(t + 1, s + 1));
        beta(t, s) = b;
      }
    }

    for (int t = 0; t < len; ++t) {
      const float* x = frames + static_cast<std::size_t>(t) * dim;
      for (int s = 0; s < m; ++s) {
        const double g_state = std::exp(alpha(t, s) + beta(t, s) - seg_ll);
        if (g_state <= 0.0) continue;
        for (int g = 0; g < G; ++g) {
          const double post =
              g_state * std::exp(comp_ld(t, s * G + g) - emis(t, s));
          if (post <= 0.0) continue;
          acc.occ(s, g) += post;
          double* su = acc.sum[s].row(g);
          double* sq = acc.sumsq[s].row(g);
          for (int d = 0; d < dim; ++d) {
            su[d] += post * x[d];
            sq[d] += post * static_cast<double>(x[d]) * x[d];
          }
        }
      }
    }
    for (int t = 0; t + 1 < len; ++t) {
      for (int s = 0; s < m; ++s) {
        if (alpha(t, s) == kNegInf) continue;
        acc.stay[s] += std::exp(alpha(t, s) + log_stay[s] + emis(t + 1, s) +
                                beta(t + 1, s) - seg_ll);
        if (s + 1 < m)
          acc.advance[s] += std::exp(alpha(t, s) + log_adv[s] + emis(t + 1, s + 1) +
                                     beta(t + 1, s + 1) - seg_ll);
      }
    }
    acc.advance[m - 1] += 1.0;  // forced exit at the segment boundary
  }

  // M step
  for (int s = 0; s < m; ++s) {
    double tot = 0.0;
    for (int g = 0; g < G; ++g) tot += acc.occ(s, g);
    if (tot <= 0.0) continue;
    double wsum = 0.0;
    std::vector<double> w(G);
    for (int g = 0; g < G; ++g) {
      w[g] = std::max(acc.occ(s, g) / tot, kWeightFloor);
      wsum += w[g];
    }
    for (int g = 0; g < G; ++g) {
      auto& comp = hmm.states[s][g];
      comp.weight = w[g] / wsum;
      const double c = acc.occ(s, g);
      if (c <= kWeightFloor) continue;  // keep stale parameters for dead comps
      const double* su = acc.sum[s].row(g);
      const double* sq = acc.sumsq[s].row(g);
      for (int d = 0; d < dim; ++d) {
        const double mean = su[d] / c;
        comp.mean[d] = mean;
        comp.var[d] = std::max(sq[d] / c - mean * mean, var_floor[d]);
      }
    }
    const double trans = acc.stay[s] + acc.advance[s];
    if (trans > 0.0) hmm.self_loop[s] = clamp_self_loop(acc.stay[s] / trans);
  }
  return total_ll;
}

double assigned_loglik(const PatternHMM& hmm,
                       const std::vector<SegmentRef>& segments, int dim) {
  double total = 0.0;
  for (const auto& seg : segments)
    total += segment_forward(hmm, seg.utt->frames.row(seg.begin), dim,
                             seg.end - seg.begin, nullptr);
  return total;
}

// Binary mean split +-0.2 sigma, halved weights.
std::pair<GaussianComponent, GaussianComponent> split_component(
    const GaussianComponent& c) {
  GaussianComponent lo = c, hi = c;
  lo.weight = hi.weight = c.weight / 2.0;
  for (std::size_t d = 0; d < c.mean.size(); ++d) {
    const double offset = 0.2 * std::sqrt(c.var[d]);
    lo.mean[d] -= offset;
    hi.mean[d] += offset;
  }
  return {lo, hi};
}

// Grows a state's mixture towards `target` components: split everything
// while the doubled size fits, otherwise split the heaviest components.
void grow_mixture(StateMixture& state, int target) {
  while (static_cast<int>(state.size()) < target) {
    const int cur = static_cast<int>(state.size());
    int to_split = std::min(cur, target - cur);
    std::vector<int> order(cur);
    for (int i = 0; i < cur; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return state[a].weight > state[b].weight;
    });
    order.resize(to_split);
    std::sort(order.begin(), order.end());
    StateMixture next;
    for (int i = 0; i < cur; ++i) {
      if (std::binary_search(order.begin(), order.end(), i)) {
        auto [lo, hi] = split_component(state[i]);
        next.push_back(std::move(lo));
        next.push_back(std::move(hi));
      } else {
        next.push_back(state[i]);
      }
    }
    state = std::move(next);
  }
}

PatternHMM cold_start_pattern(int pattern_index, const Granularity& psi,
                              const std::vector<SegmentRef>& segments, int dim,
                              const std::vector<double>& var_floor) {
  const int m = psi.states_per_pattern;
  PatternHMM hmm;
  hmm.pattern_index = pattern_index;
  hmm.self_loop.assign(m, 0.5);
  hmm.states.assign(m, StateMixture(1));

  std::vector<double> count(m, 0.0);
  std::vector<std::vector<double>> sum(m, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> sumsq(m, std::vector<double>(dim, 0.0));
  for (const auto& seg : segments) {
    const int len = seg.end - seg.begin;
    for (int s = 0; s < m; ++s) {
      const int lo = seg.begin + static_cast<int>(static_cast<std::int64_t>(s) * len / m);
      const int hi =
          seg.begin + static_cast<int>(static_cast<std::int64_t>(s + 1) * len / m);
      for (int t = lo; t < hi; ++t) {
        const float* x = seg.utt->frames.row(t);
        for (int d = 0; d < dim; ++d) {
          sum[s][d] += x[d];
          sumsq[s][d] += static_cast<double>(x[d]) * x[d];
        }
      }
      count[s] += hi - lo;
    }
  }
  const double num_segments = static_cast<double>(segments.size());
  for (int s = 0; s < m; ++s) {
    GaussianComponent& c = hmm.states[s][0];
    c.weight = 1.0;
    c.mean.assign(dim, 0.0);
    c.var.assign(dim, 1.0);
    for (int d = 0; d < dim; ++d) {
      const double mean = sum[s][d] / count[s];
      c.mean[d] = mean;
      c.var[d] = std::max(sumsq[s][d] / count[s] - mean * mean, var_floor[d]);
    }
    // stays per state under the uniform alignment: span length minus one exit
    hmm.self_loop[s] = clamp_self_loop((count[s] - num_segments) / count[s]);
  }
  return hmm;
}

PatternHMM fallback_pattern(int pattern_index, const Granularity& psi,
                            const Corpus& corpus, int dim,
                            const std::vector<double>& var_floor) {
  GaussianComponent global;
  global.weight = 1.0;
  global.mean.assign(dim, 0.0);
  global.var.assign(dim, 1.0);
  double count = 0.0;
  std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
  for (const auto& u : corpus.utterances) {
    for (int t = 0; t < u.num_frames(); ++t) {
      const float* x = u.frames.row(t);
      for (int d = 0; d < dim; ++d) {
        sum[d] += x[d];
        sumsq[d] += static_cast<double>(x[d]) * x[d];
      }
    }
    count += u.num_frames();
  }
  for (int d = 0; d < dim; ++d) {
    const double mean = count > 0 ? sum[d] / count : 0.0;
    global.mean[d] = mean;
    global.var[d] =
        std::max(count > 0 ? sumsq[d] / count - mean * mean : 1.0, var_floor[d]);
  }
  PatternHMM hmm;
  hmm.pattern_index = pattern_index;
  hmm.self_loop.assign(psi.states_per_pattern, 0.5);
  StateMixture state{global};
  grow_mixture(state, psi.gaussians_per_state);
  hmm.states.assign(psi.states_per_pattern, state);
  return hmm;
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(double));
}

double read_f64(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof(double));
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void Granularity::validate() const {
  if (states_per_pattern < 1)
    throw ValidationError("states per pattern must be >= 1");
  if (num_patterns < 2) throw ValidationError("number of patterns must be >= 2");
  if (gaussians_per_state < 1 || gaussians_per_state > 64)
    throw ValidationError("gaussians per state must be in [1, 64]");
}

double GaussianComponent::log_density(const float* frame, int dim) const {
  double acc = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = frame[d] - mean[d];
    acc += kLog2Pi + std::log(var[d]) + diff * diff / var[d];
  }
  return -0.5 * acc;
}

double mixture_log_density(const StateMixture& state, const float* frame, int dim) {
  double best = kNegInf;
  double vals[64];
  const int G = static_cast<int>(state.size());
  for (int g = 0; g < G; ++g) {
    vals[g] = std::log(state[g].weight) + state[g].log_density(frame, dim);
    if (vals[g] > best) best = vals[g];
  }
  double acc = 0.0;
  for (int g = 0; g < G; ++g) acc += std::exp(vals[g] - best);
  return best + std::log(acc);
}

void PatternSet::validate() const {
  granularity.validate();
  if (static_cast<int>(patterns.size()) != granularity.num_patterns)
    throw ValidationError("pattern set size does not match granularity");
  for (int p = 0; p < granularity.num_patterns; ++p) {
    const auto& hmm = patterns[p];
    if (hmm.pattern_index != p)
      throw ValidationError("pattern indices must be exactly 0..n-1");
    if (hmm.num_states() != granularity.states_per_pattern ||
        static_cast<int>(hmm.self_loop.size()) != granularity.states_per_pattern)
      throw ValidationError("pattern " + std::to_string(p) + " has wrong state count");
    for (const auto& state : hmm.states) {
      double wsum = 0.0;
      for (const auto& c : state) {
        wsum += c.weight;
        if (!(c.weight > 0.0 && c.weight <= 1.0))
          throw ValidationError("mixture weight out of (0,1]");
        for (double v : c.var)
          if (!(v > 0.0)) throw ValidationError("non-positive variance");
      }
      if (std::abs(wsum - 1.0) > 1e-9)
        throw ValidationError("mixture weights do not sum to 1");
    }
  }
}

void Labeling::validate(int total_frames, int min_segment_frames) const {
  if (segments.empty())
    throw ValidationError("labeling for '" + utterance_id + "' has no segments");
  int cursor = 0;
  for (const auto& seg : segments) {
    if (seg.begin != cursor)
      throw ValidationError("segments do not tile utterance '" + utterance_id + "'");
    if (seg.end - seg.begin < min_segment_frames)
      throw ValidationError("segment shorter than pattern length in '" +
                            utterance_id + "'");
    if (seg.pattern < 0)
      throw ValidationError("negative pattern index in '" + utterance_id + "'");
    cursor = seg.end;
  }
  if (cursor != total_frames)
    throw ValidationError("segments do not cover all frames of '" + utterance_id +
                          "' (" + std::to_string(cursor) + " vs " +
                          std::to_string(total_frames) + ")");
}

int Labeling::segment_at_frame(int t) const {
  int lo = 0, hi = static_cast<int>(segments.size()) - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (segments[mid].end <= t) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::vector<Labeling> init_labels(const Corpus& corpus, const Granularity& psi,
                                  std::uint64_t seed,
                                  std::vector<std::string>* skipped) {
  psi.validate();
  const int chunk = 2 * psi.states_per_pattern;

  struct Chunk {
    int utt, begin, end;
  };
  std::vector<Chunk> chunks;
  std::vector<std::vector<int>> chunk_ids(corpus.utterances.size());
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const int T = corpus.utterances[u].num_frames();
    const int q = T / chunk;
    if (q == 0) {
      if (skipped) skipped->push_back(corpus.utterances[u].utterance_id);
      continue;
    }
    for (int j = 0; j < q; ++j) {
      const int begin = j * chunk;
      const int end = (j == q - 1) ? T : begin + chunk;
      chunk_ids[u].push_back(static_cast<int>(chunks.size()));
      chunks.push_back({static_cast<int>(u), begin, end});
    }
  }
  if (chunks.empty())
    throw ValidationError("no utterance long enough for initialization (need >= " +
                          std::to_string(chunk) + " frames)");

  const int dim = corpus.utterances[chunks[0].utt].dim();
  Matrix<double> points(chunks.size(), dim, 0.0);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    const auto& frames = corpus.utterances[c.utt].frames;
    double* row = points.row(i);
    for (int t = c.begin; t < c.end; ++t) {
      const float* x = frames.row(t);
      for (int d = 0; d < dim; ++d) row[d] += x[d];
    }
    for (int d = 0; d < dim; ++d) row[d] /= (c.end - c.begin);
  }

  // k-means++ seeding, then 20 Lloyd iterations
  const int k = psi.num_patterns;
  const std::size_t P = chunks.size();
  Rng rng(seed);
  auto dist2 = [&](std::size_t i, const double* center) {
    const double* x = points.row(i);
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double diff = x[d] - center[d];
      acc += diff * diff;
    }
    return acc;
  };
  Matrix<double> centers(k, dim, 0.0);
  std::vector<double> best_d(P, 0.0);
  {
    const std::size_t first = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(P) - 1));
    std::memcpy(centers.row(0), points.row(first), dim * sizeof(double));
    for (int c = 1; c < k; ++c) {
      if (static_cast<std::size_t>(c) >= P) {
        std::memcpy(centers.row(c), points.row(c % P), dim * sizeof(double));
        continue;
      }
      double total = 0.0;
      for (std::size_t i = 0; i < P; ++i) {
        double d = dist2(i, centers.row(0));
        for (int cc = 1; cc < c; ++cc) d = std::min(d, dist2(i, centers.row(cc)));
        best_d[i] = d;
        total += d;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double run = 0.0;
        for (std::size_t i = 0; i < P; ++i) {
          run += best_d[i];
          if (run >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(P) - 1));
      }
      std::memcpy(centers.row(c), points.row(pick), dim * sizeof(double));
    }
  }
  std::vector<int> assign(P, 0);
  for (int iter = 0; iter < 20; ++iter) {
    for (std::size_t i = 0; i < P; ++i) {
      int arg = 0;
      double best = dist2(i, centers.row(0));
      for (int c = 1; c < k; ++c) {
        const double d = dist2(i, centers.row(c));
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      assign[i] = arg;
    }
    Matrix<double> acc(k, dim, 0.0);
    std::vector<double> cnt(k, 0.0);
    for (std::size_t i = 0; i < P; ++i) {
      const double* x = points.row(i);
      double* a = acc.row(assign[i]);
      for (int d = 0; d < dim; ++d) a[d] += x[d];
      cnt[assign[i]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[c] == 0.0) continue;  // empty cluster keeps its center
      double* ctr = centers.row(c);
      const double* a = acc.row(c);
      for (int d = 0; d < dim; ++d) ctr[d] = a[d] / cnt[c];
    }
  }

  std::vector<Labeling> labels;
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    if (chunk_ids[u].empty()) continue;
    Labeling lab;
    lab.utterance_id = corpus.utterances[u].utterance_id;
    for (int ci : chunk_ids[u])
      lab.segments.push_back({assign[ci], chunks[ci].begin, chunks[ci].end});
    labels.push_back(std::move(lab));
  }
  return labels;
}

Labeling viterbi_decode(const FeatureSequence& features, const PatternSet& set) {
  set.validate();
  const int T = features.num_frames();
  const int n = set.granularity.num_patterns;
  const int m = set.granularity.states_per_pattern;
  if (T < m)
    throw ValidationError("utterance '" + features.utterance_id + "' has " +
                          std::to_string(T) + " frames, need >= " + std::to_string(m));
  if (features.dim() != set.feature_dim)
    throw ValidationError("feature dimension mismatch in decode");

  const EmissionModel em(set);
  const double log_enter = -std::log(static_cast<double>(n));
  std::vector<double> log_stay(n * m), log_adv(n * m);
  for (int p = 0; p < n; ++p) {
    for (int s = 0; s < m; ++s) {
      log_stay[p * m + s] = std::log(set.patterns[p].self_loop[s]);
      log_adv[p * m + s] = std::log(1.0 - set.patterns[p].self_loop[s]);
    }
  }

  const std::size_t S = static_cast<std::size_t>(n) * m;
  Matrix<double> dp(T, S, kNegInf);
  // back codes: -1 stay, -2 advance, q >= 0 re-entry from pattern q, -3 start
  Matrix<std::int32_t> back(T, S, -3);
  std::vector<double> emis(S);

  em.frame_log_density(features.frames.row(0), emis.data());
  for (int p = 0; p < n; ++p) dp(0, p * m) = log_enter + emis[p * m];

  for (int t = 1; t < T; ++t) {
    em.frame_log_density(features.frames.row(t), emis.data());
    // best exiting pattern at t-1 (ties: lowest index)
    double best_exit = kNegInf;
    int best_exit_q = -1;
    for (int q = 0; q < n; ++q) {
      const double v = dp(t - 1, q * m + m - 1) + log_adv[q * m + m - 1];
      if (v > best_exit) {
        best_exit = v;
        best_exit_q = q;
      }
    }
    best_exit += log_enter;
    for (int p = 0; p < n; ++p) {
      for (int s = 0; s < m; ++s) {
        const std::size_t ps = static_cast<std::size_t>(p) * m + s;
        double best;
        std::int32_t code;
        if (s == 0) {
          best = best_exit;
          code = best_exit_q;
          const double stay = dp(t - 1, ps) + log_stay[ps];
          if (stay > best) {
            best = stay;
            code = -1;
          }
        } else {
          best = dp(t - 1, ps - 1) + log_adv[ps - 1];
          code = -2;
          const double stay = dp(t - 1, ps) + log_stay[ps];
          if (stay > best) {
            best = stay;
            code = -1;
          }
        }
        if (best == kNegInf) continue;
        dp(t, ps) = best + emis[ps];
        back(t, ps) = code;
      }
    }
  }

  double best_final = kNegInf;
  int best_p = -1;
  for (int p = 0; p < n; ++p) {
    const double v = dp(T - 1, p * m + m - 1) + log_adv[p * m + m - 1];
    if (v > best_final) {
      best_final = v;
      best_p = p;
    }
  }
  if (best_p < 0 || best_final == kNegInf)
    throw NumericError("decode produced no valid path for '" +
                       features.utterance_id + "'");

  Labeling lab;
  lab.utterance_id = features.utterance_id;
  lab.log_likelihood = best_final;
  int p = best_p, s = m - 1, seg_end = T;
  for (int t = T - 1; t >= 0; --t) {
    const std::int32_t code = back(t, static_cast<std::size_t>(p) * m + s);
    if (code == -3 || code >= 0) {
      lab.segments.push_back({p, t, seg_end});
      seg_end = t;
      if (code >= 0) {
        p = code;
        s = m - 1;
      }
    } else if (code == -2) {
      --s;
    }
  }
  std::reverse(lab.segments.begin(), lab.segments.end());
  lab.validate(T, m);
  return lab;
}

PatternSet train_models(const Corpus& corpus, const std::vector<Labeling>& labels,
                        const Granularity& psi, int em_iters,
                        const PatternSet* prior, TrainStats* stats) {
  psi.validate();
  if (em_iters < 1) throw ValidationError("em_iters must be >= 1");
  if (corpus.utterances.empty()) throw ValidationError("empty corpus");
  const int dim = corpus.utterances[0].dim();
  const int n = psi.num_patterns;
  if (prior) {
    prior->validate();
    if (!(prior->granularity == psi) || prior->feature_dim != dim)
      throw ValidationError("prior pattern set does not match configuration");
  }

  std::unordered_map<std::string, const FeatureSequence*> by_id;
  for (const auto& u : corpus.utterances) by_id[u.utterance_id] = &u;

  std::vector<std::vector<SegmentRef>> segments(n);
  for (const auto& lab : labels) {
    auto it = by_id.find(lab.utterance_id);
    if (it == by_id.end())
      throw ValidationError("labeling references unknown utterance '" +
                            lab.utterance_id + "'");
    lab.validate(it->second->num_frames(), psi.states_per_pattern);
    for (const auto& seg : lab.segments) {
      if (seg.pattern >= n)
        throw ValidationError("label references pattern " +
                              std::to_string(seg.pattern) + " but n=" +
                              std::to_string(n));
      segments[seg.pattern].push_back({it->second, seg.begin, seg.end});
    }
  }

  const std::vector<double> floor = variance_floor(corpus);

  PatternSet out;
  out.granularity = psi;
  out.feature_dim = dim;
  out.patterns.resize(n);
  if (stats) {
    stats->per_pattern.clear();
    stats->per_pattern.resize(n);
  }

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t pi) {
    const int p = static_cast<int>(pi);
    if (segments[p].empty()) {
      out.patterns[p] = prior ? prior->patterns[p]
                              : fallback_pattern(p, psi, corpus, dim, floor);
      out.patterns[p].pattern_index = p;
      return;
    }
    PatternHMM hmm;
    std::vector<std::pair<int, std::vector<double>>> phases;
    if (prior) {
      hmm = prior->patterns[p];
      phases.emplace_back(psi.gaussians_per_state, std::vector<double>());
      auto& ll = phases.back().second;
      for (int it = 0; it < em_iters; ++it)
        ll.push_back(em_iteration(hmm, segments[p], dim, floor));
      if (stats) ll.push_back(assigned_loglik(hmm, segments[p], dim));
    } else {
      hmm = cold_start_pattern(p, psi, segments[p], dim, floor);
      phases.emplace_back(1, std::vector<double>());
      {
        auto& ll = phases.back().second;
        for (int it = 0; it < em_iters; ++it)
          ll.push_back(em_iteration(hmm, segments[p], dim, floor));
        if (stats) ll.push_back(assigned_loglik(hmm, segments[p], dim));
      }
      while (static_cast<int>(hmm.states[0].size()) < psi.gaussians_per_state) {
        for (auto& state : hmm.states)
          grow_mixture(state, std::min(2 * static_cast<int>(state.size()),
                                       psi.gaussians_per_state));
        phases.emplace_back(static_cast<int>(hmm.states[0].size()),
                            std::vector<double>());
        auto& ll = phases.back().second;
        for (int it = 0; it < 2; ++it)
          ll.push_back(em_iteration(hmm, segments[p], dim, floor));
        if (stats) ll.push_back(assigned_loglik(hmm, segments[p], dim));
      }
    }
    hmm.pattern_index = p;
    out.patterns[p] = std::move(hmm);
    if (stats) {
      for (auto& [g, ll] : phases)
        stats->per_pattern[p].push_back({g, std::move(ll)});
    }
  });

  out.validate();
  return out;
}

double loglik(const FeatureSequence& features, const PatternSet& set,
              const Labeling& labels) {
  set.validate();
  labels.validate(features.num_frames(), set.granularity.states_per_pattern);
  const int dim = features.dim();
  if (dim != set.feature_dim)
    throw ValidationError("feature dimension mismatch in loglik");
  const double log_enter = -std::log(static_cast<double>(set.granularity.num_patterns));
  double total = 0.0;
  for (const auto& seg : labels.segments) {
    if (seg.pattern >= set.granularity.num_patterns)
      throw ValidationError("label references pattern out of range");
    total += log_enter + segment_forward(set.patterns[seg.pattern],
                                         features.frames.row(seg.begin), dim,
                                         seg.end - seg.begin, nullptr);
  }
  return total;
}

void save_pattern_set(const std::string& path, const PatternSet& set) {
  set.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file: " + path);
  out.write(kModelMagic, 4);
  write_u32(out, kModelVersion);
  write_u32(out, static_cast<std::uint32_t>(set.granularity.states_per_pattern));
  write_u32(out, static_cast<std::uint32_t>(set.granularity.num_patterns));
  write_u32(out, static_cast<std::uint32_t>(set.granularity.gaussians_per_state));
  write_u32(out, static_cast<std::uint32_t>(set.feature_dim));
  for (const auto& hmm : set.patterns) {
    for (const auto& state : hmm.states) {
      for (const auto& comp : state) write_f64(out, comp.weight);
      for (const auto& comp : state) {
        for (double v : comp.mean) write_f64(out, v);
        for (double v : comp.var) write_f64(out, v);
      }
    }
    for (double a : hmm.self_loop) write_f64(out, a);
  }
  if (!out) throw IoError("short write to " + path);
}

PatternSet load_pattern_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw FormatError("bad model magic in " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kModelVersion)
    throw FormatError("unsupported model version " + std::to_string(version) +
                      " in " + path);
  PatternSet set;
  set.granularity.states_per_pattern = static_cast<int>(read_u32(in));
  set.granularity.num_patterns = static_cast<int>(read_u32(in));
  set.granularity.gaussians_per_state = static_cast<int>(read_u32(in));
  set.feature_dim = static_cast<int>(read_u32(in));
  if (!in) throw FormatError("truncated model header in " + path);
  set.patterns.resize(set.granularity.num_patterns);
  for (int p = 0; p < set.granularity.num_patterns; ++p) {
    auto& hmm = set.patterns[p];
    hmm.pattern_index = p;
    hmm.states.assign(set.granularity.states_per_pattern,
                      StateMixture(set.granularity.gaussians_per_state));
    for (auto& state : hmm.states) {
      for (auto& comp : state) comp.weight = read_f64(in);
      for (auto& comp : state) {
        comp.mean.resize(set.feature_dim);
        comp.var.resize(set.feature_dim);
        for (auto& v : comp.mean) v = read_f64(in);
        for (auto& v : comp.var) v = read_f64(in);
      }
    }
    hmm.self_loop.resize(set.granularity.states_per_pattern);
    for (auto& a : hmm.self_loop) a = read_f64(in);
  }
  if (!in) throw FormatError("truncated model payload in " + path);
  set.validate();
  return set;
}

void save_labels(const std::string& path, const std::vector<Labeling>& labels,
                 bool relabeled) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write labels file: " + path);
  for (const auto& lab : labels) {
    json segs = json::array();
    for (const auto& s : lab.segments)
      segs.push_back(json::array({s.pattern, s.begin, s.end}));
    json rec{{"utt", lab.utterance_id}, {"segs", segs}, {"ll", lab.log_likelihood}};
    if (relabeled) rec["relabeled"] = true;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

std::vector<Labeling> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file: " + path);
  std::vector<Labeling> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("bad labels line in " + path + ": " + e.what());
    }
    Labeling lab;
    lab.utterance_id = rec.at("utt").get<std::string>();
    lab.log_likelihood = rec.value("ll", 0.0);
    for (const auto& s : rec.at("segs"))
      lab.segments.push_back(
          {s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()});
    labels.push_back(std::move(lab));
  }
  return labels;
}

}  // namespace patlex
