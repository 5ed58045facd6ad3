// abnet/abx.hpp

// Copyright 2026  abnet authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ABNET_ABX_HPP
#define ABNET_ABX_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "abnet/classifier.hpp"
#include "abnet/corpus.hpp"
#include "abnet/network.hpp"
#include "abnet/pairing.hpp"
#include "abnet/rng.hpp"

namespace abnet {

// Minimal-pair discrimination: A and B come from different categories, X from
// the category of A; a representation scores a point when it places X closer
// to A than to B. Chance is 0.5.
enum class AbxTask { phone_talker, talker_phone };

inline const char* to_string(AbxTask t) {
  return t == AbxTask::phone_talker ? "phone_talker" : "talker_phone";
}

// One center-phone span with its left/right context, indices into the corpus
// inventories.
struct TriphoneToken {
  std::size_t seq_index = 0;
  std::size_t left = 0, center = 0, right = 0;  // phone inventory indices
  std::size_t speaker = 0;                      // speaker inventory index
  std::size_t frame_begin = 0, frame_end = 0;   // center span [begin, end)
};

// Indices into a TriphoneToken list. Triplets are canonicalized so that X's
// true match is always A; both orientations of each (A,B) pair are generated,
// so canonicalization introduces no bias.
struct AbxTriplet {
  std::size_t a = 0, b = 0, x = 0;
};

struct AbxCellKey {
  std::pair<std::size_t, std::size_t> context;   // (left, right)
  std::pair<std::size_t, std::size_t> category;  // unordered (sorted)
  std::pair<std::size_t, std::size_t> other;     // unordered (sorted)

  auto tie() const { return std::tie(context, category, other); }
  bool operator<(const AbxCellKey& o) const { return tie() < o.tie(); }
  bool operator==(const AbxCellKey& o) const { return tie() == o.tie(); }
};

struct AbxCell {
  std::string context;
  std::string category_pair;
  std::string other_pair;
  double score = 0.0;
  std::size_t n = 0;
};

struct AbxReport {
  AbxTask task = AbxTask::phone_talker;
  std::string repr;
  double score = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_triplets = 0;
  std::size_t cap = 0;  // per-cell triplet cap applied; 0 = exhaustive
  std::vector<AbxCell> cells;
};

// ---------------------------------------------------------------------------
// Triphone extraction
// ---------------------------------------------------------------------------

// Run-length encodes each token's phone labels; every run trigram yields one
// triphone whose span covers the center run.
inline std::vector<TriphoneToken> extract_triphones(const Corpus& corpus) {
  std::vector<TriphoneToken> out;
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    const auto& seq = corpus.sequences[s];
    if (!seq.phone_labels)
      throw std::runtime_error("extract_triphones: token " + seq.token_id + " has no phone labels");
    const auto& labels = *seq.phone_labels;
    struct Run {
      std::size_t phone, begin, end;
    };
    std::vector<Run> runs;
    for (std::size_t f = 0; f < labels.size(); ++f) {
      if (runs.empty() || runs.back().phone != labels[f])
        runs.push_back({labels[f], f, f + 1});
      else
        runs.back().end = f + 1;
    }
    const std::size_t speaker = corpus.speaker_index(seq.speaker);
    for (std::size_t r = 1; r + 1 < runs.size(); ++r)
      out.push_back({s, runs[r - 1].phone, runs[r].phone, runs[r + 1].phone, speaker,
                     runs[r].begin, runs[r].end});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Triplet enumeration
// ---------------------------------------------------------------------------

inline AbxCellKey cell_key(const std::vector<TriphoneToken>& tokens, const AbxTriplet& t, AbxTask task) {
  const auto& a = tokens[t.a];
  const auto& b = tokens[t.b];
  const auto& x = tokens[t.x];
  const auto unordered = [](std::size_t p, std::size_t q) {
    return std::make_pair(std::min(p, q), std::max(p, q));
  };
  AbxCellKey key;
  key.context = {a.left, a.right};
  if (task == AbxTask::phone_talker) {
    key.category = unordered(a.center, b.center);
    key.other = unordered(a.speaker, x.speaker);
  } else {
    key.category = unordered(a.speaker, b.speaker);
    key.other = unordered(a.center, x.center);
  }
  return key;
}

// All triplets satisfying the task constraints (contexts always match across
// A, B and X). A per-cell cap keeps dense corpora tractable: cells larger
// than `cap` are subsampled uniformly with the given seed; cap 0 means
// exhaustive.
inline std::vector<AbxTriplet> enumerate_triplets(const std::vector<TriphoneToken>& tokens,
                                                  AbxTask task, std::size_t cap = 0,
                                                  std::uint64_t seed = 0) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_context;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    by_context[{tokens[i].left, tokens[i].right}].push_back(i);

  std::map<AbxCellKey, std::vector<AbxTriplet>> cells;
  for (const auto& [ctx, group] : by_context) {
    for (std::size_t a : group) {
      for (std::size_t b : group) {
        if (a == b) continue;
        const auto& ta = tokens[a];
        const auto& tb = tokens[b];
        bool pair_ok;
        if (task == AbxTask::phone_talker)
          pair_ok = ta.speaker == tb.speaker && ta.center != tb.center;
        else
          pair_ok = ta.center == tb.center && ta.speaker != tb.speaker;
        if (!pair_ok) continue;
        for (std::size_t x : group) {
          if (x == a || x == b) continue;
          const auto& tx = tokens[x];
          bool x_ok;
          if (task == AbxTask::phone_talker)
            x_ok = tx.center == ta.center && tx.speaker != ta.speaker;
          else
            x_ok = tx.speaker == ta.speaker && tx.center != ta.center;
          if (!x_ok) continue;
          const AbxTriplet t{a, b, x};
          cells[cell_key(tokens, t, task)].push_back(t);
        }
      }
    }
  }

  std::vector<AbxTriplet> out;
  Rng rng(seed);
  for (auto& [key, list] : cells) {
    if (cap > 0 && list.size() > cap) {
      for (std::size_t pos : rng.sample_without_replacement(list.size(), cap))
        out.push_back(list[pos]);
    } else {
      out.insert(out.end(), list.begin(), list.end());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distances and scoring
// ---------------------------------------------------------------------------

// Mean cosine frame distance along the optimal DTW path (path-length
// normalized, so short tokens are not favored).
inline double dtw_cosine_distance(const Matrix& seq_a, const Matrix& seq_b) {
  const DtwPath path = dtw_align(seq_a, seq_b);
  return path.cost / static_cast<double>(path.steps.size());
}

// 1 if X is strictly closer to A (its true match), 0 if strictly closer to B,
// 0.5 on an exact tie.
inline double score_triplet(const AbxTriplet& t, const std::vector<Matrix>& embeddings) {
  const double d_ax = dtw_cosine_distance(embeddings[t.a], embeddings[t.x]);
  const double d_bx = dtw_cosine_distance(embeddings[t.b], embeddings[t.x]);
  if (d_ax < d_bx) return 1.0;
  if (d_ax > d_bx) return 0.0;
  return 0.5;
}

// ---------------------------------------------------------------------------
// Aggregation: mean within (context, category-pair, other-pair) cells, then
// over contexts, then over other-pairs, then over category-pairs. Every level
// is an unweighted mean.
// ---------------------------------------------------------------------------

inline AbxReport aggregate(const std::vector<std::pair<AbxCellKey, double>>& scored,
                           const std::vector<TriphoneToken>& tokens, const Corpus& corpus,
                           AbxTask task, const std::string& repr, std::size_t cap) {
  (void)tokens;
  AbxReport report;
  report.task = task;
  report.repr = repr;
  report.cap = cap;
  report.n_triplets = scored.size();
  if (scored.empty()) return report;  // explicit empty report, score stays NaN

  struct CellAgg {
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<AbxCellKey, CellAgg> cells;
  for (const auto& [key, score] : scored) {
    auto& c = cells[key];
    c.sum += score;
    ++c.n;
  }

  const auto phone_name = [&](std::size_t i) { return corpus.phone_inventory[i]; };
  const auto speaker_name = [&](std::size_t i) { return corpus.speaker_inventory[i]; };
  const auto pair_name = [&](std::pair<std::size_t, std::size_t> p, bool phones) {
    return phones ? phone_name(p.first) + "|" + phone_name(p.second)
                  : speaker_name(p.first) + "|" + speaker_name(p.second);
  };
  const bool cat_is_phone = task == AbxTask::phone_talker;

  using PairKey = std::pair<std::size_t, std::size_t>;
  std::map<PairKey, std::map<PairKey, std::vector<double>>> by_cat_other;  // cat -> other -> ctx means
  for (const auto& [key, agg] : cells) {
    const double mean = agg.sum / static_cast<double>(agg.n);
    by_cat_other[key.category][key.other].push_back(mean);
    report.cells.push_back({phone_name(key.context.first) + "+" + phone_name(key.context.second),
                            pair_name(key.category, cat_is_phone),
                            pair_name(key.other, !cat_is_phone), mean, agg.n});
  }

  double cat_sum = 0.0;
  for (const auto& [cat, others] : by_cat_other) {
    double other_sum = 0.0;
    for (const auto& [other, ctx_means] : others) {
      double s = 0.0;
      for (double v : ctx_means) s += v;
      other_sum += s / static_cast<double>(ctx_means.size());
    }
    cat_sum += other_sum / static_cast<double>(others.size());
  }
  report.score = cat_sum / static_cast<double>(by_cat_other.size());
  return report;
}

// ---------------------------------------------------------------------------
// Token embedding and model evaluation
// ---------------------------------------------------------------------------

enum class AbxRepr { filterbank, word_head, speaker_head, posterior };

inline const char* to_string(AbxRepr r) {
  switch (r) {
    case AbxRepr::filterbank: return "filterbank";
    case AbxRepr::word_head: return "word_head";
    case AbxRepr::speaker_head: return "spkr_head";
    case AbxRepr::posterior: return "posterior";
  }
  return "?";
}

struct AbxOptions {
  std::vector<AbxTask> tasks = {AbxTask::phone_talker, AbxTask::talker_phone};
  std::size_t cap = 500;  // per-cell triplet cap, 0 = exhaustive
  std::uint64_t seed = 0;
  std::size_t nf = 11;  // context window for the filterbank representation
  unsigned threads = 1;
};

// Embeds each triphone frame by frame: stacked filterbanks as-is, an
// embedding head of the siamese net, or classifier posteriors.
inline std::vector<Matrix> embed_triphones(const Corpus& corpus,
                                           const std::vector<TriphoneToken>& tokens, AbxRepr repr,
                                           const NetworkParams* net, const ClassifierParams* clf,
                                           std::size_t nf, unsigned threads = 1) {
  if ((repr == AbxRepr::word_head || repr == AbxRepr::speaker_head) && net == nullptr)
    throw std::invalid_argument("embed_triphones: representation needs a siamese model");
  if (repr == AbxRepr::posterior && clf == nullptr)
    throw std::invalid_argument("embed_triphones: posterior representation needs a classifier model");

  std::vector<Matrix> out(tokens.size());
  parallel_for(tokens.size(), threads, [&](std::size_t ti) {
    const TriphoneToken& tok = tokens[ti];
    const FeatureSequence& seq = corpus.sequences[tok.seq_index];
    const std::size_t n = tok.frame_end - tok.frame_begin;
    Matrix emb;
    for (std::size_t k = 0; k < n; ++k) {
      const StackedFrame x = stack_frames(seq, tok.frame_begin + k, nf);
      std::vector<double> row;
      switch (repr) {
        case AbxRepr::filterbank: row = x; break;
        case AbxRepr::word_head: row = forward(*net, x).word_embed; break;
        case AbxRepr::speaker_head: row = forward(*net, x).speaker_embed; break;
        case AbxRepr::posterior: row = classifier_forward(*clf, x); break;
      }
      if (emb.data.empty()) emb = Matrix(n, row.size());
      std::copy(row.begin(), row.end(), emb.row(k).begin());
    }
    out[ti] = std::move(emb);
  });
  return out;
}

// Full evaluation for one representation: extract triphones, embed, then
// enumerate / score / aggregate per task. The corpus must carry phone labels
// and be preprocessed (standardized) the same way as the training data.
inline std::vector<AbxReport> evaluate_model(const Corpus& corpus, AbxRepr repr,
                                             const NetworkParams* net, const ClassifierParams* clf,
                                             const AbxOptions& opts) {
  const std::vector<TriphoneToken> tokens = extract_triphones(corpus);
  const std::vector<Matrix> embeddings =
      embed_triphones(corpus, tokens, repr, net, clf, opts.nf, opts.threads);

  std::vector<AbxReport> reports;
  for (AbxTask task : opts.tasks) {
    const std::vector<AbxTriplet> triplets = enumerate_triplets(tokens, task, opts.cap, opts.seed);
    std::vector<std::pair<AbxCellKey, double>> scored(triplets.size());
    parallel_for(triplets.size(), opts.threads, [&](std::size_t i) {
      scored[i] = {cell_key(tokens, triplets[i], task), score_triplet(triplets[i], embeddings)};
    });
    reports.push_back(aggregate(scored, tokens, corpus, task, to_string(repr), opts.cap));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Report CSV: one aggregate row, then one row per cell.
// ---------------------------------------------------------------------------

inline std::string encode_abx_csv(const AbxReport& report) {
  std::string out = "task,repr,context,cat_pair,spkr_pair,score,n\n";
  const std::string prefix = std::string(to_string(report.task)) + "," + report.repr + ",";
  out += prefix + "ALL,ALL,ALL," + (report.n_triplets ? fmt_double(report.score) : std::string()) +
         "," + std::to_string(report.n_triplets) + "\n";
  for (const auto& cell : report.cells)
    out += prefix + cell.context + "," + cell.category_pair + "," + cell.other_pair + "," +
           fmt_double(cell.score) + "," + std::to_string(cell.n) + "\n";
  return out;
}

}  // namespace abnet

#endif  // ABNET_ABX_HPP
