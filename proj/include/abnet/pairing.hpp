// abnet/pairing.hpp

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

#ifndef ABNET_PAIRING_HPP
#define ABNET_PAIRING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "abnet/corpus.hpp"
#include "abnet/io_util.hpp"
#include "abnet/matrix.hpp"
#include "abnet/rng.hpp"

namespace abnet {

// Monotone alignment between two sequences: steps from (0,0) to (m-1,n-1),
// each advancing i, j, or both by one; cost is the sum of frame distances
// along the path.
struct DtwPath {
  std::vector<std::pair<std::size_t, std::size_t>> steps;
  double cost = 0.0;
};

struct PairingConfig {
  double same_speaker_target_fraction = 0.25;
  double negative_ratio = 1.0;      // negative : positive frame examples
  std::size_t min_word_frames = 50; // ~0.5 s at a 10 ms hop
  std::size_t nf = 11;              // stacked context frames per example
  std::uint64_t seed = 0;
};

// A training item: two stacked frames plus same-word / same-speaker labels.
struct FramePairExample {
  StackedFrame x_a;
  StackedFrame x_b;
  std::uint8_t same_word = 0;
  std::uint8_t same_speaker = 0;
};

// A retained same-word token pair (indices into corpus.sequences) with its
// alignment.
struct AlignedPair {
  std::size_t token_a = 0;
  std::size_t token_b = 0;
  DtwPath path;
};

// ---------------------------------------------------------------------------
// Frame distance and DTW
// ---------------------------------------------------------------------------

// Cosine distance 1 - cos(a, b); degenerate (near-zero norm) inputs score the
// maximal 1. Bit-identical frames give exactly 0 and the cosine is clamped
// into [-1, 1], so distances never go negative by rounding.
inline double frame_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("frame_distance: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
    identical = identical && a[i] == b[i];
  }
  const double na = std::sqrt(aa);
  const double nb = std::sqrt(bb);
  if (na < 1e-12 || nb < 1e-12) return 1.0;
  if (identical) return 0.0;
  return 1.0 - std::clamp(ab / (na * nb), -1.0, 1.0);
}

// Unweighted symmetric DTW with steps {(1,0),(0,1),(1,1)}. Backtrace ties
// prefer the diagonal, then (1,0), then (0,1).
inline DtwPath dtw_align(const Matrix& seq_a, const Matrix& seq_b) {
  if (seq_a.empty() || seq_b.empty()) throw std::invalid_argument("dtw_align: empty sequence");
  const std::size_t m = seq_a.rows, n = seq_b.rows;

  Matrix d(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = frame_distance(seq_a.row(i), seq_b.row(j));

  Matrix acc(m, n);
  acc(0, 0) = d(0, 0);
  for (std::size_t i = 1; i < m; ++i) acc(i, 0) = acc(i - 1, 0) + d(i, 0);
  for (std::size_t j = 1; j < n; ++j) acc(0, j) = acc(0, j - 1) + d(0, j);
  for (std::size_t i = 1; i < m; ++i)
    for (std::size_t j = 1; j < n; ++j)
      acc(i, j) = d(i, j) + std::min({acc(i - 1, j - 1), acc(i - 1, j), acc(i, j - 1)});

  DtwPath path;
  path.cost = acc(m - 1, n - 1);
  std::size_t i = m - 1, j = n - 1;
  path.steps.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      // predecessor value the DP chose; compare exactly
      const double prev = std::min({acc(i - 1, j - 1), acc(i - 1, j), acc(i, j - 1)});
      if (acc(i - 1, j - 1) == prev) {
        --i;
        --j;
      } else if (acc(i - 1, j) == prev) {
        --i;
      } else {
        --j;
      }
    }
    path.steps.emplace_back(i, j);
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

// ---------------------------------------------------------------------------
// Pair construction
// ---------------------------------------------------------------------------

// Enumerates all unordered same-word token pairs whose tokens both meet the
// length floor, then subsamples different-speaker pairs until same-speaker
// pairs make up at least same_speaker_target_fraction of the total (the
// fraction cannot be raised when there are no same-speaker pairs, in which
// case all pairs are kept). Retained pairs are DTW-aligned in the feature
// space. Output order is fixed by (word, token_id, token_id).
inline std::vector<AlignedPair> build_same_word_pairs(const Corpus& corpus, const PairingConfig& cfg,
                                                      unsigned threads = 1) {
  struct Candidate {
    std::string word;
    std::string id_a, id_b;
    std::size_t token_a, token_b;
    bool same_speaker;
  };

  std::map<std::string, std::vector<std::size_t>> by_word;
  for (std::size_t t = 0; t < corpus.sequences.size(); ++t) {
    const auto& seq = corpus.sequences[t];
    if (seq.n_frames() >= cfg.min_word_frames) by_word[seq.word].push_back(t);
  }

  std::vector<Candidate> candidates;
  for (auto& [word, tokens] : by_word) {
    std::sort(tokens.begin(), tokens.end(), [&](std::size_t a, std::size_t b) {
      return corpus.sequences[a].token_id < corpus.sequences[b].token_id;
    });
    for (std::size_t a = 0; a < tokens.size(); ++a)
      for (std::size_t b = a + 1; b < tokens.size(); ++b) {
        const auto& sa = corpus.sequences[tokens[a]];
        const auto& sb = corpus.sequences[tokens[b]];
        candidates.push_back({word, sa.token_id, sb.token_id, tokens[a], tokens[b],
                              sa.speaker == sb.speaker});
      }
  }
  if (candidates.empty())
    throw std::runtime_error("build_same_word_pairs: no eligible pairs (need >= 2 tokens of some "
                             "word with n_frames >= " + std::to_string(cfg.min_word_frames) + ")");

  std::vector<std::size_t> same_idx, diff_idx;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    (candidates[i].same_speaker ? same_idx : diff_idx).push_back(i);

  std::vector<std::size_t> keep = same_idx;
  const double t = cfg.same_speaker_target_fraction;
  const std::size_t n_same = same_idx.size();
  const double fraction = static_cast<double>(n_same) / static_cast<double>(candidates.size());
  if (n_same == 0 || t <= 0.0 || fraction >= t) {
    keep.insert(keep.end(), diff_idx.begin(), diff_idx.end());
  } else {
    // largest different-speaker count keeping the same-speaker share >= t
    const std::size_t n_diff_keep = std::min(
        diff_idx.size(),
        static_cast<std::size_t>(std::floor(static_cast<double>(n_same) * (1.0 - t) / t)));
    Rng rng(cfg.seed);
    for (std::size_t pos : rng.sample_without_replacement(diff_idx.size(), n_diff_keep))
      keep.push_back(diff_idx[pos]);
  }

  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = candidates[a];
    const auto& cb = candidates[b];
    return std::tie(ca.word, ca.id_a, ca.id_b) < std::tie(cb.word, cb.id_a, cb.id_b);
  });

  std::vector<AlignedPair> pairs(keep.size());
  parallel_for(keep.size(), threads, [&](std::size_t k) {
    const Candidate& c = candidates[keep[k]];
    pairs[k] = {c.token_a, c.token_b,
                dtw_align(corpus.sequences[c.token_a].frames, corpus.sequences[c.token_b].frames)};
  });
  return pairs;
}

namespace detail {

// Emitted values go through f32 once so that in-memory examples match a
// save/load round trip of the pairs archive bit for bit.
inline StackedFrame round_f32(StackedFrame v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return v;
}

}  // namespace detail

// Positive examples: one per DTW path step, stacked frames centered on the
// aligned indices. Negative examples: different-word token pairs sampled
// uniformly, frames matched by proportional index mapping over the shorter
// token (no DTW: warping unrelated words would bias their distance down).
// The negative count is round(negative_ratio * positive count).
inline std::vector<FramePairExample> emit_training_examples(const std::vector<AlignedPair>& pairs,
                                                            const Corpus& corpus,
                                                            const PairingConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("emit_training_examples: no aligned pairs");
  std::vector<FramePairExample> out;

  for (const auto& pair : pairs) {
    const auto& sa = corpus.sequences[pair.token_a];
    const auto& sb = corpus.sequences[pair.token_b];
    const std::uint8_t same_spk = sa.speaker == sb.speaker ? 1 : 0;
    for (const auto& [i, j] : pair.path.steps) {
      FramePairExample ex;
      ex.x_a = detail::round_f32(stack_frames(sa, i, cfg.nf));
      ex.x_b = detail::round_f32(stack_frames(sb, j, cfg.nf));
      ex.same_word = 1;
      ex.same_speaker = same_spk;
      out.push_back(std::move(ex));
    }
  }
  const std::size_t n_positive = out.size();
  const std::size_t n_negative =
      static_cast<std::size_t>(std::llround(cfg.negative_ratio * static_cast<double>(n_positive)));
  if (n_negative == 0) return out;

  if (corpus.word_inventory.size() < 2)
    throw std::runtime_error("emit_training_examples: cannot sample negatives with fewer than 2 word types");

  Rng rng(cfg.seed);
  const std::size_t n_tokens = corpus.sequences.size();
  std::size_t emitted = 0;
  while (emitted < n_negative) {
    const std::size_t ia = static_cast<std::size_t>(rng.uniform_int(n_tokens));
    const std::size_t ib = static_cast<std::size_t>(rng.uniform_int(n_tokens));
    const auto& sa = corpus.sequences[ia];
    const auto& sb = corpus.sequences[ib];
    if (ia == ib || sa.word == sb.word) continue;

    const std::uint8_t same_spk = sa.speaker == sb.speaker ? 1 : 0;
    const bool a_shorter = sa.n_frames() <= sb.n_frames();
    const auto& shorter = a_shorter ? sa : sb;
    const auto& longer = a_shorter ? sb : sa;
    const std::size_t ns = shorter.n_frames(), nl = longer.n_frames();
    for (std::size_t i = 0; i < ns && emitted < n_negative; ++i, ++emitted) {
      const std::size_t j =
          ns == 1 ? 0
                  : static_cast<std::size_t>(std::llround(static_cast<double>(i) *
                                                          static_cast<double>(nl - 1) /
                                                          static_cast<double>(ns - 1)));
      FramePairExample ex;
      StackedFrame xs = detail::round_f32(stack_frames(shorter, i, cfg.nf));
      StackedFrame xl = detail::round_f32(stack_frames(longer, j, cfg.nf));
      ex.x_a = a_shorter ? std::move(xs) : std::move(xl);
      ex.x_b = a_shorter ? std::move(xl) : std::move(xs);
      ex.same_word = 0;
      ex.same_speaker = same_spk;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairs archive: "PAIR", u32 version, u32 n_coeffs, u32 nf, u64 n_examples,
// then per example 2*(nf*n_coeffs) f32 plus u8 same_word, u8 same_speaker.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kPairsFileVersion = 1;

struct PairsFile {
  std::size_t n_coeffs = 0;
  std::size_t nf = 0;
  std::vector<FramePairExample> examples;
};

inline std::string encode_pairs(const std::vector<FramePairExample>& examples, std::size_t n_coeffs,
                                std::size_t nf) {
  const std::size_t dim = n_coeffs * nf;
  std::string buf;
  buf.reserve(24 + examples.size() * (dim * 8 + 2));
  buf += "PAIR";
  append_u32(buf, kPairsFileVersion);
  append_u32(buf, static_cast<std::uint32_t>(n_coeffs));
  append_u32(buf, static_cast<std::uint32_t>(nf));
  append_u64(buf, examples.size());
  for (const auto& ex : examples) {
    if (ex.x_a.size() != dim || ex.x_b.size() != dim)
      throw std::invalid_argument("encode_pairs: example dimension does not match nf * n_coeffs");
    for (double v : ex.x_a) append_f32(buf, static_cast<float>(v));
    for (double v : ex.x_b) append_f32(buf, static_cast<float>(v));
    buf.push_back(static_cast<char>(ex.same_word));
    buf.push_back(static_cast<char>(ex.same_speaker));
  }
  return buf;
}

inline void save_pairs(const std::filesystem::path& path, const std::vector<FramePairExample>& examples,
                       std::size_t n_coeffs, std::size_t nf) {
  write_file_atomic(path, encode_pairs(examples, n_coeffs, nf));
}

inline PairsFile load_pairs(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, "pairs file " + path.string());
  r.expect_magic("PAIR");
  const std::uint32_t version = r.u32();
  if (version != kPairsFileVersion) r.fail("unsupported version " + std::to_string(version));
  PairsFile pf;
  pf.n_coeffs = r.u32();
  pf.nf = r.u32();
  const std::uint64_t n = r.u64();
  const std::size_t dim = pf.n_coeffs * pf.nf;
  pf.examples.resize(n);
  for (auto& ex : pf.examples) {
    ex.x_a.resize(dim);
    ex.x_b.resize(dim);
    for (auto& v : ex.x_a) v = static_cast<double>(r.f32());
    for (auto& v : ex.x_b) v = static_cast<double>(r.f32());
    ex.same_word = r.u8();
    ex.same_speaker = r.u8();
    if (ex.same_word > 1 || ex.same_speaker > 1) r.fail("label byte not in {0,1}");
  }
  if (!r.at_end()) r.fail("trailing bytes after last example");
  return pf;
}

}  // namespace abnet

#endif  // ABNET_PAIRING_HPP
