// abnet/corpus.hpp

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

#ifndef ABNET_CORPUS_HPP
#define ABNET_CORPUS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "abnet/io_util.hpp"
#include "abnet/matrix.hpp"
#include "abnet/rng.hpp"

#include "json.hpp"

namespace abnet {

// One spoken token: a frames x coefficients feature matrix plus word/speaker
// metadata and optional per-frame phone labels.
struct FeatureSequence {
  std::string token_id;
  std::string word;
  std::string speaker;
  Matrix frames;                                 // n_frames x n_coeffs
  std::optional<std::vector<std::uint16_t>> phone_labels;  // length n_frames

  std::size_t n_frames() const { return frames.rows; }
  std::size_t n_coeffs() const { return frames.cols; }
};

struct Corpus {
  std::vector<FeatureSequence> sequences;
  std::vector<std::string> phone_inventory;    // ordered; phone labels index into it
  std::vector<std::string> speaker_inventory;  // first-occurrence order
  std::vector<std::string> word_inventory;     // first-occurrence order

  std::size_t n_coeffs() const { return sequences.empty() ? 0 : sequences.front().n_coeffs(); }

  std::size_t speaker_index(const std::string& s) const {
    const auto it = std::find(speaker_inventory.begin(), speaker_inventory.end(), s);
    if (it == speaker_inventory.end()) throw std::runtime_error("unknown speaker: " + s);
    return static_cast<std::size_t>(it - speaker_inventory.begin());
  }
};

// nf consecutive frames concatenated in time order, length nf * n_coeffs.
using StackedFrame = std::vector<double>;

struct SynthConfig {
  std::size_t n_phones = 8;
  std::size_t n_speakers = 4;
  std::size_t n_words = 20;
  std::size_t tokens_per_word_per_speaker = 3;
  std::size_t frames_per_phone = 8;   // mean; durations jittered +-30%
  std::size_t n_coeffs = 40;
  double phone_gain = 1.0;
  double speaker_gain = 0.7;
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;
};

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8
};

// ---------------------------------------------------------------------------
// Frame stacking
// ---------------------------------------------------------------------------

// Concatenates frames center-(nf-1)/2 .. center+(nf-1)/2; indices outside the
// sequence are clamped to the nearest valid frame, so every frame can serve
// as a center.
inline StackedFrame stack_frames(const FeatureSequence& seq, std::size_t center, std::size_t nf) {
  if (center >= seq.n_frames())
    throw std::invalid_argument("stack_frames: center " + std::to_string(center) +
                                " out of range for token " + seq.token_id);
  if (nf == 0 || nf % 2 == 0)
    throw std::invalid_argument("stack_frames: nf must be odd, got " + std::to_string(nf));
  const std::size_t nc = seq.n_coeffs();
  const long half = static_cast<long>(nf / 2);
  StackedFrame out(nf * nc);
  const long last = static_cast<long>(seq.n_frames()) - 1;
  for (long k = -half; k <= half; ++k) {
    long f = static_cast<long>(center) + k;
    f = std::clamp(f, 0L, last);
    const auto src = seq.frames.row(static_cast<std::size_t>(f));
    std::copy(src.begin(), src.end(), out.begin() + (k + half) * static_cast<long>(nc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_phones < 1 || cfg.n_speakers < 1 || cfg.n_words < 1 ||
      cfg.tokens_per_word_per_speaker < 1 || cfg.frames_per_phone < 1 || cfg.n_coeffs < 1)
    throw std::invalid_argument("SynthConfig: all counts must be >= 1");
  if (cfg.phone_gain < 0 || cfg.speaker_gain < 0 || cfg.noise_sigma < 0)
    throw std::invalid_argument("SynthConfig: gains and noise_sigma must be >= 0");
}

// Each word type is a fixed phone sequence of length 2-4; each frame is
// phone_gain * phone prototype + speaker_gain * speaker prototype + noise.
// Pure function of the config: same seed, same corpus.
inline Corpus generate_synthetic_corpus(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);

  std::vector<std::vector<double>> phone_proto(cfg.n_phones, std::vector<double>(cfg.n_coeffs));
  for (auto& p : phone_proto)
    for (auto& v : p) v = rng.normal();
  std::vector<std::vector<double>> speaker_proto(cfg.n_speakers, std::vector<double>(cfg.n_coeffs));
  for (auto& s : speaker_proto)
    for (auto& v : s) v = rng.normal();

  // Odd-indexed words are drawn as center-substituted variants of the most
  // recent word with an interior phone, so the corpus contains triphone
  // minimal pairs (same context, different center) at any size.
  std::vector<std::vector<std::size_t>> word_phones(cfg.n_words);
  std::size_t last_long = cfg.n_words;  // sentinel: none yet
  for (std::size_t w = 0; w < cfg.n_words; ++w) {
    auto& seq = word_phones[w];
    if (w % 2 == 1 && last_long < w && cfg.n_phones >= 2) {
      seq = word_phones[last_long];
      const std::size_t pos = 1 + static_cast<std::size_t>(rng.uniform_int(seq.size() - 2));
      const std::size_t shift = 1 + static_cast<std::size_t>(rng.uniform_int(cfg.n_phones - 1));
      seq[pos] = (seq[pos] + shift) % cfg.n_phones;
    } else {
      const std::size_t len = 2 + static_cast<std::size_t>(rng.uniform_int(3));  // 2..4
      seq.resize(len);
      for (auto& p : seq) p = static_cast<std::size_t>(rng.uniform_int(cfg.n_phones));
    }
    if (seq.size() >= 3) last_long = w;
  }

  Corpus corpus;
  for (std::size_t p = 0; p < cfg.n_phones; ++p) corpus.phone_inventory.push_back("p" + std::to_string(p));
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) corpus.speaker_inventory.push_back("s" + std::to_string(s));
  for (std::size_t w = 0; w < cfg.n_words; ++w) corpus.word_inventory.push_back("w" + std::to_string(w));

  const double fpp = static_cast<double>(cfg.frames_per_phone);
  for (std::size_t w = 0; w < cfg.n_words; ++w) {
    for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
      for (std::size_t t = 0; t < cfg.tokens_per_word_per_speaker; ++t) {
        FeatureSequence seq;
        seq.token_id = "w" + std::to_string(w) + "_s" + std::to_string(s) + "_t" + std::to_string(t);
        seq.word = corpus.word_inventory[w];
        seq.speaker = corpus.speaker_inventory[s];

        std::vector<std::uint16_t> labels;
        std::vector<std::size_t> durations;
        std::size_t total = 0;
        for (std::size_t pi = 0; pi < word_phones[w].size(); ++pi) {
          const double jitter = rng.uniform(0.7, 1.3);
          const std::size_t dur = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fpp * jitter)));
          durations.push_back(dur);
          total += dur;
        }
        seq.frames = Matrix(total, cfg.n_coeffs);
        std::size_t frame = 0;
        for (std::size_t pi = 0; pi < word_phones[w].size(); ++pi) {
          const std::size_t phone = word_phones[w][pi];
          for (std::size_t d = 0; d < durations[pi]; ++d, ++frame) {
            auto row = seq.frames.row(frame);
            for (std::size_t c = 0; c < cfg.n_coeffs; ++c)
              row[c] = cfg.phone_gain * phone_proto[phone][c] +
                       cfg.speaker_gain * speaker_proto[s][c] + cfg.noise_sigma * rng.normal();
            labels.push_back(static_cast<std::uint16_t>(phone));
          }
        }
        seq.phone_labels = std::move(labels);
        corpus.sequences.push_back(std::move(seq));
      }
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

// Per-coefficient zero mean / unit variance over all frames of the corpus
// (population statistics, std floored at 1e-8). The returned stats let the
// same transform be replayed on evaluation data.
inline std::pair<Corpus, FeatureStats> standardize(Corpus corpus) {
  if (corpus.sequences.empty()) throw std::invalid_argument("standardize: empty corpus");
  const std::size_t nc = corpus.n_coeffs();
  FeatureStats stats;
  stats.mean.assign(nc, 0.0);
  stats.stddev.assign(nc, 0.0);

  std::size_t n = 0;
  for (const auto& seq : corpus.sequences) {
    for (std::size_t f = 0; f < seq.n_frames(); ++f) {
      const auto row = seq.frames.row(f);
      for (std::size_t c = 0; c < nc; ++c) stats.mean[c] += row[c];
      ++n;
    }
  }
  for (std::size_t c = 0; c < nc; ++c) stats.mean[c] /= static_cast<double>(n);

  for (const auto& seq : corpus.sequences)
    for (std::size_t f = 0; f < seq.n_frames(); ++f) {
      const auto row = seq.frames.row(f);
      for (std::size_t c = 0; c < nc; ++c) {
        const double d = row[c] - stats.mean[c];
        stats.stddev[c] += d * d;
      }
    }
  for (std::size_t c = 0; c < nc; ++c)
    stats.stddev[c] = std::max(std::sqrt(stats.stddev[c] / static_cast<double>(n)), 1e-8);

  for (auto& seq : corpus.sequences)
    for (std::size_t f = 0; f < seq.n_frames(); ++f) {
      auto row = seq.frames.row(f);
      for (std::size_t c = 0; c < nc; ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
    }
  return {std::move(corpus), std::move(stats)};
}

inline void apply_standardization(Corpus& corpus, const FeatureStats& stats) {
  const std::size_t nc = corpus.n_coeffs();
  if (stats.mean.size() != nc || stats.stddev.size() != nc)
    throw std::invalid_argument("apply_standardization: stats dimension mismatch");
  for (auto& seq : corpus.sequences)
    for (std::size_t f = 0; f < seq.n_frames(); ++f) {
      auto row = seq.frames.row(f);
      for (std::size_t c = 0; c < nc; ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
    }
}

// ---------------------------------------------------------------------------
// File formats
//
//   manifest.csv   header "token_id,word,speaker,n_frames,path"; paths are
//                  relative to the manifest directory
//   <token>.fbnk   "FBNK", u32 version=1, u32 n_frames, u32 n_coeffs,
//                  n_frames*n_coeffs f32 little-endian, row-major
//   <token>.phnl   "PHNL", u32 n_frames, n_frames u16 phone indices
//   phones.json    ordered JSON array of phone symbols
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kFeatureFileVersion = 1;

inline std::string encode_feature_file(const Matrix& frames) {
  std::string buf;
  buf.reserve(16 + frames.data.size() * 4);
  buf += "FBNK";
  append_u32(buf, kFeatureFileVersion);
  append_u32(buf, static_cast<std::uint32_t>(frames.rows));
  append_u32(buf, static_cast<std::uint32_t>(frames.cols));
  for (double v : frames.data) append_f32(buf, static_cast<float>(v));
  return buf;
}

inline Matrix decode_feature_file(const std::string& buf, const std::string& context) {
  ByteReader r(buf, context);
  r.expect_magic("FBNK");
  const std::uint32_t version = r.u32();
  if (version != kFeatureFileVersion)
    r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t n_frames = r.u32();
  const std::uint32_t n_coeffs = r.u32();
  if (n_frames == 0 || n_coeffs == 0) r.fail("empty feature matrix");
  if (r.remaining() != static_cast<std::size_t>(n_frames) * n_coeffs * 4)
    r.fail("payload size does not match header");
  Matrix m(n_frames, n_coeffs);
  for (auto& v : m.data) v = static_cast<double>(r.f32());
  return m;
}

inline std::string encode_phone_file(const std::vector<std::uint16_t>& labels) {
  std::string buf;
  buf += "PHNL";
  append_u32(buf, static_cast<std::uint32_t>(labels.size()));
  for (std::uint16_t v : labels) append_u16(buf, v);
  return buf;
}

inline std::vector<std::uint16_t> decode_phone_file(const std::string& buf, const std::string& context) {
  ByteReader r(buf, context);
  r.expect_magic("PHNL");
  const std::uint32_t n = r.u32();
  if (r.remaining() != static_cast<std::size_t>(n) * 2) r.fail("payload size does not match header");
  std::vector<std::uint16_t> labels(n);
  for (auto& v : labels) v = r.u16();
  return labels;
}

inline std::filesystem::path phone_sidecar_path(std::filesystem::path feature_path) {
  feature_path.replace_extension(".phnl");
  return feature_path;
}

// Loads a manifest and every referenced feature file. Inventories are built
// from observed labels in first-occurrence order; the phone inventory comes
// from phones.json next to the manifest when sidecar label files exist.
inline Corpus load_corpus(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path))
    throw std::runtime_error("load_corpus: manifest not found: " + manifest_path.string());
  const std::filesystem::path dir = manifest_path.parent_path();

  Corpus corpus;
  const std::filesystem::path phones_path = dir / "phones.json";
  if (std::filesystem::exists(phones_path)) {
    const auto j = nlohmann::json::parse(read_file(phones_path));
    if (!j.is_array()) throw std::runtime_error("load_corpus: phones.json must be a JSON array");
    for (const auto& p : j) corpus.phone_inventory.push_back(p.get<std::string>());
  }

  const auto lines = split_lines(read_file(manifest_path));
  if (lines.empty()) throw std::runtime_error("load_corpus: empty manifest: " + manifest_path.string());
  const std::string expected_header = "token_id,word,speaker,n_frames,path";
  if (split_csv_line(lines[0]) != split_csv_line(expected_header))
    throw std::runtime_error("load_corpus: bad manifest header, expected \"" + expected_header + "\"");

  std::unordered_set<std::string> seen_ids;
  std::unordered_set<std::string> seen_speakers, seen_words;
  std::size_t n_coeffs = 0;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_csv_line(lines[li]);
    if (fields.size() != 5)
      throw std::runtime_error("load_corpus: manifest line " + std::to_string(li + 1) +
                               ": expected 5 fields, got " + std::to_string(fields.size()));
    FeatureSequence seq;
    seq.token_id = fields[0];
    seq.word = fields[1];
    seq.speaker = fields[2];
    const std::size_t manifest_frames = std::stoull(fields[3]);
    const std::filesystem::path feature_path = dir / fields[4];

    if (!seen_ids.insert(seq.token_id).second)
      throw std::runtime_error("load_corpus: duplicate token_id: " + seq.token_id);
    if (!std::filesystem::exists(feature_path))
      throw std::runtime_error("load_corpus: missing feature file: " + feature_path.string() +
                               " (token " + seq.token_id + ")");

    seq.frames = decode_feature_file(read_file(feature_path), "feature file " + feature_path.string());
    if (seq.n_frames() != manifest_frames)
      throw std::runtime_error("load_corpus: token " + seq.token_id + ": manifest says " +
                               std::to_string(manifest_frames) + " frames, file has " +
                               std::to_string(seq.n_frames()));
    if (n_coeffs == 0)
      n_coeffs = seq.n_coeffs();
    else if (seq.n_coeffs() != n_coeffs)
      throw std::runtime_error("load_corpus: token " + seq.token_id + ": n_coeffs " +
                               std::to_string(seq.n_coeffs()) + " differs from corpus value " +
                               std::to_string(n_coeffs));
    if (!seq.frames.all_finite())
      throw std::runtime_error("load_corpus: token " + seq.token_id + ": non-finite coefficient");

    const std::filesystem::path sidecar = phone_sidecar_path(feature_path);
    if (std::filesystem::exists(sidecar)) {
      auto labels = decode_phone_file(read_file(sidecar), "phone file " + sidecar.string());
      if (labels.size() != seq.n_frames())
        throw std::runtime_error("load_corpus: token " + seq.token_id +
                                 ": phone label count does not match frame count");
      if (corpus.phone_inventory.empty())
        throw std::runtime_error("load_corpus: token " + seq.token_id +
                                 " has phone labels but phones.json is missing");
      for (std::uint16_t l : labels)
        if (l >= corpus.phone_inventory.size())
          throw std::runtime_error("load_corpus: token " + seq.token_id + ": phone index " +
                                   std::to_string(l) + " outside inventory");
      seq.phone_labels = std::move(labels);
    }

    if (seen_words.insert(seq.word).second) corpus.word_inventory.push_back(seq.word);
    if (seen_speakers.insert(seq.speaker).second) corpus.speaker_inventory.push_back(seq.speaker);
    corpus.sequences.push_back(std::move(seq));
  }
  if (corpus.sequences.empty())
    throw std::runtime_error("load_corpus: manifest lists no tokens: " + manifest_path.string());
  return corpus;
}

// Writes manifest.csv, per-token feature/label files and phones.json into
// dir. Returns the manifest path. Token ids are used as file stems.
inline std::filesystem::path save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string manifest = "token_id,word,speaker,n_frames,path\n";
  for (const auto& seq : corpus.sequences) {
    const std::string stem = seq.token_id + ".fbnk";
    write_file_atomic(dir / stem, encode_feature_file(seq.frames));
    if (seq.phone_labels)
      write_file_atomic(dir / (seq.token_id + ".phnl"), encode_phone_file(*seq.phone_labels));
    manifest += seq.token_id + "," + seq.word + "," + seq.speaker + "," +
                std::to_string(seq.n_frames()) + "," + stem + "\n";
  }
  if (!corpus.phone_inventory.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : corpus.phone_inventory) j.push_back(p);
    write_file_atomic(dir / "phones.json", j.dump() + "\n");
  }
  const std::filesystem::path manifest_path = dir / "manifest.csv";
  write_file_atomic(manifest_path, manifest);
  return manifest_path;
}

}  // namespace abnet

#endif  // ABNET_CORPUS_HPP
