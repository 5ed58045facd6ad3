// abnet/probe.hpp

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

#ifndef ABNET_PROBE_HPP
#define ABNET_PROBE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "abnet/corpus.hpp"
#include "abnet/network.hpp"
#include "abnet/rng.hpp"

namespace abnet {

// ---------------------------------------------------------------------------
// Between/within class variance ratio (F statistic with df correction):
//   between = sum_c n_c (mean_c - grand)^2 / (C - 1)
//   within  = sum_c sum_i (a_i - mean_c)^2 / (N - C)
// Zero within-class variance with nonzero between maps to the infinity
// sentinel; a constant activation is defined as 0.
// ---------------------------------------------------------------------------

inline double variance_ratio(std::span<const double> activations, std::span<const std::size_t> labels) {
  if (activations.empty()) throw std::invalid_argument("variance_ratio: empty input");
  if (activations.size() != labels.size())
    throw std::invalid_argument("variance_ratio: activation/label length mismatch");

  double lo = activations[0], hi = activations[0];
  for (double v : activations) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) return 0.0;

  struct ClassStat {
    std::size_t n = 0;
    double sum = 0.0;
  };
  std::map<std::size_t, ClassStat> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& c = classes[labels[i]];
    ++c.n;
    c.sum += activations[i];
  }
  const std::size_t n_classes = classes.size();
  if (n_classes < 2) throw std::invalid_argument("variance_ratio: need >= 2 classes");
  const std::size_t n = activations.size();

  double grand = 0.0;
  for (double v : activations) grand += v;
  grand /= static_cast<double>(n);

  double between = 0.0;
  for (const auto& [label, c] : classes) {
    const double mean = c.sum / static_cast<double>(c.n);
    const double d = mean - grand;
    between += static_cast<double>(c.n) * d * d;
  }
  between /= static_cast<double>(n_classes - 1);

  double within_ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = classes[labels[i]];
    const double d = activations[i] - c.sum / static_cast<double>(c.n);
    within_ss += d * d;
  }
  const double within =
      n > n_classes ? within_ss / static_cast<double>(n - n_classes) : 0.0;

  if (within == 0.0) return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return between / within;
}

// ---------------------------------------------------------------------------
// Median-split typology
// ---------------------------------------------------------------------------

enum class Typology { phone, speaker, both, none };

inline const char* to_string(Typology t) {
  switch (t) {
    case Typology::phone: return "phone";
    case Typology::speaker: return "speaker";
    case Typology::both: return "both";
    case Typology::none: return "none";
  }
  return "?";
}

// Lower-of-two median: strictly-greater comparison then splits an even count
// of distinct values exactly in half. Infinity sorts above every finite
// value.
inline double median_lower(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("median_lower: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}

inline Typology classify_unit(double f_phone, double f_speaker, double median_phone,
                              double median_speaker) {
  const bool phone = f_phone > median_phone;
  const bool speaker = f_speaker > median_speaker;
  if (phone && speaker) return Typology::both;
  if (phone) return Typology::phone;
  if (speaker) return Typology::speaker;
  return Typology::none;
}

// Classifies units against medians computed over the given units themselves.
inline std::vector<Typology> classify_units(std::span<const double> f_phone,
                                            std::span<const double> f_speaker) {
  if (f_phone.size() != f_speaker.size())
    throw std::invalid_argument("classify_units: ratio list length mismatch");
  if (f_phone.empty()) throw std::invalid_argument("classify_units: empty input");
  const double mp = median_lower(f_phone);
  const double ms = median_lower(f_speaker);
  std::vector<Typology> out(f_phone.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = classify_unit(f_phone[i], f_speaker[i], mp, ms);
  return out;
}

// ---------------------------------------------------------------------------
// Layer report
// ---------------------------------------------------------------------------

struct UnitSpecificity {
  std::string layer;
  std::size_t unit = 0;
  double f_phone = 0.0;
  double f_speaker = 0.0;
  Typology typology = Typology::none;
};

struct LayerSummary {
  std::string layer;
  std::size_t width = 0;
  // counts indexed by Typology order: phone, speaker, both, none
  std::array<std::size_t, 4> counts{};
};

struct SpecificityReport {
  std::vector<UnitSpecificity> units;  // input, hidden layers, heads
  std::vector<LayerSummary> layers;
  double median_phone = 0.0;    // computed over hidden-layer units only
  double median_speaker = 0.0;
  std::size_t nf = 0;
  std::size_t n_coeffs = 0;
};

struct ProbeOptions {
  std::size_t frame_cap = 0;  // 0 = use every frame
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Probes every unit of the network (and every raw input dimension) on the
// corpus: per-unit phone and speaker variance ratios, then the 4-way typology
// against the network-wide medians. Medians pool hidden-layer units only;
// input dimensions and embedding heads are classified against them but do not
// shift them.
inline SpecificityReport layer_report(const NetworkParams& params, const Corpus& corpus,
                                      const ProbeOptions& opts = {}) {
  if (corpus.sequences.empty()) throw std::invalid_argument("layer_report: empty corpus");
  if (corpus.speaker_inventory.size() < 2)
    throw std::invalid_argument("layer_report: need >= 2 speakers");
  if (params.hidden.empty()) throw std::invalid_argument("layer_report: network has no hidden layers");
  const std::size_t n_coeffs = corpus.n_coeffs();
  const std::size_t input_dim = params.hidden.front().w.cols;
  if (input_dim % n_coeffs != 0)
    throw std::invalid_argument("layer_report: model input dim not a multiple of n_coeffs");
  const std::size_t nf = input_dim / n_coeffs;
  if (nf % 2 == 0) throw std::invalid_argument("layer_report: derived nf is even");

  // sample frame positions
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    const auto& seq = corpus.sequences[s];
    if (!seq.phone_labels)
      throw std::runtime_error("layer_report: token " + seq.token_id + " has no phone labels");
    for (std::size_t f = 0; f < seq.n_frames(); ++f) positions.emplace_back(s, f);
  }
  if (opts.frame_cap > 0 && positions.size() > opts.frame_cap) {
    Rng rng(opts.seed);
    std::vector<std::pair<std::size_t, std::size_t>> sampled;
    for (std::size_t i : rng.sample_without_replacement(positions.size(), opts.frame_cap))
      sampled.push_back(positions[i]);
    positions = std::move(sampled);
  }
  const std::size_t n_samples = positions.size();

  // layer layout: input, hidden1..K, word_head, speaker_head
  std::vector<std::string> layer_names = {"input"};
  std::vector<std::size_t> layer_widths = {input_dim};
  for (std::size_t k = 0; k < params.hidden.size(); ++k) {
    layer_names.push_back("hidden" + std::to_string(k + 1));
    layer_widths.push_back(params.hidden[k].w.rows);
  }
  layer_names.push_back("word_head");
  layer_widths.push_back(params.word_head.w.rows);
  layer_names.push_back("speaker_head");
  layer_widths.push_back(params.speaker_head.w.rows);
  const std::size_t n_layers = layer_names.size();

  std::vector<Matrix> values(n_layers);  // n_samples x width, per layer
  for (std::size_t l = 0; l < n_layers; ++l) values[l] = Matrix(n_samples, layer_widths[l]);
  std::vector<std::size_t> phone_label(n_samples), speaker_label(n_samples);

  parallel_for(n_samples, opts.threads, [&](std::size_t i) {
    const auto [s, f] = positions[i];
    const auto& seq = corpus.sequences[s];
    const StackedFrame x = stack_frames(seq, f, nf);
    const ForwardTrace t = forward(params, x);
    phone_label[i] = (*seq.phone_labels)[f];
    speaker_label[i] = corpus.speaker_index(seq.speaker);
    std::copy(x.begin(), x.end(), values[0].row(i).begin());
    for (std::size_t k = 0; k < t.act.size(); ++k)
      std::copy(t.act[k].begin(), t.act[k].end(), values[1 + k].row(i).begin());
    std::copy(t.word_embed.begin(), t.word_embed.end(), values[n_layers - 2].row(i).begin());
    std::copy(t.speaker_embed.begin(), t.speaker_embed.end(), values[n_layers - 1].row(i).begin());
  });

  SpecificityReport report;
  report.nf = nf;
  report.n_coeffs = n_coeffs;

  std::vector<std::vector<double>> fp(n_layers), fs(n_layers);
  std::vector<double> column(n_samples);
  for (std::size_t l = 0; l < n_layers; ++l) {
    fp[l].resize(layer_widths[l]);
    fs[l].resize(layer_widths[l]);
    for (std::size_t u = 0; u < layer_widths[l]; ++u) {
      for (std::size_t i = 0; i < n_samples; ++i) column[i] = values[l](i, u);
      fp[l][u] = variance_ratio(column, phone_label);
      fs[l][u] = variance_ratio(column, speaker_label);
    }
  }

  // medians over hidden-layer units, pooled
  std::vector<double> pooled_p, pooled_s;
  for (std::size_t l = 1; l + 2 < n_layers; ++l) {  // hidden layers only
    pooled_p.insert(pooled_p.end(), fp[l].begin(), fp[l].end());
    pooled_s.insert(pooled_s.end(), fs[l].begin(), fs[l].end());
  }
  report.median_phone = median_lower(pooled_p);
  report.median_speaker = median_lower(pooled_s);

  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerSummary summary;
    summary.layer = layer_names[l];
    summary.width = layer_widths[l];
    for (std::size_t u = 0; u < layer_widths[l]; ++u) {
      const Typology ty =
          classify_unit(fp[l][u], fs[l][u], report.median_phone, report.median_speaker);
      report.units.push_back({layer_names[l], u, fp[l][u], fs[l][u], ty});
      ++summary.counts[static_cast<std::size_t>(ty)];
    }
    report.layers.push_back(summary);
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV outputs
// ---------------------------------------------------------------------------

inline std::string encode_units_csv(const SpecificityReport& report) {
  std::string out = "layer,unit,f_phone,f_speaker,typology\n";
  for (const auto& u : report.units)
    out += u.layer + "," + std::to_string(u.unit) + "," + fmt_double(u.f_phone) + "," +
           fmt_double(u.f_speaker) + "," + to_string(u.typology) + "\n";
  return out;
}

// Input-dimension specificity arranged as the nf x n_coeffs stacking grid.
inline std::string encode_grid_csv(const SpecificityReport& report) {
  std::string out = "frame_offset,coeff_index,f_phone,f_speaker\n";
  for (const auto& u : report.units) {
    if (u.layer != "input") continue;
    const std::size_t offset = u.unit / report.n_coeffs;
    const std::size_t coeff = u.unit % report.n_coeffs;
    out += std::to_string(offset) + "," + std::to_string(coeff) + "," + fmt_double(u.f_phone) +
           "," + fmt_double(u.f_speaker) + "\n";
  }
  return out;
}

}  // namespace abnet

#endif  // ABNET_PROBE_HPP
