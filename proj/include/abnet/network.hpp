// abnet/network.hpp

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

#ifndef ABNET_NETWORK_HPP
#define ABNET_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abnet/io_util.hpp"
#include "abnet/matrix.hpp"
#include "abnet/pairing.hpp"
#include "abnet/rng.hpp"

#include "json.hpp"

namespace abnet {

// Two-headed Siamese feedforward network: sigmoid hidden layers shared by
// both inputs of a pair, then two linear embedding heads. The word head is
// trained on same/different-word labels, the speaker head on
// same/different-speaker labels. Heads are linear because a cosine objective
// degenerates on strictly positive (sigmoid) outputs.
struct NetworkConfig {
  std::size_t input_dim = 440;  // nf * n_coeffs
  std::vector<std::size_t> hidden_dims = {500, 500, 500};
  std::size_t embed_dim = 100;
  std::uint64_t init_seed = 0;
};

struct LayerParams {
  Matrix w;               // out x in
  std::vector<double> b;  // out
};

struct NetworkParams {
  std::vector<LayerParams> hidden;
  LayerParams word_head;
  LayerParams speaker_head;

  // All parameter arrays in fixed (file) order.
  std::vector<std::vector<double>*> arrays() {
    std::vector<std::vector<double>*> out;
    for (auto& l : hidden) {
      out.push_back(&l.w.data);
      out.push_back(&l.b);
    }
    out.push_back(&word_head.w.data);
    out.push_back(&word_head.b);
    out.push_back(&speaker_head.w.data);
    out.push_back(&speaker_head.b);
    return out;
  }
  std::vector<const std::vector<double>*> arrays() const {
    std::vector<const std::vector<double>*> out;
    for (const auto& l : hidden) {
      out.push_back(&l.w.data);
      out.push_back(&l.b);
    }
    out.push_back(&word_head.w.data);
    out.push_back(&word_head.b);
    out.push_back(&speaker_head.w.data);
    out.push_back(&speaker_head.b);
    return out;
  }
};

using Gradients = NetworkParams;  // same shapes, one slot per parameter

struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;  // z_k per hidden layer
  std::vector<std::vector<double>> act;  // sigmoid(z_k)
  std::vector<double> word_embed;
  std::vector<double> speaker_embed;
};

enum class LossMode { multitask, word_only, speaker_only };

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::multitask: return "both";
    case LossMode::word_only: return "word_only";
    case LossMode::speaker_only: return "spkr_only";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Initialization and forward pass
// ---------------------------------------------------------------------------

namespace detail {

inline LayerParams glorot_layer(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  LayerParams l;
  l.w = Matrix(out_dim, in_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (auto& v : l.w.data) v = rng.uniform(-bound, bound);
  l.b.assign(out_dim, 0.0);
  return l;
}

inline void affine(const LayerParams& l, std::span<const double> x, std::vector<double>& out) {
  out.resize(l.w.rows);
  for (std::size_t r = 0; r < l.w.rows; ++r) out[r] = dot(l.w.row(r), x) + l.b[r];
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

// Glorot-uniform weights, zero biases; deterministic for a given seed.
inline NetworkParams init_params(const NetworkConfig& cfg) {
  if (cfg.input_dim < 1 || cfg.embed_dim < 1)
    throw std::invalid_argument("init_params: dimensions must be >= 1");
  if (cfg.hidden_dims.empty())
    throw std::invalid_argument("init_params: need >= 1 hidden layer");
  for (std::size_t d : cfg.hidden_dims)
    if (d < 1) throw std::invalid_argument("init_params: hidden dims must be >= 1");
  Rng rng(cfg.init_seed);
  NetworkParams p;
  std::size_t in = cfg.input_dim;
  for (std::size_t d : cfg.hidden_dims) {
    p.hidden.push_back(detail::glorot_layer(d, in, rng));
    in = d;
  }
  p.word_head = detail::glorot_layer(cfg.embed_dim, in, rng);
  p.speaker_head = detail::glorot_layer(cfg.embed_dim, in, rng);
  return p;
}

inline ForwardTrace forward(const NetworkParams& params, std::span<const double> x) {
  if (params.hidden.empty()) throw std::invalid_argument("forward: network has no hidden layers");
  if (x.size() != params.hidden.front().w.cols)
    throw std::invalid_argument("forward: input dim " + std::to_string(x.size()) +
                                " does not match network input " +
                                std::to_string(params.hidden.front().w.cols));
  ForwardTrace t;
  t.input.assign(x.begin(), x.end());
  std::span<const double> cur = t.input;
  for (const auto& layer : params.hidden) {
    std::vector<double> z;
    detail::affine(layer, cur, z);
    std::vector<double> a(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = detail::sigmoid(z[i]);
    t.pre.push_back(std::move(z));
    t.act.push_back(std::move(a));
    cur = t.act.back();
  }
  detail::affine(params.word_head, cur, t.word_embed);
  detail::affine(params.speaker_head, cur, t.speaker_embed);
  return t;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Cosine similarity with a zero-norm guard: value 0 (and, downstream,
// gradient 0) when either norm is below 1e-12. Bit-identical inputs give
// exactly 1; the result is clamped into [-1, 1].
inline double cos_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cos_sim: length mismatch");
  double uv = 0.0, uu = 0.0, vv = 0.0;
  bool identical = true;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    identical = identical && u[i] == v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  if (identical) return 1.0;
  return std::clamp(uv / (nu * nv), -1.0, 1.0);
}

// same pairs are pulled to colinearity (1 - cos), different pairs to
// orthogonality (cos^2).
inline double coscos2_loss(std::span<const double> y_a, std::span<const double> y_b, bool same) {
  const double c = cos_sim(y_a, y_b);
  return same ? 1.0 - c : c * c;
}

inline double multitask_loss(const ForwardTrace& trace_a, const ForwardTrace& trace_b,
                             bool same_word, bool same_speaker) {
  return coscos2_loss(trace_a.word_embed, trace_b.word_embed, same_word) +
         coscos2_loss(trace_a.speaker_embed, trace_b.speaker_embed, same_speaker);
}

// Per-pair evaluation used by the training monitor: mode loss plus the raw
// head cosines.
struct PairEval {
  double loss = 0.0;
  double cos_word = 0.0;
  double cos_speaker = 0.0;
};

inline PairEval evaluate_pair(const NetworkParams& params, const FramePairExample& ex, LossMode mode) {
  const ForwardTrace ta = forward(params, ex.x_a);
  const ForwardTrace tb = forward(params, ex.x_b);
  PairEval e;
  e.cos_word = cos_sim(ta.word_embed, tb.word_embed);
  e.cos_speaker = cos_sim(ta.speaker_embed, tb.speaker_embed);
  const double lw = ex.same_word ? 1.0 - e.cos_word : e.cos_word * e.cos_word;
  const double ls = ex.same_speaker ? 1.0 - e.cos_speaker : e.cos_speaker * e.cos_speaker;
  switch (mode) {
    case LossMode::multitask: e.loss = lw + ls; break;
    case LossMode::word_only: e.loss = lw; break;
    case LossMode::speaker_only: e.loss = ls; break;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

inline Gradients zero_like(const NetworkParams& params) {
  Gradients g;
  for (const auto& l : params.hidden)
    g.hidden.push_back({Matrix(l.w.rows, l.w.cols), std::vector<double>(l.b.size(), 0.0)});
  g.word_head = {Matrix(params.word_head.w.rows, params.word_head.w.cols),
                 std::vector<double>(params.word_head.b.size(), 0.0)};
  g.speaker_head = {Matrix(params.speaker_head.w.rows, params.speaker_head.w.cols),
                    std::vector<double>(params.speaker_head.b.size(), 0.0)};
  return g;
}

// d cos(u,v) / du = v/(|u||v|) - (u.v) u / (|u|^3 |v|); zero under the guard.
// At u == v the true gradient is exactly zero (the cosine is at its maximum),
// so bit-identical embeddings short-circuit to zero instead of accumulating
// rounding residue.
inline void cos_grad(std::span<const double> u, std::span<const double> v, double scale,
                     std::vector<double>& g_u, std::vector<double>& g_v) {
  g_u.assign(u.size(), 0.0);
  g_v.assign(v.size(), 0.0);
  const double nu = std::sqrt(squared_norm(u));
  const double nv = std::sqrt(squared_norm(v));
  if (nu < 1e-12 || nv < 1e-12) return;
  bool identical = true;
  for (std::size_t i = 0; i < u.size() && identical; ++i) identical = u[i] == v[i];
  if (identical) return;
  const double uv = dot(u, v);
  const double inv = 1.0 / (nu * nv);
  const double cu = uv / (nu * nu * nu * nv);
  const double cv = uv / (nv * nv * nv * nu);
  for (std::size_t i = 0; i < u.size(); ++i) {
    g_u[i] = scale * (v[i] * inv - cu * u[i]);
    g_v[i] = scale * (u[i] * inv - cv * v[i]);
  }
}

// Accumulates one branch's gradients. g_word / g_speaker are the gradients at
// the head outputs (empty means that head is inactive and contributes
// nothing, leaving its parameters untouched).
inline void backprop_branch(const NetworkParams& params, const ForwardTrace& t,
                            const std::vector<double>& g_word, const std::vector<double>& g_speaker,
                            Gradients& grads) {
  const std::vector<double>& top_act = t.act.back();
  std::vector<double> delta(top_act.size(), 0.0);

  const auto apply_head = [&](const LayerParams& head, LayerParams& head_grad,
                              const std::vector<double>& g_y) {
    if (g_y.empty()) return;
    for (std::size_t r = 0; r < head.w.rows; ++r) {
      const double gr = g_y[r];
      head_grad.b[r] += gr;
      auto wrow = head_grad.w.row(r);
      const auto hrow = head.w.row(r);
      for (std::size_t c = 0; c < head.w.cols; ++c) {
        wrow[c] += gr * top_act[c];
        delta[c] += gr * hrow[c];
      }
    }
  };
  apply_head(params.word_head, grads.word_head, g_word);
  apply_head(params.speaker_head, grads.speaker_head, g_speaker);

  for (std::size_t k = params.hidden.size(); k-- > 0;) {
    const auto& layer = params.hidden[k];
    auto& lg = grads.hidden[k];
    const std::vector<double>& a = t.act[k];
    std::span<const double> prev = k == 0 ? std::span<const double>(t.input) : t.act[k - 1];
    std::vector<double> next_delta(prev.size(), 0.0);
    for (std::size_t r = 0; r < layer.w.rows; ++r) {
      const double dz = delta[r] * a[r] * (1.0 - a[r]);
      if (dz == 0.0) continue;
      lg.b[r] += dz;
      auto wrow = lg.w.row(r);
      const auto lrow = layer.w.row(r);
      for (std::size_t c = 0; c < layer.w.cols; ++c) {
        wrow[c] += dz * prev[c];
        next_delta[c] += dz * lrow[c];
      }
    }
    delta = std::move(next_delta);
  }
}

}  // namespace detail

// Mean batch loss and its exact gradients. Both branches share the same
// parameters, so each example contributes from both of its inputs. In
// word_only mode the speaker head receives no gradient at all (and
// symmetrically), which leaves the inactive head exactly at its initial
// state: a frozen random projection of the trunk.
inline std::pair<double, Gradients> backward(const NetworkParams& params,
                                             const std::vector<FramePairExample>& examples,
                                             std::span<const std::size_t> batch, LossMode mode) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  Gradients grads = detail::zero_like(params);
  const bool use_word = mode != LossMode::speaker_only;
  const bool use_speaker = mode != LossMode::word_only;

  double loss_sum = 0.0;
  std::vector<double> gw_a, gw_b, gs_a, gs_b;
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const FramePairExample& ex = examples[batch[bi]];
    const ForwardTrace ta = forward(params, ex.x_a);
    const ForwardTrace tb = forward(params, ex.x_b);

    gw_a.clear();
    gw_b.clear();
    gs_a.clear();
    gs_b.clear();
    double loss = 0.0;
    if (use_word) {
      const double c = cos_sim(ta.word_embed, tb.word_embed);
      loss += ex.same_word ? 1.0 - c : c * c;
      detail::cos_grad(ta.word_embed, tb.word_embed, ex.same_word ? -1.0 : 2.0 * c, gw_a, gw_b);
    }
    if (use_speaker) {
      const double c = cos_sim(ta.speaker_embed, tb.speaker_embed);
      loss += ex.same_speaker ? 1.0 - c : c * c;
      detail::cos_grad(ta.speaker_embed, tb.speaker_embed, ex.same_speaker ? -1.0 : 2.0 * c, gs_a,
                       gs_b);
    }
    if (!std::isfinite(loss))
      throw std::runtime_error("backward: non-finite loss at batch index " + std::to_string(bi));
    loss_sum += loss;

    detail::backprop_branch(params, ta, gw_a, gs_a, grads);
    detail::backprop_branch(params, tb, gw_b, gs_b, grads);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto* arr : grads.arrays())
    for (double& v : *arr) v *= inv_n;
  return {loss_sum * inv_n, grads};
}

inline std::pair<double, Gradients> backward(const NetworkParams& params,
                                             const std::vector<FramePairExample>& batch,
                                             LossMode mode) {
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return backward(params, batch, idx, mode);
}

// ---------------------------------------------------------------------------
// Model file: "ABNT", u32 version, u32 header length, JSON header,
// then every parameter array as f64 little-endian in arrays() order.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFileVersion = 1;

namespace detail {

inline std::string encode_model(const nlohmann::json& header,
                                const std::vector<const std::vector<double>*>& arrays) {
  std::string buf = "ABNT";
  append_u32(buf, kModelFileVersion);
  const std::string hdr = header.dump();
  append_u32(buf, static_cast<std::uint32_t>(hdr.size()));
  buf += hdr;
  for (const auto* arr : arrays)
    for (double v : *arr) append_f64(buf, v);
  return buf;
}

inline nlohmann::json decode_model_header(ByteReader& r) {
  r.expect_magic("ABNT");
  const std::uint32_t version = r.u32();
  if (version != kModelFileVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t len = r.u32();
  return nlohmann::json::parse(r.bytes(len));
}

inline void decode_model_arrays(ByteReader& r, const std::vector<std::vector<double>*>& arrays) {
  for (auto* arr : arrays)
    for (double& v : *arr) v = r.f64();
  if (!r.at_end()) r.fail("trailing bytes after parameters");
}

}  // namespace detail

inline void save_model(const std::filesystem::path& path, const NetworkConfig& cfg,
                       const NetworkParams& params) {
  nlohmann::json header = {{"kind", "siamese"},
                           {"input_dim", cfg.input_dim},
                           {"hidden_dims", cfg.hidden_dims},
                           {"embed_dim", cfg.embed_dim},
                           {"init_seed", cfg.init_seed}};
  write_file_atomic(path, detail::encode_model(header, params.arrays()));
}

inline std::pair<NetworkConfig, NetworkParams> load_model(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, "model file " + path.string());
  const nlohmann::json header = detail::decode_model_header(r);
  if (header.at("kind").get<std::string>() != "siamese")
    r.fail("not a siamese model (kind=" + header.at("kind").get<std::string>() + ")");
  NetworkConfig cfg;
  cfg.input_dim = header.at("input_dim").get<std::size_t>();
  cfg.hidden_dims = header.at("hidden_dims").get<std::vector<std::size_t>>();
  cfg.embed_dim = header.at("embed_dim").get<std::size_t>();
  cfg.init_seed = header.at("init_seed").get<std::uint64_t>();
  NetworkParams params = init_params(cfg);
  detail::decode_model_arrays(r, params.arrays());
  return {cfg, params};
}

}  // namespace abnet

#endif  // ABNET_NETWORK_HPP
