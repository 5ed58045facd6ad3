// abnet/classifier.hpp

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

#ifndef ABNET_CLASSIFIER_HPP
#define ABNET_CLASSIFIER_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "abnet/network.hpp"
#include "abnet/rng.hpp"

namespace abnet {

// Fully supervised frame classifier used as a control: sigmoid hidden layers,
// softmax phone output, inverted dropout during training.
struct ClassifierConfig {
  std::size_t input_dim = 440;
  std::vector<std::size_t> hidden_dims = {2400, 2400, 2400, 2400};
  std::size_t n_classes = 46;
  double dropout_input = 0.2;
  double dropout_hidden = 0.5;
  std::uint64_t init_seed = 0;
};

struct ClassifierParams {
  std::vector<LayerParams> hidden;
  LayerParams output;

  std::vector<std::vector<double>*> arrays() {
    std::vector<std::vector<double>*> out;
    for (auto& l : hidden) {
      out.push_back(&l.w.data);
      out.push_back(&l.b);
    }
    out.push_back(&output.w.data);
    out.push_back(&output.b);
    return out;
  }
  std::vector<const std::vector<double>*> arrays() const {
    std::vector<const std::vector<double>*> out;
    for (const auto& l : hidden) {
      out.push_back(&l.w.data);
      out.push_back(&l.b);
    }
    out.push_back(&output.w.data);
    out.push_back(&output.b);
    return out;
  }
};

struct LabeledFrame {
  StackedFrame x;
  std::size_t label = 0;
};

inline void validate(const ClassifierConfig& cfg) {
  if (cfg.n_classes < 2) throw std::invalid_argument("ClassifierConfig: n_classes must be >= 2");
  if (cfg.dropout_input < 0.0 || cfg.dropout_input >= 1.0 || cfg.dropout_hidden < 0.0 ||
      cfg.dropout_hidden >= 1.0)
    throw std::invalid_argument("ClassifierConfig: dropout probabilities must be in [0, 1)");
  if (cfg.hidden_dims.empty()) throw std::invalid_argument("ClassifierConfig: need >= 1 hidden layer");
}

inline ClassifierParams init_classifier(const ClassifierConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.init_seed);
  ClassifierParams p;
  std::size_t in = cfg.input_dim;
  for (std::size_t d : cfg.hidden_dims) {
    p.hidden.push_back(detail::glorot_layer(d, in, rng));
    in = d;
  }
  p.output = detail::glorot_layer(cfg.n_classes, in, rng);
  return p;
}

namespace detail {

inline void softmax_inplace(std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace detail

// Inference-time posteriors: no dropout, softmax output summing to 1.
inline std::vector<double> classifier_forward(const ClassifierParams& params, std::span<const double> x) {
  if (x.size() != params.hidden.front().w.cols)
    throw std::invalid_argument("classifier_forward: input dim mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> z;
  for (const auto& layer : params.hidden) {
    detail::affine(layer, cur, z);
    for (double& v : z) v = detail::sigmoid(v);
    cur = z;
  }
  detail::affine(params.output, cur, z);
  detail::softmax_inplace(z);
  return z;
}

// One training evaluation over a batch: mean cross-entropy loss and exact
// gradients. Dropout masks are Bernoulli(1-p) with surviving activations
// scaled by 1/(1-p); passing rng = nullptr (or zero rates) disables dropout,
// which makes the loss deterministic and finite-difference checkable.
inline std::pair<double, ClassifierParams> classifier_backward(const ClassifierConfig& cfg,
                                                               const ClassifierParams& params,
                                                               std::span<const LabeledFrame> batch,
                                                               Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("classifier_backward: empty batch");
  ClassifierParams grads;
  for (const auto& l : params.hidden)
    grads.hidden.push_back({Matrix(l.w.rows, l.w.cols), std::vector<double>(l.b.size(), 0.0)});
  grads.output = {Matrix(params.output.w.rows, params.output.w.cols),
                  std::vector<double>(params.output.b.size(), 0.0)};

  const std::size_t n_layers = params.hidden.size();
  double loss_sum = 0.0;

  std::vector<std::vector<double>> act(n_layers);
  std::vector<std::vector<double>> mask(n_layers);
  std::vector<double> input, input_mask, z;

  for (const auto& frame : batch) {
    if (frame.label >= cfg.n_classes)
      throw std::invalid_argument("classifier_backward: label " + std::to_string(frame.label) +
                                  " out of range (n_classes=" + std::to_string(cfg.n_classes) + ")");
    // input dropout
    input.assign(frame.x.begin(), frame.x.end());
    input_mask.assign(input.size(), 1.0);
    if (dropout_rng && cfg.dropout_input > 0.0) {
      const double keep = 1.0 - cfg.dropout_input;
      for (std::size_t i = 0; i < input.size(); ++i) {
        input_mask[i] = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        input[i] *= input_mask[i];
      }
    }
    // hidden layers with dropout on activations
    std::span<const double> cur = input;
    for (std::size_t k = 0; k < n_layers; ++k) {
      detail::affine(params.hidden[k], cur, z);
      act[k].resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) act[k][i] = detail::sigmoid(z[i]);
      mask[k].assign(z.size(), 1.0);
      if (dropout_rng && cfg.dropout_hidden > 0.0) {
        const double keep = 1.0 - cfg.dropout_hidden;
        for (std::size_t i = 0; i < act[k].size(); ++i) {
          mask[k][i] = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
          act[k][i] *= mask[k][i];
        }
      }
      cur = act[k];
    }
    detail::affine(params.output, cur, z);
    detail::softmax_inplace(z);
    const double p_true = std::max(z[frame.label], 1e-300);
    loss_sum += -std::log(p_true);

    // backward: d loss / d logits = posterior - onehot
    std::vector<double> delta = z;
    delta[frame.label] -= 1.0;

    const std::vector<double>& top = act[n_layers - 1];
    std::vector<double> next(top.size(), 0.0);
    for (std::size_t r = 0; r < params.output.w.rows; ++r) {
      const double g = delta[r];
      grads.output.b[r] += g;
      auto wg = grads.output.w.row(r);
      const auto wr = params.output.w.row(r);
      for (std::size_t c = 0; c < params.output.w.cols; ++c) {
        wg[c] += g * top[c];
        next[c] += g * wr[c];
      }
    }
    delta = std::move(next);

    for (std::size_t k = n_layers; k-- > 0;) {
      // undo the mask scaling to recover the plain sigmoid value
      std::span<const double> prev = k == 0 ? std::span<const double>(input) : act[k - 1];
      std::vector<double> below(prev.size(), 0.0);
      for (std::size_t r = 0; r < params.hidden[k].w.rows; ++r) {
        const double a_raw = mask[k][r] > 0.0 ? act[k][r] / mask[k][r] : 0.0;
        const double dz = delta[r] * mask[k][r] * a_raw * (1.0 - a_raw);
        if (dz == 0.0) continue;
        grads.hidden[k].b[r] += dz;
        auto wg = grads.hidden[k].w.row(r);
        const auto wr = params.hidden[k].w.row(r);
        for (std::size_t c = 0; c < params.hidden[k].w.cols; ++c) {
          wg[c] += dz * prev[c];
          below[c] += dz * wr[c];
        }
      }
      delta = std::move(below);
    }
    // gradient w.r.t. the raw input would pass through input_mask; inputs are
    // data, not parameters, so it stops here.
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto* arr : grads.arrays())
    for (double& v : *arr) v *= inv_n;
  return {loss_sum * inv_n, grads};
}

// ---------------------------------------------------------------------------
// Model file (same container as the siamese net, kind = "classifier")
// ---------------------------------------------------------------------------

inline void save_classifier(const std::filesystem::path& path, const ClassifierConfig& cfg,
                            const ClassifierParams& params) {
  nlohmann::json header = {{"kind", "classifier"},
                           {"input_dim", cfg.input_dim},
                           {"hidden_dims", cfg.hidden_dims},
                           {"n_classes", cfg.n_classes},
                           {"dropout_input", cfg.dropout_input},
                           {"dropout_hidden", cfg.dropout_hidden},
                           {"init_seed", cfg.init_seed}};
  write_file_atomic(path, detail::encode_model(header, params.arrays()));
}

inline std::pair<ClassifierConfig, ClassifierParams> load_classifier(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  ByteReader r(buf, "model file " + path.string());
  const nlohmann::json header = detail::decode_model_header(r);
  if (header.at("kind").get<std::string>() != "classifier")
    r.fail("not a classifier model (kind=" + header.at("kind").get<std::string>() + ")");
  ClassifierConfig cfg;
  cfg.input_dim = header.at("input_dim").get<std::size_t>();
  cfg.hidden_dims = header.at("hidden_dims").get<std::vector<std::size_t>>();
  cfg.n_classes = header.at("n_classes").get<std::size_t>();
  cfg.dropout_input = header.at("dropout_input").get<double>();
  cfg.dropout_hidden = header.at("dropout_hidden").get<double>();
  cfg.init_seed = header.at("init_seed").get<std::uint64_t>();
  ClassifierParams params = init_classifier(cfg);
  detail::decode_model_arrays(r, params.arrays());
  return {cfg, params};
}

}  // namespace abnet

#endif  // ABNET_CLASSIFIER_HPP
