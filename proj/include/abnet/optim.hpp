// abnet/optim.hpp

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

#ifndef ABNET_OPTIM_HPP
#define ABNET_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "abnet/classifier.hpp"
#include "abnet/io_util.hpp"
#include "abnet/network.hpp"
#include "abnet/rng.hpp"

namespace abnet {

struct AdadeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;
};

inline void validate(const AdadeltaConfig& cfg) {
  if (cfg.rho < 0.0 || cfg.rho >= 1.0) throw std::invalid_argument("AdadeltaConfig: rho must be in [0,1)");
  if (cfg.eps <= 0.0) throw std::invalid_argument("AdadeltaConfig: eps must be > 0");
}

// Per-parameter running averages of squared gradients and squared updates,
// zero-initialized, same shapes as the parameters they track.
template <typename P>
struct AdadeltaStateT {
  P acc_grad_sq;
  P acc_update_sq;
};

using AdadeltaState = AdadeltaStateT<NetworkParams>;

namespace detail {

template <typename P>
P zero_clone(const P& params) {
  P z = params;
  for (auto* arr : z.arrays())
    for (double& v : *arr) v = 0.0;
  return z;
}

}  // namespace detail

template <typename P>
AdadeltaStateT<P> make_adadelta_state(const P& params) {
  return {detail::zero_clone(params), detail::zero_clone(params)};
}

// One Adadelta update on a flat parameter array:
//   E[g^2]  <- rho E[g^2] + (1-rho) g^2
//   dx      <- -(sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps)) g
//   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
//   x       <- x + dx
inline void adadelta_update_array(std::span<double> x, std::span<const double> g,
                                  std::span<double> acc_g2, std::span<double> acc_dx2,
                                  const AdadeltaConfig& cfg) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(g[i])) throw std::runtime_error("adadelta_step: non-finite gradient");
    acc_g2[i] = cfg.rho * acc_g2[i] + (1.0 - cfg.rho) * g[i] * g[i];
    const double dx = -(std::sqrt(acc_dx2[i] + cfg.eps) / std::sqrt(acc_g2[i] + cfg.eps)) * g[i];
    acc_dx2[i] = cfg.rho * acc_dx2[i] + (1.0 - cfg.rho) * dx * dx;
    x[i] += dx;
  }
}

template <typename P>
void adadelta_step(P& params, const P& grads, AdadeltaStateT<P>& state, const AdadeltaConfig& cfg) {
  auto xs = params.arrays();
  const auto gs = grads.arrays();
  auto e1 = state.acc_grad_sq.arrays();
  auto e2 = state.acc_update_sq.arrays();
  if (gs.size() != xs.size()) throw std::invalid_argument("adadelta_step: shape mismatch");
  for (std::size_t a = 0; a < xs.size(); ++a) {
    if (gs[a]->size() != xs[a]->size()) throw std::invalid_argument("adadelta_step: shape mismatch");
    adadelta_update_array(*xs[a], *gs[a], *e1[a], *e2[a], cfg);
  }
}

// ---------------------------------------------------------------------------
// Train/dev split
// ---------------------------------------------------------------------------

struct TrainDevSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};

// Seeded shuffle, then the first max(1, round(dev_fraction * n)) indices form
// the dev set. Disjoint and exhaustive by construction.
inline TrainDevSplit split_train_dev(std::size_t n_examples, double dev_fraction, std::uint64_t seed) {
  if (dev_fraction <= 0.0 || dev_fraction >= 1.0)
    throw std::invalid_argument("split_train_dev: dev_fraction must be in (0,1)");
  const std::size_t n_dev = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(n_examples))));
  if (n_examples < n_dev + 1)
    throw std::invalid_argument("split_train_dev: too few examples (" + std::to_string(n_examples) +
                                ") for a non-empty train split");
  std::vector<std::size_t> idx(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  TrainDevSplit split;
  split.dev.assign(idx.begin(), idx.begin() + static_cast<long>(n_dev));
  split.train.assign(idx.begin() + static_cast<long>(n_dev), idx.end());
  return split;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t max_epochs = 10;
  std::size_t patience = 5;      // epochs without > 1e-6 dev improvement
  double dev_fraction = 0.10;
  LossMode mode = LossMode::multitask;
  std::uint64_t shuffle_seed = 0;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (cfg.patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
  if (cfg.dev_fraction <= 0.0 || cfg.dev_fraction >= 1.0)
    throw std::invalid_argument("TrainConfig: dev_fraction must be in (0,1)");
}

// One monitor row: mean mode loss plus mean head cosines for the four
// same/different conditions. A condition with no examples stays unset.
struct CurveRow {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  std::optional<double> cos_same_word;
  std::optional<double> cos_diff_word;
  std::optional<double> cos_same_speaker;
  std::optional<double> cos_diff_speaker;
};

using LearningCurve = std::vector<CurveRow>;

// Mean loss and condition-wise cosine similarities over a split: word-head
// cosine split by the word label, speaker-head cosine split by the speaker
// label.
inline CurveRow curve_point(const NetworkParams& params, const std::vector<FramePairExample>& examples,
                            std::span<const std::size_t> subset, LossMode mode,
                            const std::string& split_tag, std::size_t epoch = 0,
                            unsigned threads = 1) {
  if (subset.empty()) throw std::invalid_argument("curve_point: empty split");
  // parallel map, then a sequential index-order reduction so the result does
  // not depend on the thread count
  std::vector<PairEval> evals(subset.size());
  parallel_for(subset.size(), threads,
               [&](std::size_t k) { evals[k] = evaluate_pair(params, examples[subset[k]], mode); });
  double loss = 0.0;
  double sum_sw = 0.0, sum_dw = 0.0, sum_ss = 0.0, sum_ds = 0.0;
  std::size_t n_sw = 0, n_dw = 0, n_ss = 0, n_ds = 0;
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const PairEval& e = evals[k];
    const FramePairExample& ex = examples[subset[k]];
    loss += e.loss;
    if (ex.same_word) {
      sum_sw += e.cos_word;
      ++n_sw;
    } else {
      sum_dw += e.cos_word;
      ++n_dw;
    }
    if (ex.same_speaker) {
      sum_ss += e.cos_speaker;
      ++n_ss;
    } else {
      sum_ds += e.cos_speaker;
      ++n_ds;
    }
  }
  CurveRow row;
  row.epoch = epoch;
  row.split = split_tag;
  row.loss = loss / static_cast<double>(subset.size());
  if (n_sw) row.cos_same_word = sum_sw / static_cast<double>(n_sw);
  if (n_dw) row.cos_diff_word = sum_dw / static_cast<double>(n_dw);
  if (n_ss) row.cos_same_speaker = sum_ss / static_cast<double>(n_ss);
  if (n_ds) row.cos_diff_speaker = sum_ds / static_cast<double>(n_ds);
  return row;
}

struct TrainResult {
  NetworkParams best_params;
  LearningCurve curve;
  std::size_t best_epoch = 0;     // 1-based; 0 when no epoch ran
  double best_dev_loss = 0.0;
  std::size_t epochs_run = 0;
};

// Minibatch Adadelta with a held-out dev split and early stopping: training
// stops once the dev loss has not improved by more than 1e-6 for `patience`
// consecutive epochs, and the parameters snapshotted at the best dev loss are
// returned. Bit-deterministic given (init_seed, shuffle_seed, data).
inline TrainResult train(const std::vector<FramePairExample>& examples, const NetworkConfig& net_cfg,
                         const AdadeltaConfig& ada_cfg, const TrainConfig& train_cfg,
                         unsigned threads = 1) {
  validate(ada_cfg);
  validate(train_cfg);
  if (examples.empty()) throw std::invalid_argument("train: no examples");

  TrainResult result;
  result.best_params = init_params(net_cfg);
  if (train_cfg.max_epochs == 0) return result;

  const TrainDevSplit split =
      split_train_dev(examples.size(), train_cfg.dev_fraction, train_cfg.shuffle_seed);
  NetworkParams params = result.best_params;
  AdadeltaState state = make_adadelta_state(params);
  // distinct stream from the split
  Rng shuffle_rng(train_cfg.shuffle_seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order = split.train;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t len = std::min(train_cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      auto [batch_loss, grads] = backward(params, examples, batch, train_cfg.mode);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: diverged (non-finite loss) at epoch " + std::to_string(epoch));
      adadelta_step(params, grads, state, ada_cfg);
    }

    const CurveRow train_row =
        curve_point(params, examples, split.train, train_cfg.mode, "train", epoch, threads);
    const CurveRow dev_row =
        curve_point(params, examples, split.dev, train_cfg.mode, "dev", epoch, threads);
    result.curve.push_back(train_row);
    result.curve.push_back(dev_row);
    result.epochs_run = epoch;
    const double dev_loss = dev_row.loss;
    if (!std::isfinite(dev_loss))
      throw std::runtime_error("train: diverged (non-finite dev loss) at epoch " + std::to_string(epoch));

    if (dev_loss < best - 1e-6) {
      best = dev_loss;
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_dev_loss = dev_loss;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= train_cfg.patience) break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Learning-curve CSV
// ---------------------------------------------------------------------------

inline std::string encode_curve_csv(const LearningCurve& curve) {
  std::string out = "epoch,split,loss,cos_same_word,cos_diff_word,cos_same_spkr,cos_diff_spkr\n";
  for (const auto& row : curve) {
    out += std::to_string(row.epoch) + "," + row.split + "," + fmt_double(row.loss) + "," +
           fmt_double(row.cos_same_word) + "," + fmt_double(row.cos_diff_word) + "," +
           fmt_double(row.cos_same_speaker) + "," + fmt_double(row.cos_diff_speaker) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier training (control model): fixed epoch budget, same optimizer.
// ---------------------------------------------------------------------------

struct ClassifierTrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 10;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t dropout_seed = 1;
};

inline ClassifierParams train_classifier(const ClassifierConfig& cfg,
                                         const std::vector<LabeledFrame>& frames,
                                         const AdadeltaConfig& ada_cfg,
                                         const ClassifierTrainConfig& train_cfg) {
  validate(ada_cfg);
  if (frames.empty()) throw std::invalid_argument("train_classifier: no frames");
  ClassifierParams params = init_classifier(cfg);
  auto state = make_adadelta_state(params);
  Rng shuffle_rng(train_cfg.shuffle_seed);
  Rng dropout_rng(train_cfg.dropout_seed);
  const bool use_dropout = cfg.dropout_input > 0.0 || cfg.dropout_hidden > 0.0;

  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LabeledFrame> batch;
  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t len = std::min(train_cfg.batch_size, order.size() - start);
      batch.clear();
      for (std::size_t k = 0; k < len; ++k) batch.push_back(frames[order[start + k]]);
      auto [loss, grads] =
          classifier_backward(cfg, params, batch, use_dropout ? &dropout_rng : nullptr);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_classifier: diverged at epoch " + std::to_string(epoch + 1));
      adadelta_step(params, grads, state, ada_cfg);
    }
  }
  return params;
}

}  // namespace abnet

#endif  // ABNET_OPTIM_HPP
