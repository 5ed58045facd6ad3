// tests/test_abx.cpp

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

#include "abnet/abx.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "doctest.h"
#include "test_util.hpp"

using namespace abnet;

namespace {

FeatureSequence labeled_sequence(const std::string& id, const std::string& word,
                                 const std::string& speaker,
                                 const std::vector<std::uint16_t>& labels, std::size_t n_coeffs,
                                 Rng& rng) {
  FeatureSequence seq = test::make_sequence(id, word, speaker, labels.size(), n_coeffs, rng);
  seq.phone_labels = labels;
  return seq;
}

Corpus with_phones(Corpus corpus, std::size_t n_phones) {
  for (std::size_t p = 0; p < n_phones; ++p) corpus.phone_inventory.push_back("p" + std::to_string(p));
  return corpus;
}

// Independent oracle: test every ordered token triple against the task
// definition directly.
std::vector<AbxTriplet> brute_force_triplets(const std::vector<TriphoneToken>& tokens, AbxTask task) {
  std::vector<AbxTriplet> out;
  for (std::size_t a = 0; a < tokens.size(); ++a)
    for (std::size_t b = 0; b < tokens.size(); ++b)
      for (std::size_t x = 0; x < tokens.size(); ++x) {
        if (a == b || x == a || x == b) continue;
        const auto& ta = tokens[a];
        const auto& tb = tokens[b];
        const auto& tx = tokens[x];
        if (ta.left != tb.left || ta.right != tb.right) continue;
        if (tx.left != ta.left || tx.right != ta.right) continue;
        bool ok;
        if (task == AbxTask::phone_talker)
          ok = ta.speaker == tb.speaker && ta.center != tb.center && tx.center == ta.center &&
               tx.speaker != ta.speaker;
        else
          ok = ta.center == tb.center && ta.speaker != tb.speaker && tx.speaker == ta.speaker &&
               tx.center != ta.center;
        if (ok) out.push_back({a, b, x});
      }
  return out;
}

std::set<std::tuple<std::size_t, std::size_t, std::size_t>> as_set(const std::vector<AbxTriplet>& v) {
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> s;
  for (const auto& t : v) s.insert({t.a, t.b, t.x});
  return s;
}

// four single-triphone tokens: two speakers x two centers, one shared context
std::vector<TriphoneToken> four_token_grid() {
  // (seq, left, center, right, speaker, begin, end)
  return {{0, 0, 1, 3, 0, 1, 3},
          {1, 0, 2, 3, 0, 1, 3},
          {2, 0, 1, 3, 1, 1, 3},
          {3, 0, 2, 3, 1, 1, 3}};
}

}  // namespace

TEST_CASE("extract_triphones: one interior run per trigram, spanning the center run") {
  Rng rng(40);
  Corpus corpus = with_phones(
      test::make_corpus({labeled_sequence("t0", "w", "s", {0, 0, 1, 1, 1, 2}, 3, rng)}), 3);
  const auto tokens = extract_triphones(corpus);
  REQUIRE(tokens.size() == 1);
  CHECK(tokens[0].left == 0);
  CHECK(tokens[0].center == 1);
  CHECK(tokens[0].right == 2);
  CHECK(tokens[0].frame_begin == 2);
  CHECK(tokens[0].frame_end == 5);
}

TEST_CASE("extract_triphones: sliding trigrams over runs") {
  Rng rng(41);
  Corpus corpus = with_phones(
      test::make_corpus({labeled_sequence("t0", "w", "s", {0, 1, 2, 1, 0}, 3, rng)}), 3);
  const auto tokens = extract_triphones(corpus);  // runs a,t,i,t,a
  REQUIRE(tokens.size() == 3);
  CHECK((tokens[0].left == 0 && tokens[0].center == 1 && tokens[0].right == 2));
  CHECK((tokens[1].left == 1 && tokens[1].center == 2 && tokens[1].right == 1));
  CHECK((tokens[2].left == 2 && tokens[2].center == 1 && tokens[2].right == 0));
}

TEST_CASE("extract_triphones: single-phone token yields nothing, missing labels are an error") {
  Rng rng(42);
  Corpus corpus =
      with_phones(test::make_corpus({labeled_sequence("t0", "w", "s", {1, 1, 1, 1}, 3, rng)}), 2);
  CHECK(extract_triphones(corpus).empty());
  Corpus bare = test::make_corpus({test::make_sequence("t1", "w", "s", 4, 3, rng)});
  CHECK_THROWS_WITH_AS(extract_triphones(bare), doctest::Contains("phone labels"),
                       std::runtime_error);
}

TEST_CASE("enumerate_triplets: 2 speakers x 2 centers x 1 context matches hand enumeration") {
  const auto tokens = four_token_grid();
  const auto pt = enumerate_triplets(tokens, AbxTask::phone_talker);
  CHECK(pt.size() == 4);
  CHECK(as_set(pt) == as_set(brute_force_triplets(tokens, AbxTask::phone_talker)));
  const auto tp = enumerate_triplets(tokens, AbxTask::talker_phone);
  CHECK(tp.size() == 4);
  CHECK(as_set(tp) == as_set(brute_force_triplets(tokens, AbxTask::talker_phone)));
}

TEST_CASE("enumerate_triplets: degenerate corpora yield zero triplets, not errors") {
  // one speaker only: phone_talker needs a different-speaker X
  std::vector<TriphoneToken> one_speaker = {{0, 0, 1, 3, 0, 0, 2}, {1, 0, 2, 3, 0, 0, 2}};
  CHECK(enumerate_triplets(one_speaker, AbxTask::phone_talker).empty());
  // one center only: talker_phone needs a different-center X
  std::vector<TriphoneToken> one_center = {{0, 0, 1, 3, 0, 0, 2}, {1, 0, 1, 3, 1, 0, 2}};
  CHECK(enumerate_triplets(one_center, AbxTask::talker_phone).empty());
}

TEST_CASE("enumerate_triplets: equals the brute-force oracle on random corpora") {
  Rng rng(43);
  for (int iter = 0; iter < 10; ++iter) {
    std::vector<TriphoneToken> tokens;
    const std::size_t n = 6 + rng.uniform_int(10);
    for (std::size_t i = 0; i < n; ++i)
      tokens.push_back({i, rng.uniform_int(2), rng.uniform_int(3), rng.uniform_int(2),
                        rng.uniform_int(3), 0, 2});
    for (AbxTask task : {AbxTask::phone_talker, AbxTask::talker_phone})
      CHECK(as_set(enumerate_triplets(tokens, task)) == as_set(brute_force_triplets(tokens, task)));
  }
}

TEST_CASE("enumerate_triplets: per-cell cap subsamples deterministically") {
  std::vector<TriphoneToken> tokens;
  // 3 tokens per (speaker, center) to inflate cells
  std::size_t seq = 0;
  for (std::size_t spk = 0; spk < 2; ++spk)
    for (std::size_t center = 1; center <= 2; ++center)
      for (int rep = 0; rep < 3; ++rep) tokens.push_back({seq++, 0, center, 3, spk, 0, 2});
  const auto full = enumerate_triplets(tokens, AbxTask::phone_talker, 0, 0);
  const auto capped1 = enumerate_triplets(tokens, AbxTask::phone_talker, 5, 9);
  const auto capped2 = enumerate_triplets(tokens, AbxTask::phone_talker, 5, 9);
  CHECK(full.size() > capped1.size());
  CHECK(as_set(capped1) == as_set(capped2));
  std::map<AbxCellKey, std::size_t> per_cell;
  for (const auto& t : capped1) per_cell[cell_key(tokens, t, AbxTask::phone_talker)]++;
  for (const auto& [key, count] : per_cell) CHECK(count <= 5);
}

TEST_CASE("dtw_cosine_distance: identity, single frames, path normalization") {
  Rng rng(44);
  const Matrix a = test::random_matrix(5, 3, rng);
  CHECK(dtw_cosine_distance(a, a) == 0.0);
  const Matrix u = test::random_matrix(1, 3, rng);
  const Matrix v = test::random_matrix(1, 3, rng);
  CHECK(dtw_cosine_distance(u, v) == frame_distance(u.row(0), v.row(0)));
  const Matrix b = test::random_matrix(4, 3, rng);
  const DtwPath path = dtw_align(a, b);
  CHECK(dtw_cosine_distance(a, b) ==
        doctest::Approx(path.cost / static_cast<double>(path.steps.size())).epsilon(1e-15));
  CHECK(dtw_cosine_distance(a, b) == dtw_cosine_distance(b, a));
}

TEST_CASE("score_triplet: strict comparisons and the tie rule") {
  std::vector<Matrix> embeds(3);
  embeds[0] = Matrix(1, 2);
  embeds[0](0, 0) = 1.0;  // A
  embeds[1] = Matrix(1, 2);
  embeds[1](0, 1) = 1.0;  // B orthogonal to A
  embeds[2] = Matrix(1, 2);
  embeds[2](0, 0) = 1.0;  // X == A
  CHECK(score_triplet({0, 1, 2}, embeds) == 1.0);
  CHECK(score_triplet({1, 0, 2}, embeds) == 0.0);
  // X equidistant: d(A,X) == d(B,X) exactly
  embeds[2] = Matrix(1, 2);
  embeds[2](0, 0) = 1.0;
  embeds[2](0, 1) = 1.0;
  CHECK(score_triplet({0, 1, 2}, embeds) == 0.5);
}

namespace {

Corpus inventory_stub(std::size_t n_phones, std::size_t n_speakers) {
  Corpus c;
  for (std::size_t p = 0; p < n_phones; ++p) c.phone_inventory.push_back("p" + std::to_string(p));
  for (std::size_t s = 0; s < n_speakers; ++s) c.speaker_inventory.push_back("s" + std::to_string(s));
  return c;
}

// Independent aggregation oracle built on a different structure: group raw
// scores straight into a cat -> other -> ctx -> vector<double> tree.
double nested_mean_oracle(const std::vector<std::pair<AbxCellKey, double>>& scored) {
  using Pair = std::pair<std::size_t, std::size_t>;
  std::map<Pair, std::map<Pair, std::map<Pair, std::vector<double>>>> tree;
  for (const auto& [key, s] : scored) tree[key.category][key.other][key.context].push_back(s);
  double cat_sum = 0.0;
  for (const auto& [cat, others] : tree) {
    double other_sum = 0.0;
    for (const auto& [other, ctxs] : others) {
      double ctx_sum = 0.0;
      for (const auto& [ctx, scores] : ctxs) {
        double s = 0.0;
        for (double v : scores) s += v;
        ctx_sum += s / static_cast<double>(scores.size());
      }
      other_sum += ctx_sum / static_cast<double>(ctxs.size());
    }
    cat_sum += other_sum / static_cast<double>(others.size());
  }
  return cat_sum / static_cast<double>(tree.size());
}

}  // namespace

TEST_CASE("aggregate: all-ones scores aggregate to exactly 1") {
  Rng rng(45);
  std::vector<std::pair<AbxCellKey, double>> scored;
  for (int i = 0; i < 50; ++i) {
    AbxCellKey key;
    key.context = {rng.uniform_int(3), rng.uniform_int(3)};
    const std::size_t c1 = rng.uniform_int(4), c2 = rng.uniform_int(4);
    key.category = {std::min(c1, c2), std::max(c1, c2)};
    key.other = {0, 1};
    scored.push_back({key, 1.0});
  }
  const AbxReport r =
      aggregate(scored, {}, inventory_stub(4, 4), AbxTask::phone_talker, "filterbank", 0);
  CHECK(r.score == 1.0);
  CHECK(r.n_triplets == 50);
}

TEST_CASE("aggregate: unweighted cell mean, two cells with unequal counts") {
  AbxCellKey k1, k2;
  k1.context = {0, 0};
  k1.category = {0, 1};
  k1.other = {0, 1};
  k2 = k1;
  k2.category = {0, 2};
  std::vector<std::pair<AbxCellKey, double>> scored;
  for (int i = 0; i < 9; ++i) scored.push_back({k1, 1.0});
  scored.push_back({k2, 0.0});
  const AbxReport r =
      aggregate(scored, {}, inventory_stub(3, 2), AbxTask::phone_talker, "filterbank", 0);
  CHECK(r.score == 0.5);
  REQUIRE(r.cells.size() == 2);
}

TEST_CASE("aggregate: equals the independent nested-mean oracle on random structures") {
  Rng rng(46);
  for (int iter = 0; iter < 25; ++iter) {
    std::vector<std::pair<AbxCellKey, double>> scored;
    const std::size_t n = 20 + rng.uniform_int(200);
    for (std::size_t i = 0; i < n; ++i) {
      AbxCellKey key;
      key.context = {rng.uniform_int(3), rng.uniform_int(3)};
      const std::size_t c1 = rng.uniform_int(5), c2 = rng.uniform_int(5);
      key.category = {std::min(c1, c2), std::max(c1, c2)};
      const std::size_t o1 = rng.uniform_int(4), o2 = rng.uniform_int(4);
      key.other = {std::min(o1, o2), std::max(o1, o2)};
      scored.push_back({key, rng.uniform()});
    }
    const AbxReport r =
        aggregate(scored, {}, inventory_stub(5, 5), AbxTask::talker_phone, "filterbank", 0);
    CHECK(r.score == doctest::Approx(nested_mean_oracle(scored)).epsilon(1e-12));
  }
}

TEST_CASE("perfect-separation embeddings score exactly 1.0 on both tasks") {
  const SynthConfig synth = [] {
    SynthConfig s;
    s.n_words = 10;
    s.n_speakers = 3;
    s.tokens_per_word_per_speaker = 2;
    s.frames_per_phone = 3;
    s.n_coeffs = 4;
    s.seed = 5;
    return s;
  }();
  const Corpus corpus = generate_synthetic_corpus(synth);
  const auto tokens = extract_triphones(corpus);
  REQUIRE(!tokens.empty());
  for (AbxTask task : {AbxTask::phone_talker, AbxTask::talker_phone}) {
    std::vector<Matrix> embeds(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t category =
          task == AbxTask::phone_talker ? tokens[i].center : tokens[i].speaker;
      Matrix m(1, 16);
      m(0, category) = 1.0;  // one distinct constant vector per category
      embeds[i] = m;
    }
    const auto triplets = enumerate_triplets(tokens, task);
    REQUIRE(!triplets.empty());
    std::vector<std::pair<AbxCellKey, double>> scored;
    for (const auto& t : triplets)
      scored.push_back({cell_key(tokens, t, task), score_triplet(t, embeds)});
    const AbxReport r = aggregate(scored, tokens, corpus, task, "test", 0);
    CHECK(r.score == 1.0);
  }
}

TEST_CASE("consistent relabeling leaves scores unchanged") {
  const SynthConfig synth = [] {
    SynthConfig s;
    s.n_words = 8;
    s.n_speakers = 2;
    s.tokens_per_word_per_speaker = 2;
    s.frames_per_phone = 3;
    s.n_coeffs = 5;
    s.seed = 6;
    return s;
  }();
  auto [corpus, stats] = standardize(generate_synthetic_corpus(synth));

  // permute phone identities consistently: labels through pi, inventory follows
  Corpus relabeled = corpus;
  const std::size_t n_phones = corpus.phone_inventory.size();
  std::vector<std::size_t> pi(n_phones);
  for (std::size_t i = 0; i < n_phones; ++i) pi[i] = (i + 3) % n_phones;
  std::vector<std::string> inv(n_phones);
  for (std::size_t i = 0; i < n_phones; ++i) inv[pi[i]] = corpus.phone_inventory[i];
  relabeled.phone_inventory = inv;
  for (auto& seq : relabeled.sequences)
    for (auto& l : *seq.phone_labels) l = static_cast<std::uint16_t>(pi[l]);

  AbxOptions opts;
  opts.cap = 0;
  opts.nf = 3;
  const auto r1 = evaluate_model(corpus, AbxRepr::filterbank, nullptr, nullptr, opts);
  const auto r2 = evaluate_model(relabeled, AbxRepr::filterbank, nullptr, nullptr, opts);
  for (std::size_t k = 0; k < r1.size(); ++k) {
    CHECK(r1[k].n_triplets == r2[k].n_triplets);
    CHECK(r1[k].score == doctest::Approx(r2[k].score).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_model: deterministic, and thread-count independent") {
  const SynthConfig synth = [] {
    SynthConfig s;
    s.n_words = 8;
    s.n_speakers = 2;
    s.tokens_per_word_per_speaker = 2;
    s.frames_per_phone = 3;
    s.n_coeffs = 5;
    s.seed = 7;
    return s;
  }();
  auto [corpus, stats] = standardize(generate_synthetic_corpus(synth));
  AbxOptions opts;
  opts.cap = 50;
  opts.seed = 3;
  opts.nf = 3;
  const auto r1 = evaluate_model(corpus, AbxRepr::filterbank, nullptr, nullptr, opts);
  opts.threads = 2;
  const auto r2 = evaluate_model(corpus, AbxRepr::filterbank, nullptr, nullptr, opts);
  REQUIRE(r1.size() == r2.size());
  for (std::size_t k = 0; k < r1.size(); ++k)
    CHECK(encode_abx_csv(r1[k]) == encode_abx_csv(r2[k]));
}

TEST_CASE("evaluate_model: zero eligible triplets produce an explicit empty report") {
  Rng rng(47);
  // one speaker only
  Corpus corpus = with_phones(
      test::make_corpus({labeled_sequence("a", "w1", "s", {0, 1, 2}, 3, rng),
                         labeled_sequence("b", "w2", "s", {0, 2, 2}, 3, rng)}),
      3);
  AbxOptions opts;
  opts.tasks = {AbxTask::phone_talker};
  opts.nf = 1;
  const auto reports = evaluate_model(corpus, AbxRepr::filterbank, nullptr, nullptr, opts);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].n_triplets == 0);
  CHECK(std::isnan(reports[0].score));
  const std::string csv = encode_abx_csv(reports[0]);
  CHECK(csv.find("ALL,ALL,ALL,,0") != std::string::npos);  // empty score cell, explicit zero count
}

TEST_CASE("abx report CSV: aggregate row plus per-cell rows") {
  const auto tokens = four_token_grid();
  std::vector<Matrix> embeds(tokens.size());
  Rng rng(48);
  for (auto& m : embeds) m = test::random_matrix(2, 3, rng);
  const auto triplets = enumerate_triplets(tokens, AbxTask::phone_talker);
  std::vector<std::pair<AbxCellKey, double>> scored;
  for (const auto& t : triplets)
    scored.push_back({cell_key(tokens, t, AbxTask::phone_talker), score_triplet(t, embeds)});
  const AbxReport r =
      aggregate(scored, tokens, inventory_stub(4, 2), AbxTask::phone_talker, "filterbank", 0);
  const std::string csv = encode_abx_csv(r);
  const auto lines = split_lines(csv);
  CHECK(lines[0] == "task,repr,context,cat_pair,spkr_pair,score,n");
  CHECK(lines[1].find("phone_talker,filterbank,ALL,ALL,ALL,") == 0);
  CHECK(lines.size() == 2 + r.cells.size());
}
