// Model layer: configuration, parameter initialization, the chunk encoder
// against a step-by-step scalar walk-through, candidate extraction and
// scoring oracles, chunk aggregation algebra, and the end-to-end invariants
// (L=1 reduction, duplicate-chunk invariance, candidate-order equivariance,
// dense vs windowed+global agreement, gradient flow into special tokens).

#include <doctest.h>

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "recam/attention.hpp"
#include "recam/data.hpp"
#include "recam/errors.hpp"
#include "recam/model.hpp"
#include "recam/ops.hpp"
#include "recam/tensor.hpp"
#include "testutil.hpp"

using namespace recam;
using namespace recam::model;
using recam::data::RecamSample;
using recam::data::SpecialTokens;
using testutil::bitwise_equal;
using testutil::max_abs_diff;

namespace {

RecamSample tiny_sample() {
  RecamSample s;
  s.passage = "the quick lantern glows at night near the old bridge";
  s.question = "the story is mainly about @placeholder";
  s.options = {"courage", "patience", "wisdom", "loyalty", "honesty"};
  s.label = 0;
  return s;
}

struct TinySetup {
  data::Vocab vocab;
  RecamSample sample;
  data::ChunkSet chunks;
  ModelConfig config;
  ModelParams params;
};

TinySetup make_setup(AttentionMode mode, int64_t max_seq_len = 128,
                     uint64_t seed = 7, int64_t window = 4) {
  TinySetup t{data::Vocab(), tiny_sample(), {}, {}, {}};
  t.vocab = data::Vocab::build({t.sample}, 1);
  t.chunks = data::build_chunks(t.sample, t.vocab, max_seq_len);
  t.config.vocab_size = t.vocab.size();
  t.config.d = 8;
  t.config.layers = 2;
  t.config.heads = 2;
  t.config.ff = 16;
  t.config.max_seq_len = max_seq_len;
  t.config.mode = mode;
  t.config.window = window;
  t.params = ModelParams::init(t.config, seed);
  return t;
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (AttentionMode m : {AttentionMode::Dense, AttentionMode::Windowed,
                          AttentionMode::WindowedGlobal}) {
    CHECK(mode_from_string(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(mode_from_string("hyperbolic"), ConfigError);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.vocab_size = 20;
  c.validate();
  SUBCASE("heads must divide width") {
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("vocab required") {
    c.vocab_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("window must be positive") {
    c.window = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("dropout range") {
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("json round-trip") {
    c.mode = AttentionMode::Dense;
    c.window = 16;
    c.dropout = 0.25;
    ModelConfig back = ModelConfig::from_json(c.to_json());
    CHECK(back.vocab_size == c.vocab_size);
    CHECK(back.mode == c.mode);
    CHECK(back.window == c.window);
    CHECK(back.dropout == c.dropout);
    CHECK(back.separate_global_projections == c.separate_global_projections);
  }
}

TEST_CASE("parameter initialization is seeded and layout-stable") {
  TinySetup t = make_setup(AttentionMode::WindowedGlobal);
  ModelParams again = ModelParams::init(t.config, 7);
  auto a = t.params.named_tensors();
  auto b = again.named_tensors();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(bitwise_equal(a[i].second, b[i].second));
  }

  ModelParams other = ModelParams::init(t.config, 8);
  CHECK_FALSE(bitwise_equal(other.tok_emb, t.params.tok_emb));

  // Layer-norm gains start at one, biases at zero.
  for (int64_t i = 0; i < t.params.emb_gain.numel(); ++i) {
    CHECK(t.params.emb_gain(i) == 1.0);
    CHECK(t.params.emb_bias(i) == 0.0);
  }
  // Global projections start as exact copies of the primary set.
  const auto& l0 = t.params.layers[0].attn;
  REQUIRE(l0.has_global_projections);
  CHECK(bitwise_equal(l0.wq_g, l0.wq));
  CHECK(bitwise_equal(l0.bv_g, l0.bv));

  // The named set covers every tensor exactly once.
  std::set<std::string> names;
  for (auto& [name, tensor] : a) CHECK(names.insert(name).second);
  CHECK(names.count("tok_emb") == 1);
  CHECK(names.count("head_v") == 1);
  CHECK(names.count("layer0.attn.wq_g") == 1);
  CHECK(names.count("layer1.ff_w2") == 1);
}

TEST_CASE("chunk encoder matches a scalar walk-through of one layer") {
  // 1-layer, 1-head, width-4 model on a 6-token chunk, dense mode: recompute
  // embedding -> layer norm -> attention -> residual norm -> feed-forward ->
  // residual norm entirely with independent scalar code.
  ModelConfig cfg;
  cfg.vocab_size = SpecialTokens::count + 3;
  cfg.d = 4;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.ff = 8;
  cfg.max_seq_len = 16;
  cfg.mode = AttentionMode::Dense;
  ModelParams params = ModelParams::init(cfg, 42);

  const std::vector<int64_t> tokens = {SpecialTokens::ent_open, SpecialTokens::ent_open,
                                       SpecialTokens::ent_open, SpecialTokens::ent_open,
                                       SpecialTokens::ent_open, 9};
  const std::array<int64_t, 5> ents = {0, 1, 2, 3, 4};
  ChunkEncoding enc = encode_chunk(tokens, 0, ents, cfg, params);
  REQUIRE(enc.states.dim(0) == 6);
  REQUIRE(enc.states.dim(1) == 4);

  const int64_t n = 6, d = 4;
  // Embedding + embedding layer norm.
  std::vector<std::vector<double>> h(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
      row[static_cast<size_t>(j)] =
          params.tok_emb(tokens[static_cast<size_t>(i)], j) + params.pos_emb(i, j);
    }
    h[static_cast<size_t>(i)] = testutil::layer_norm_oracle(
        row, params.emb_gain.data(), params.emb_bias.data(), 1e-5);
  }

  // Attention via the independent serial reference.
  Tensor hx = Tensor::zeros({n, d});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      hx.at(i, j) = h[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  }
  Tensor attn_out = attn::reference::masked_attention(
      hx, params.layers[0].attn,
      attn::build_pattern(n, attn::AttentionPattern::kFull));

  const auto& L = params.layers[0];
  for (int64_t i = 0; i < n; ++i) {
    // Post-attention residual + norm.
    std::vector<double> res(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
      res[static_cast<size_t>(j)] =
          h[static_cast<size_t>(i)][static_cast<size_t>(j)] + attn_out(i, j);
    }
    std::vector<double> h1 = testutil::layer_norm_oracle(
        res, L.ln1_gain.data(), L.ln1_bias.data(), 1e-5);

    // Feed-forward: gelu(h1 W1 + b1) W2 + b2.
    std::vector<double> mid(static_cast<size_t>(cfg.ff));
    for (int64_t j = 0; j < cfg.ff; ++j) {
      double acc = L.ff_b1(j);
      for (int64_t t = 0; t < d; ++t) acc += h1[static_cast<size_t>(t)] * L.ff_w1(t, j);
      mid[static_cast<size_t>(j)] = 0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
    }
    std::vector<double> ff(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
      double acc = L.ff_b2(j);
      for (int64_t t = 0; t < cfg.ff; ++t) acc += mid[static_cast<size_t>(t)] * L.ff_w2(t, j);
      ff[static_cast<size_t>(j)] = acc + h1[static_cast<size_t>(j)];
    }
    std::vector<double> want = testutil::layer_norm_oracle(
        ff, L.ln2_gain.data(), L.ln2_bias.data(), 1e-5);

    for (int64_t j = 0; j < d; ++j) {
      CHECK(testutil::rel_err(enc.states(i, j), want[static_cast<size_t>(j)]) < 1e-9);
    }
  }
}

TEST_CASE("candidate extraction is a row gather") {
  Rng rng(3);
  ChunkEncoding enc{Tensor::randn({24, 4}, rng, 1.0), {10, 13, 16, 19, 22}};
  Tensor x = extract_candidate_states(enc);
  REQUIRE(x.dim(0) == 5);
  for (int j = 0; j < 5; ++j) {
    for (int64_t k = 0; k < 4; ++k) {
      CHECK(x(j, k) == enc.states(enc.ent_positions[static_cast<size_t>(j)], k));
    }
  }
}

TEST_CASE("chunk aggregation is the elementwise mean") {
  Rng rng(4);
  Tensor s1 = Tensor::randn({5, 3}, rng, 1.0);

  // Single chunk: identity.
  CHECK(bitwise_equal(aggregate_chunks({s1}), s1));

  // S and -S cancel.
  Tensor neg = scale(s1, -1.0);
  Tensor zero = aggregate_chunks({s1, neg});
  for (int64_t i = 0; i < zero.numel(); ++i) CHECK(zero(i) == 0.0);

  // Three random chunks: per-entry scalar mean within 1e-12.
  Tensor s2 = Tensor::randn({5, 3}, rng, 1.0);
  Tensor s3 = Tensor::randn({5, 3}, rng, 1.0);
  Tensor m = aggregate_chunks({s1, s2, s3});
  for (int64_t i = 0; i < m.numel(); ++i) {
    const double want = (s1(i) + s2(i) + s3(i)) / 3.0;
    CHECK(testutil::rel_err(m(i), want) < 1e-12);
  }

  CHECK_THROWS_AS(aggregate_chunks({}), ContractError);
}

TEST_CASE("candidate scoring is five dot products") {
  Rng rng(5);
  Tensor x = Tensor::randn({5, 6}, rng, 1.0);

  Tensor zero = score_candidates(x, Tensor::zeros({6}));
  for (int64_t j = 0; j < 5; ++j) CHECK(zero(j) == 0.0);

  Tensor e2 = Tensor::zeros({6});
  e2.at(2) = 1.0;
  Tensor picked = score_candidates(x, e2);
  for (int64_t j = 0; j < 5; ++j) CHECK(picked(j) == x(j, 2));

  Tensor v = Tensor::randn({6}, rng, 1.0);
  Tensor f = score_candidates(x, v);
  for (int64_t j = 0; j < 5; ++j) {
    double want = 0.0;
    for (int64_t k = 0; k < 6; ++k) want += v(k) * x(j, k);
    CHECK(testutil::rel_err(f(j), want) < 1e-12);
  }
}

TEST_CASE("prediction: softmax, tie-break, shift invariance") {
  Prediction uniform = predict(Tensor::zeros({5}));
  CHECK(uniform.answer == 0);
  for (int64_t j = 0; j < 5; ++j) {
    CHECK(uniform.probabilities(j) == doctest::Approx(0.2).epsilon(1e-15));
  }

  CHECK(predict(Tensor::from_data({5}, {1, 5, 2, 0, -1})).answer == 1);

  Tensor f = Tensor::from_data({5}, {0.3, -1.2, 2.4, 2.4, 0.0});
  CHECK(predict(f).answer == 2);  // tie resolved to the lowest index

  Prediction base = predict(f);
  Tensor shifted = Tensor::from_data({5}, {0.3 + 7.3, -1.2 + 7.3, 2.4 + 7.3,
                                           2.4 + 7.3, 0.0 + 7.3});
  Prediction moved = predict(shifted);
  CHECK(moved.answer == base.answer);
  for (int64_t j = 0; j < 5; ++j) {
    CHECK(std::fabs(moved.probabilities(j) - base.probabilities(j)) < 1e-12);
  }

  CHECK_THROWS_AS(predict(Tensor::zeros({4})), DimensionError);
  CHECK_THROWS_AS(model::loss(Tensor::zeros({5}), 5), IndexError);
  CHECK(std::fabs(model::loss(Tensor::zeros({5}), 4)(0) - std::log(5.0)) < 1e-12);
}

TEST_CASE("single-pass reduction and duplicate-chunk invariance") {
  for (AttentionMode mode : {AttentionMode::Dense, AttentionMode::WindowedGlobal}) {
    CAPTURE(mode_name(mode));
    TinySetup t = make_setup(mode);
    REQUIRE(t.chunks.size() == 1);

    SampleOutput via_sample = forward_sample(t.chunks, t.config, t.params);

    // Composing the stages by hand on the single chunk gives the same bits.
    ChunkEncoding enc = encode_chunk(t.chunks.chunks[0], t.chunks.a_start[0],
                                     t.chunks.ent_positions[0], t.config, t.params);
    Tensor direct = score_candidates(
        aggregate_chunks({extract_candidate_states(enc)}), t.params.head_v);
    CHECK(bitwise_equal(via_sample.logits, direct));

    // Duplicating the sole chunk changes nothing: mean(x, x) == x.
    data::ChunkSet doubled = t.chunks;
    doubled.chunks.push_back(doubled.chunks[0]);
    doubled.a_start.push_back(doubled.a_start[0]);
    doubled.ent_positions.push_back(doubled.ent_positions[0]);
    SampleOutput twice = forward_sample(doubled, t.config, t.params);
    CHECK(bitwise_equal(twice.logits, via_sample.logits));
  }
}

TEST_CASE("candidate-order equivariance under unit permutation") {
  const std::array<int, 5> order = {3, 0, 4, 1, 2};
  for (AttentionMode mode : {AttentionMode::Dense, AttentionMode::WindowedGlobal}) {
    CAPTURE(mode_name(mode));
    TinySetup t = make_setup(mode);
    SampleOutput base = forward_sample(t.chunks, t.config, t.params);

    data::ChunkSet permuted = data::permute_candidates(t.chunks, order);
    SampleOutput moved = forward_sample(permuted, t.config, t.params);

    // Slot j of the permuted run scores candidate order[j].
    for (int j = 0; j < 5; ++j) {
      CHECK(std::fabs(moved.logits(j) - base.logits(order[static_cast<size_t>(j)])) < 1e-9);
    }
    // The gold answer's probability is unchanged; only its slot moved.
    int gold_slot = -1;
    for (int j = 0; j < 5; ++j) {
      if (order[static_cast<size_t>(j)] == t.sample.label) gold_slot = j;
    }
    CHECK(std::fabs(moved.probabilities(gold_slot) -
                    base.probabilities(t.sample.label)) < 1e-9);
  }
}

TEST_CASE("dense and windowed+global agree when the pattern saturates") {
  // Window covering the whole sequence plus all-answer global rows, with the
  // global projection set still an exact copy of the primary one: the two
  // modes must produce identical bits.
  TinySetup dense = make_setup(AttentionMode::Dense, 128, 7);
  const auto n = static_cast<int64_t>(dense.chunks.chunks[0].size());
  TinySetup wide = make_setup(AttentionMode::WindowedGlobal, 128, 7,
                              /*window=*/2 * n + 1);
  REQUIRE(bitwise_equal(wide.params.tok_emb, dense.params.tok_emb));

  SampleOutput a = forward_sample(dense.chunks, dense.config, dense.params);
  SampleOutput b = forward_sample(wide.chunks, wide.config, wide.params);
  CHECK(bitwise_equal(a.logits, b.logits));
}

TEST_CASE("short inputs are insensitive to the configured length cap") {
  TinySetup small = make_setup(AttentionMode::WindowedGlobal, 64, 7);
  TinySetup large = make_setup(AttentionMode::WindowedGlobal, 4096, 7);
  REQUIRE(small.chunks.size() == 1);
  REQUIRE(large.chunks.size() == 1);
  SampleOutput a = forward_sample(small.chunks, small.config, small.params);
  SampleOutput b = forward_sample(large.chunks, large.config, large.params);
  CHECK(bitwise_equal(a.logits, b.logits));
}

TEST_CASE("one backward pass reaches every special token in the input") {
  TinySetup t = make_setup(AttentionMode::WindowedGlobal);
  t.params.set_grad_enabled(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    SampleOutput out = forward_sample(t.chunks, t.config, t.params);
    tape.backward(model::loss(out.logits, t.sample.label));
  }
  const auto& grad = t.params.tok_emb.grad();
  const int64_t d = t.config.d;
  for (int64_t id : {SpecialTokens::bos, SpecialTokens::eos, SpecialTokens::q_open,
                     SpecialTokens::q_close, SpecialTokens::ent_open,
                     SpecialTokens::ent_close, SpecialTokens::placeholder}) {
    double mag = 0.0;
    for (int64_t j = 0; j < d; ++j) mag += std::fabs(grad[static_cast<size_t>(id * d + j)]);
    CHECK(mag > 0.0);
  }
  // The pad token never appears, so nothing may flow into it.
  double pad_mag = 0.0;
  for (int64_t j = 0; j < d; ++j) pad_mag += std::fabs(grad[static_cast<size_t>(j)]);
  CHECK(pad_mag == 0.0);
}

TEST_CASE("encoder validates chunk shape and marker placement") {
  TinySetup t = make_setup(AttentionMode::WindowedGlobal, 32);
  const auto& tokens = t.chunks.chunks[0];
  const auto& ents = t.chunks.ent_positions[0];
  const int64_t a_start = t.chunks.a_start[0];

  CHECK_THROWS_AS(encode_chunk({}, 0, ents, t.config, t.params), ContractError);

  std::vector<int64_t> too_long(static_cast<size_t>(t.config.max_seq_len) + 1,
                                SpecialTokens::ent_open);
  CHECK_THROWS_AS(encode_chunk(too_long, 0, ents, t.config, t.params), ContractError);

  std::array<int64_t, 5> bad_ents = ents;
  bad_ents[0] = a_start;  // points at <q>, not a marker
  CHECK_THROWS_AS(encode_chunk(tokens, a_start, bad_ents, t.config, t.params),
                  SampleError);

  std::vector<int64_t> few_markers = tokens;
  few_markers[static_cast<size_t>(ents[4])] = SpecialTokens::unk;
  CHECK_THROWS_AS(encode_chunk(few_markers, a_start, ents, t.config, t.params),
                  SampleError);

  std::vector<int64_t> short_ids = {0, 1};
  CHECK_THROWS_AS(encode_chunk(tokens, a_start, ents, t.config, t.params, nullptr,
                               &short_ids),
                  ContractError);
}
