#include "recam/model.hpp"

#include <algorithm>
#include <numeric>

#include "recam/errors.hpp"
#include "recam/ops.hpp"

namespace recam::model {

namespace {

using data::SpecialTokens;

attn::AttentionPattern pattern_for(const ModelConfig& config, int64_t n,
                                   int64_t a_start) {
  switch (config.mode) {
    case AttentionMode::Dense:
      return attn::build_pattern(n, attn::AttentionPattern::kFull);
    case AttentionMode::Windowed:
      return attn::build_pattern(n, attn::effective_odd_window(config.window));
    case AttentionMode::WindowedGlobal: {
      std::vector<int64_t> globals;
      globals.reserve(static_cast<size_t>(n - a_start));
      for (int64_t i = a_start; i < n; ++i) globals.push_back(i);
      return attn::build_pattern(n, attn::effective_odd_window(config.window),
                                 std::move(globals));
    }
  }
  throw ConfigError("unknown attention mode");
}

Tensor maybe_dropout(const Tensor& x, const ModelConfig& config, Rng* rng) {
  if (rng == nullptr || config.dropout <= 0.0) return x;
  return dropout(x, config.dropout, *rng);
}

constexpr double kLayerNormEps = 1e-5;

}  // namespace

AttentionMode mode_from_string(const std::string& name) {
  if (name == "dense") return AttentionMode::Dense;
  if (name == "windowed") return AttentionMode::Windowed;
  if (name == "windowed_global") return AttentionMode::WindowedGlobal;
  throw ConfigError("unknown attention mode '" + name +
                    "' (expected dense | windowed | windowed_global)");
}

std::string mode_name(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::Dense:
      return "dense";
    case AttentionMode::Windowed:
      return "windowed";
    case AttentionMode::WindowedGlobal:
      return "windowed_global";
  }
  throw ConfigError("unknown attention mode");
}

void ModelConfig::validate() const {
  if (vocab_size < SpecialTokens::count) {
    throw ConfigError("model: vocab_size must be at least " +
                      std::to_string(SpecialTokens::count));
  }
  if (d < 1) throw ConfigError("model: width must be positive");
  if (layers < 1) throw ConfigError("model: need at least one layer");
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("model: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (ff < 1) throw ConfigError("model: feed-forward width must be positive");
  if (max_seq_len < 8) throw ConfigError("model: max_seq_len must be at least 8");
  if (window < 1) throw ConfigError("model: window must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("model: dropout must be in [0, 1)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"vocab_size", vocab_size},
                        {"d", d},
                        {"layers", layers},
                        {"heads", heads},
                        {"ff", ff},
                        {"max_seq_len", max_seq_len},
                        {"mode", mode_name(mode)},
                        {"window", window},
                        {"dropout", dropout},
                        {"separate_global_projections", separate_global_projections}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.d = j.at("d").get<int64_t>();
  c.layers = j.at("layers").get<int64_t>();
  c.heads = j.at("heads").get<int64_t>();
  c.ff = j.at("ff").get<int64_t>();
  c.max_seq_len = j.at("max_seq_len").get<int64_t>();
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.window = j.at("window").get<int64_t>();
  c.dropout = j.at("dropout").get<double>();
  c.separate_global_projections = j.at("separate_global_projections").get<bool>();
  c.validate();
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  const Rng root(seed);
  auto draw = [&](const std::string& name, std::vector<int64_t> shape) {
    Rng child = root.split(name);
    return Tensor::randn(std::move(shape), child, 0.02);
  };
  ModelParams p;
  p.tok_emb = draw("tok_emb", {config.vocab_size, config.d});
  p.pos_emb = draw("pos_emb", {config.max_seq_len, config.d});
  p.emb_gain = Tensor::full({config.d}, 1.0);
  p.emb_bias = Tensor::zeros({config.d});
  p.layers.resize(static_cast<size_t>(config.layers));
  for (int64_t l = 0; l < config.layers; ++l) {
    Layer& layer = p.layers[static_cast<size_t>(l)];
    const std::string prefix = "layer" + std::to_string(l);
    layer.attn = attn::AttentionParams::init(config.d, config.heads,
                                             root.split(prefix + ".attn"),
                                             config.separate_global_projections);
    layer.ln1_gain = Tensor::full({config.d}, 1.0);
    layer.ln1_bias = Tensor::zeros({config.d});
    layer.ff_w1 = draw(prefix + ".ff_w1", {config.d, config.ff});
    layer.ff_b1 = Tensor::zeros({config.ff});
    layer.ff_w2 = draw(prefix + ".ff_w2", {config.ff, config.d});
    layer.ff_b2 = Tensor::zeros({config.d});
    layer.ln2_gain = Tensor::full({config.d}, 1.0);
    layer.ln2_bias = Tensor::zeros({config.d});
  }
  p.head_v = draw("head_v", {config.d});
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", tok_emb);
  out.emplace_back("pos_emb", pos_emb);
  out.emplace_back("emb_ln_gain", emb_gain);
  out.emplace_back("emb_ln_bias", emb_bias);
  for (size_t l = 0; l < layers.size(); ++l) {
    Layer& layer = layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    out.emplace_back(prefix + "attn.wq", layer.attn.wq);
    out.emplace_back(prefix + "attn.bq", layer.attn.bq);
    out.emplace_back(prefix + "attn.wk", layer.attn.wk);
    out.emplace_back(prefix + "attn.bk", layer.attn.bk);
    out.emplace_back(prefix + "attn.wv", layer.attn.wv);
    out.emplace_back(prefix + "attn.bv", layer.attn.bv);
    out.emplace_back(prefix + "attn.wo", layer.attn.wo);
    out.emplace_back(prefix + "attn.bo", layer.attn.bo);
    if (layer.attn.has_global_projections) {
      out.emplace_back(prefix + "attn.wq_g", layer.attn.wq_g);
      out.emplace_back(prefix + "attn.bq_g", layer.attn.bq_g);
      out.emplace_back(prefix + "attn.wk_g", layer.attn.wk_g);
      out.emplace_back(prefix + "attn.bk_g", layer.attn.bk_g);
      out.emplace_back(prefix + "attn.wv_g", layer.attn.wv_g);
      out.emplace_back(prefix + "attn.bv_g", layer.attn.bv_g);
    }
    out.emplace_back(prefix + "ln1_gain", layer.ln1_gain);
    out.emplace_back(prefix + "ln1_bias", layer.ln1_bias);
    out.emplace_back(prefix + "ff_w1", layer.ff_w1);
    out.emplace_back(prefix + "ff_b1", layer.ff_b1);
    out.emplace_back(prefix + "ff_w2", layer.ff_w2);
    out.emplace_back(prefix + "ff_b2", layer.ff_b2);
    out.emplace_back(prefix + "ln2_gain", layer.ln2_gain);
    out.emplace_back(prefix + "ln2_bias", layer.ln2_bias);
  }
  out.emplace_back("head_v", head_v);
  return out;
}

void ModelParams::set_grad_enabled(bool enabled) {
  for (auto& [name, t] : named_tensors()) t.set_grad_enabled(enabled);
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : named_tensors()) t.zero_grad();
}

ChunkEncoding encode_chunk(const std::vector<int64_t>& tokens, int64_t a_start,
                           const std::array<int64_t, 5>& ent_positions,
                           const ModelConfig& config, const ModelParams& params,
                           Rng* dropout_rng,
                           const std::vector<int64_t>* position_ids) {
  const auto n = static_cast<int64_t>(tokens.size());
  if (n < 1) throw ContractError("encode_chunk: empty chunk");
  if (n > config.max_seq_len) {
    throw ContractError("encode_chunk: chunk of " + std::to_string(n) +
                        " tokens exceeds max_seq_len " +
                        std::to_string(config.max_seq_len));
  }
  if (a_start < 0 || a_start >= n) {
    throw ContractError("encode_chunk: answer segment start " +
                        std::to_string(a_start) + " outside chunk");
  }
  const int64_t marker_count =
      std::count(tokens.begin(), tokens.end(), SpecialTokens::ent_open);
  if (marker_count != 5) {
    throw SampleError("encode_chunk: chunk has " + std::to_string(marker_count) +
                      " candidate markers, expected 5");
  }
  for (int64_t pos : ent_positions) {
    if (pos < a_start || pos >= n || tokens[static_cast<size_t>(pos)] != SpecialTokens::ent_open) {
      throw SampleError("encode_chunk: marker position " + std::to_string(pos) +
                        " does not hold a candidate marker inside the answer segment");
    }
  }

  std::vector<int64_t> pos_ids;
  if (position_ids != nullptr) {
    if (static_cast<int64_t>(position_ids->size()) != n) {
      throw ContractError("encode_chunk: " + std::to_string(position_ids->size()) +
                          " position ids for " + std::to_string(n) + " tokens");
    }
    pos_ids = *position_ids;
  } else {
    pos_ids.resize(static_cast<size_t>(n));
    std::iota(pos_ids.begin(), pos_ids.end(), 0);
  }
  Tensor h = add(embedding_gather(params.tok_emb, tokens),
                 embedding_gather(params.pos_emb, pos_ids));
  h = layer_norm(h, params.emb_gain, params.emb_bias, kLayerNormEps);
  h = maybe_dropout(h, config, dropout_rng);

  const attn::AttentionPattern pattern = pattern_for(config, n, a_start);
  for (const ModelParams::Layer& layer : params.layers) {
    Tensor attn_out;
    switch (config.mode) {
      case AttentionMode::Dense:
        attn_out = attn::dense_attention(h, layer.attn, pattern);
        break;
      case AttentionMode::Windowed:
        attn_out = attn::windowed_attention(
            h, layer.attn, attn::effective_odd_window(config.window));
        break;
      case AttentionMode::WindowedGlobal:
        attn_out = attn::global_augmented_attention(h, layer.attn, pattern);
        break;
    }
    h = layer_norm(add(h, maybe_dropout(attn_out, config, dropout_rng)),
                   layer.ln1_gain, layer.ln1_bias, kLayerNormEps);
    Tensor ff = add_row_broadcast(matmul(h, layer.ff_w1), layer.ff_b1);
    ff = gelu(ff);
    ff = add_row_broadcast(matmul(ff, layer.ff_w2), layer.ff_b2);
    h = layer_norm(add(h, maybe_dropout(ff, config, dropout_rng)),
                   layer.ln2_gain, layer.ln2_bias, kLayerNormEps);
  }
  return ChunkEncoding{h, ent_positions};
}

Tensor extract_candidate_states(const ChunkEncoding& enc) {
  std::vector<int64_t> rows(enc.ent_positions.begin(), enc.ent_positions.end());
  return embedding_gather(enc.states, rows);
}

Tensor aggregate_chunks(const std::vector<Tensor>& per_chunk) {
  if (per_chunk.empty()) throw ContractError("aggregate_chunks: no chunks");
  return mean_stack(per_chunk);
}

Tensor score_candidates(const Tensor& xbar, const Tensor& head_v) {
  return matvec(xbar, head_v);
}

Prediction predict(const Tensor& logits) {
  if (logits.ndim() != 1 || logits.dim(0) != 5) {
    throw DimensionError("predict: expected 5 logits, got " + logits.shape_str());
  }
  Prediction p;
  p.probabilities = softmax_rows(logits);
  int best = 0;
  for (int j = 1; j < 5; ++j) {
    if (p.probabilities(j) > p.probabilities(best)) best = j;
  }
  p.answer = best;
  return p;
}

Tensor loss(const Tensor& logits, int64_t gold) {
  return cross_entropy_with_logits(logits, gold);
}

SampleOutput forward_sample(const data::ChunkSet& chunks, const ModelConfig& config,
                            const ModelParams& params, Rng* dropout_rng) {
  if (chunks.size() < 1) throw ContractError("forward_sample: sample has no chunks");
  std::vector<Tensor> states;
  states.reserve(static_cast<size_t>(chunks.size()));
  for (int64_t l = 0; l < chunks.size(); ++l) {
    const size_t li = static_cast<size_t>(l);
    const std::vector<int64_t>* ids =
        li < chunks.position_ids.size() && !chunks.position_ids[li].empty()
            ? &chunks.position_ids[li]
            : nullptr;
    const ChunkEncoding enc =
        encode_chunk(chunks.chunks[li], chunks.a_start[li],
                     chunks.ent_positions[li], config, params, dropout_rng, ids);
    states.push_back(extract_candidate_states(enc));
  }
  const Tensor xbar = aggregate_chunks(states);
  SampleOutput out;
  out.logits = score_candidates(xbar, params.head_v);
  const Prediction p = predict(out.logits);
  out.probabilities = p.probabilities;
  out.answer = p.answer;
  return out;
}

}  // namespace recam::model
