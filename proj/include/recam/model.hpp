#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recam/attention.hpp"
#include "recam/data.hpp"
#include "recam/rng.hpp"
#include "recam/tensor.hpp"

namespace recam::model {

enum class AttentionMode { Dense, Windowed, WindowedGlobal };

AttentionMode mode_from_string(const std::string& name);
std::string mode_name(AttentionMode mode);

struct ModelConfig {
  int64_t vocab_size = 0;
  int64_t d = 64;
  int64_t layers = 2;
  int64_t heads = 2;
  int64_t ff = 128;
  int64_t max_seq_len = 4096;  // 512 is the conventional cap in dense mode
  AttentionMode mode = AttentionMode::WindowedGlobal;
  int64_t window = 32;  // neighbor budget; kernels use effective_odd_window
  double dropout = 0.0;
  bool separate_global_projections = true;

  void validate() const;  // throws ConfigError

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// All trainable state. named_tensors() enumerates every tensor in one fixed,
// documented order; that order defines the checkpoint layout and the
// optimizer slot assignment.
struct ModelParams {
  Tensor tok_emb;   // [vocab_size x d]
  Tensor pos_emb;   // [max_seq_len x d]
  Tensor emb_gain;  // [d] embedding layer-norm
  Tensor emb_bias;  // [d]

  struct Layer {
    attn::AttentionParams attn;
    Tensor ln1_gain, ln1_bias;  // after the attention residual
    Tensor ff_w1, ff_b1;        // [d x ff], [ff]
    Tensor ff_w2, ff_b2;        // [ff x d], [d]
    Tensor ln2_gain, ln2_bias;  // after the feed-forward residual
  };
  std::vector<Layer> layers;

  Tensor head_v;  // [d] shared candidate-scoring vector

  // Normal(0, 0.02) weights, unit layer-norm gains, zero biases; every
  // tensor drawn from a name-keyed child of Rng(seed), so initialization
  // order never matters.
  static ModelParams init(const ModelConfig& config, uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_tensors();
  void set_grad_enabled(bool enabled);
  void zero_grads();
};

// Hidden states of one encoded chunk plus where its candidate markers sit.
struct ChunkEncoding {
  Tensor states;  // [chunk_len x d]
  std::array<int64_t, 5> ent_positions;
};

// Token+position embeddings through the encoder stack under the configured
// attention mode. In windowed+global mode every answer-sequence position
// (a_start onward) is global. Position ids are sequential 0..n-1 unless
// position_ids supplies an explicit per-token assignment (as the candidate
// permutation helper does, where each segment keeps its original ids).
// dropout_rng == nullptr disables dropout regardless of the configured rate.
ChunkEncoding encode_chunk(const std::vector<int64_t>& tokens, int64_t a_start,
                           const std::array<int64_t, 5>& ent_positions,
                           const ModelConfig& config, const ModelParams& params,
                           Rng* dropout_rng = nullptr,
                           const std::vector<int64_t>* position_ids = nullptr);

// Row j = hidden state at the j-th candidate marker.
Tensor extract_candidate_states(const ChunkEncoding& enc);

// Elementwise arithmetic mean over chunks; throws ContractError when empty.
Tensor aggregate_chunks(const std::vector<Tensor>& per_chunk);

// f_j = dot(head_v, xbar row j).
Tensor score_candidates(const Tensor& xbar, const Tensor& head_v);

struct Prediction {
  Tensor probabilities;  // [5]
  int answer = 0;        // lowest index attaining the max probability
};

Prediction predict(const Tensor& logits);

// -log softmax(logits)[gold]; throws IndexError for gold outside 0..4.
Tensor loss(const Tensor& logits, int64_t gold);

struct SampleOutput {
  Tensor logits;         // [5]
  Tensor probabilities;  // [5]
  int answer = 0;
};

// encode every chunk -> extract -> mean -> score -> predict.
SampleOutput forward_sample(const data::ChunkSet& chunks, const ModelConfig& config,
                            const ModelParams& params, Rng* dropout_rng = nullptr);

}  // namespace recam::model
