#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recam/rng.hpp"
#include "recam/tensor.hpp"

namespace recam::attn {

// Which query-key pairs an attention kernel may mix. A banded pattern admits
// |i-j| <= (window-1)/2; positions listed in global_indices attend to every
// position and are attended by every position (symmetric reachability).
struct AttentionPattern {
  static constexpr int64_t kFull = -1;

  int64_t seq_len = 0;
  int64_t window = kFull;                 // odd width, or kFull
  std::vector<int64_t> global_indices;    // sorted, unique, < seq_len

  bool is_full() const { return window == kFull; }
  int64_t half_width() const { return (window - 1) / 2; }
  bool is_global(int64_t i) const;
  bool allows(int64_t i, int64_t j) const;
  // Admitted key positions for query i, ascending.
  std::vector<int64_t> row(int64_t i) const;
  int64_t row_size(int64_t i) const;
};

// window == AttentionPattern::kFull gives the complete pattern; otherwise the
// window must be odd and positive. Global indices may arrive unsorted.
AttentionPattern build_pattern(int64_t seq_len, int64_t window,
                               std::vector<int64_t> global_indices = {});

// Model configs express the window as neighbors-per-side times two; kernels
// want the odd total width including self. Maps 32 -> 33, keeps 33 -> 33.
int64_t effective_odd_window(int64_t configured);

// Multi-head projection weights. When has_global_projections is set, the _g
// set replaces the primary one for positions flagged global by the pattern
// (selection is per position, for queries, keys and values alike).
struct AttentionParams {
  int64_t heads = 1;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  bool has_global_projections = false;
  Tensor wq_g, bq_g, wk_g, bk_g, wv_g, bv_g;

  int64_t model_dim() const { return wq.dim(0); }
  int64_t head_dim() const { return model_dim() / heads; }

  // Fresh parameters, Normal(0, 0.02) weights and zero biases, drawn from
  // name-keyed child generators of rng. Global projections start as exact
  // copies of the primary set so the augmented kernel is a no-op relative to
  // shared projections until training moves them apart.
  static AttentionParams init(int64_t d, int64_t heads, const Rng& rng,
                              bool separate_global_projections);

  void set_grad_enabled(bool enabled);
  std::vector<Tensor> tensors();
};

// n^2 kernel: every pair scored, disallowed pairs pushed to -1e30 before the
// softmax. Reference behavior for the sparse kernels.
Tensor dense_attention(const Tensor& x, const AttentionParams& params,
                       const AttentionPattern& pattern);

// Banded kernel touching only O(n * window) score entries.
Tensor windowed_attention(const Tensor& x, const AttentionParams& params,
                          int64_t window);

// Banded kernel plus full rows/columns for the pattern's global positions;
// O(n * (window + globals)) score entries.
Tensor global_augmented_attention(const Tensor& x, const AttentionParams& params,
                                  const AttentionPattern& pattern);

enum class KernelId { Dense, Windowed, GlobalAugmented };

KernelId kernel_from_string(const std::string& name);
std::string kernel_name(KernelId id);

// Exact number of query-key score evaluations one forward pass performs,
// counted once per (query, key) pair; the head count multiplies the work by
// a constant factor and is deliberately excluded. For GlobalAugmented the g
// global positions are taken to be the last g of the sequence, matching the
// chunk layout where the question+candidates tail carries global attention.
int64_t count_score_ops(KernelId id, int64_t n, int64_t w, int64_t g);

// Live instrumentation, accumulated across kernel calls on any thread.
struct KernelStats {
  int64_t score_ops = 0;       // total pairs scored since reset
  int64_t peak_weight_bytes = 0;  // largest attention-weight buffer seen
};
void reset_kernel_stats();
KernelStats kernel_stats();

namespace reference {

// Straightforward serial implementation kept for testing: materializes the
// full n x n score matrix, masks, softmaxes, mixes. Forward only, never
// recorded on a tape, no OpenMP. The production kernels are checked against
// it, and the kernel benchmark uses it as the baseline.
Tensor masked_attention(const Tensor& x, const AttentionParams& params,
                        const AttentionPattern& pattern);

}  // namespace reference

}  // namespace recam::attn
