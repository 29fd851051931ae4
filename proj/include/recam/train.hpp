#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recam/data.hpp"
#include "recam/metrics.hpp"
#include "recam/model.hpp"
#include "recam/tensor.hpp"

namespace recam::train {

struct TrainConfig {
  int64_t batch_size = 32;
  double lr = 3e-5;  // peak of the schedule
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  int64_t epochs = 15;
  int64_t validation_interval = 250;  // gradient updates between validations
  uint64_t seed = 42;
  double warmup_fraction = 0.06;
  std::string selection = "accuracy";  // best-checkpoint criterion: accuracy | loss

  void validate() const;  // throws ConfigError
};

// Bias-corrected Adam with decoupled weight decay over a fixed parameter
// list; slot i tracks params[i] for the optimizer's lifetime.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double beta1, double beta2, double eps,
        double weight_decay);

  // Applies one update from the accumulated gradients, each scaled by
  // grad_scale (1/batch for mean-of-batch semantics).
  void step(double lr, double grad_scale = 1.0);
  void zero_grads();
  int64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
};

// Linear warmup to the peak over warmup_fraction of total_steps, then linear
// decay to zero at total_steps.
double lr_schedule(int64_t step, int64_t total_steps, double peak,
                   double warmup_fraction);

// A sample readied for the model: chunked token ids plus its gold label
// (-1 when unlabeled).
struct PreparedSample {
  data::ChunkSet chunks;
  int label = -1;
};
using PreparedSet = std::vector<PreparedSample>;

PreparedSet prepare(const std::vector<data::RecamSample>& samples,
                    const data::Vocab& vocab, const model::ModelConfig& config);

struct EvalOutcome {
  metrics::MetricsReport metrics;
  double mean_loss = 0.0;
};

// Forward every sample (no dropout, no tape), score predictions against gold.
// Parallel over samples with index-ordered merging; throws ContractError on
// an unlabeled sample.
EvalOutcome evaluate(const model::ModelConfig& config,
                     const model::ModelParams& params, const PreparedSet& set);

struct HistoryRow {
  int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  int64_t total_steps = 0;
  int64_t best_step = 0;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
};

// Mini-batched epochs with per-epoch seeded shuffling; per-sample gradients
// accumulate in batch order, one optimizer update per batch. Validates every
// validation_interval updates and once at the end (unless the last update
// already validated); the parameter snapshot best on the selection criterion
// is restored into params before returning. Throws DivergenceError with the
// failing step when the loss stops being finite.
TrainResult train(const model::ModelConfig& config, model::ModelParams& params,
                  const PreparedSet& train_set, const PreparedSet& val_set,
                  const TrainConfig& tc);

// "step,lr,train_loss,val_loss,val_acc" plus one row per history entry.
std::string history_csv(const std::vector<HistoryRow>& history);

// CSV with an "index,prediction,p0,p1,p2,p3,p4" header (one line per sample)
// and JSONL with the same fields; pass an empty path to skip either output.
void predict_file(const model::ModelConfig& config, const model::ModelParams& params,
                  const PreparedSet& set, const std::string& csv_path,
                  const std::string& jsonl_path);

}  // namespace recam::train
