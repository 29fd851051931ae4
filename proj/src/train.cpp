#include "recam/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "recam/errors.hpp"
#include "recam/ioutil.hpp"
#include "recam/kernels.hpp"
#include "recam/ops.hpp"
#include "recam/rng.hpp"

namespace recam::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
    throw ConfigError("train: betas must be in (0, 1)");
  }
  if (eps <= 0.0) throw ConfigError("train: eps must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("train: epochs must be positive");
  if (validation_interval < 1) {
    throw ConfigError("train: validation_interval must be at least 1");
  }
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw ConfigError("train: warmup_fraction must be in [0, 1)");
  }
  if (selection != "accuracy" && selection != "loss") {
    throw ConfigError("train: selection must be accuracy or loss, got '" +
                      selection + "'");
  }
}

AdamW::AdamW(std::vector<Tensor> params, double beta1, double beta2, double eps,
             double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void AdamW::step(double lr, double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    std::vector<double>& w = p.data();
    for (size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] * grad_scale;
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[k]);
    }
  }
}

void AdamW::zero_grads() {
  for (Tensor& p : params_) p.zero_grad();
}

double lr_schedule(int64_t step, int64_t total_steps, double peak,
                   double warmup_fraction) {
  if (total_steps < 1) throw ContractError("lr_schedule: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw ContractError("lr_schedule: step " + std::to_string(step) +
                        " outside [0, " + std::to_string(total_steps) + "]");
  }
  const auto warmup =
      static_cast<int64_t>(warmup_fraction * static_cast<double>(total_steps));
  if (step == warmup) return peak;  // exact at the boundary
  if (step < warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

PreparedSet prepare(const std::vector<data::RecamSample>& samples,
                    const data::Vocab& vocab, const model::ModelConfig& config) {
  PreparedSet out;
  out.reserve(samples.size());
  for (const data::RecamSample& s : samples) {
    out.push_back(PreparedSample{data::build_chunks(s, vocab, config.max_seq_len),
                                 s.label});
  }
  return out;
}

EvalOutcome evaluate(const model::ModelConfig& config,
                     const model::ModelParams& params, const PreparedSet& set) {
  for (const PreparedSample& s : set) {
    if (s.label < 0) throw ContractError("evaluate: unlabeled sample");
  }
  const auto n = static_cast<int64_t>(set.size());
  std::vector<int> gold(static_cast<size_t>(n)), pred(static_cast<size_t>(n));
  std::vector<double> losses(static_cast<size_t>(n), 0.0);
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const PreparedSample& s = set[static_cast<size_t>(i)];
    const model::SampleOutput out = model::forward_sample(s.chunks, config, params);
    gold[static_cast<size_t>(i)] = s.label;
    pred[static_cast<size_t>(i)] = out.answer;
    losses[static_cast<size_t>(i)] = model::loss(out.logits, s.label)(0);
  }
  EvalOutcome result;
  result.metrics = metrics::compute_metrics(gold, pred);
  double total = 0.0;
  for (double l : losses) total += l;
  result.mean_loss = n > 0 ? total / static_cast<double>(n) : 0.0;
  return result;
}

namespace {

std::vector<std::vector<double>> snapshot(
    std::vector<std::pair<std::string, Tensor>>& named) {
  std::vector<std::vector<double>> out;
  out.reserve(named.size());
  for (auto& [name, t] : named) out.push_back(t.data());
  return out;
}

void restore(std::vector<std::pair<std::string, Tensor>>& named,
             const std::vector<std::vector<double>>& saved) {
  for (size_t i = 0; i < named.size(); ++i) named[i].second.data() = saved[i];
}

}  // namespace

TrainResult train(const model::ModelConfig& config, model::ModelParams& params,
                  const PreparedSet& train_set, const PreparedSet& val_set,
                  const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  for (const PreparedSample& s : train_set) {
    if (s.label < 0) throw ContractError("train: unlabeled training sample");
  }

  params.set_grad_enabled(true);
  auto named = params.named_tensors();
  std::vector<Tensor> tensors;
  tensors.reserve(named.size());
  for (auto& [name, t] : named) tensors.push_back(t);
  AdamW opt(tensors, tc.beta1, tc.beta2, tc.eps, tc.weight_decay);

  const auto n = static_cast<int64_t>(train_set.size());
  const int64_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const int64_t total_steps = tc.epochs * steps_per_epoch;

  const Rng root(tc.seed);
  Rng dropout_rng = root.split("dropout");
  Rng* drop = config.dropout > 0.0 ? &dropout_rng : nullptr;

  TrainResult result;
  result.total_steps = total_steps;
  const bool by_accuracy = tc.selection == "accuracy";
  double best_metric = by_accuracy ? -1.0 : std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params = snapshot(named);
  result.best_step = 0;

  int64_t step = 0;
  double loss_since_validation = 0.0;
  int64_t samples_since_validation = 0;

  auto validate_now = [&](double lr_used) {
    const EvalOutcome val = evaluate(config, params, val_set);
    HistoryRow row;
    row.step = step;
    row.lr = lr_used;
    row.train_loss = samples_since_validation > 0
                         ? loss_since_validation /
                               static_cast<double>(samples_since_validation)
                         : 0.0;
    row.val_loss = val.mean_loss;
    row.val_acc = val.metrics.accuracy;
    result.history.push_back(row);
    loss_since_validation = 0.0;
    samples_since_validation = 0;
    const double metric = by_accuracy ? val.metrics.accuracy : val.mean_loss;
    const bool improved = by_accuracy ? metric > best_metric : metric < best_metric;
    if (improved) {
      best_metric = metric;
      best_params = snapshot(named);
      result.best_step = step;
      result.best_val_accuracy = val.metrics.accuracy;
      result.best_val_loss = val.mean_loss;
    }
  };

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double lr_used = 0.0;
  for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle = root.split("shuffle.epoch" + std::to_string(epoch));
    for (int64_t i = n - 1; i > 0; --i) {
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle.uniform_int(i + 1))]);
    }
    for (int64_t start = 0; start < n; start += tc.batch_size) {
      const int64_t batch = std::min(tc.batch_size, n - start);
      opt.zero_grads();
      for (int64_t b = 0; b < batch; ++b) {
        const PreparedSample& s = train_set[static_cast<size_t>(
            order[static_cast<size_t>(start + b)])];
        Tape tape;
        double sample_loss = 0.0;
        {
          Tape::Scope scope(tape);
          const model::SampleOutput out =
              model::forward_sample(s.chunks, config, params, drop);
          const Tensor l = model::loss(out.logits, s.label);
          sample_loss = l(0);
          tape.backward(l);
        }
        if (!std::isfinite(sample_loss)) {
          throw DivergenceError("training loss became non-finite at step " +
                                    std::to_string(step + 1),
                                step + 1);
        }
        loss_since_validation += sample_loss;
        ++samples_since_validation;
      }
      ++step;
      lr_used = lr_schedule(step, total_steps, tc.lr, tc.warmup_fraction);
      opt.step(lr_used, 1.0 / static_cast<double>(batch));
      if (step % tc.validation_interval == 0) validate_now(lr_used);
    }
  }
  if (result.history.empty() || result.history.back().step != step) {
    validate_now(lr_used);
  }

  restore(named, best_params);
  return result;
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream out;
  out << "step,lr,train_loss,val_loss,val_acc\n";
  for (const HistoryRow& row : history) {
    out << row.step << ',' << ioutil::fmt_double(row.lr) << ','
        << ioutil::fmt_double(row.train_loss) << ','
        << ioutil::fmt_double(row.val_loss) << ','
        << ioutil::fmt_double(row.val_acc) << '\n';
  }
  return out.str();
}

void predict_file(const model::ModelConfig& config, const model::ModelParams& params,
                  const PreparedSet& set, const std::string& csv_path,
                  const std::string& jsonl_path) {
  const auto n = static_cast<int64_t>(set.size());
  std::vector<model::SampleOutput> outputs(static_cast<size_t>(n));
  const bool par = backend() == Backend::OpenMP;
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    outputs[static_cast<size_t>(i)] =
        model::forward_sample(set[static_cast<size_t>(i)].chunks, config, params);
  }
  if (!csv_path.empty()) {
    std::ostringstream csv;
    csv << "index,prediction,p0,p1,p2,p3,p4\n";
    for (int64_t i = 0; i < n; ++i) {
      const model::SampleOutput& o = outputs[static_cast<size_t>(i)];
      csv << i << ',' << o.answer;
      for (int j = 0; j < 5; ++j) csv << ',' << ioutil::fmt_double(o.probabilities(j));
      csv << '\n';
    }
    ioutil::write_text_file(csv_path, csv.str());
  }
  if (!jsonl_path.empty()) {
    std::ostringstream jl;
    for (int64_t i = 0; i < n; ++i) {
      const model::SampleOutput& o = outputs[static_cast<size_t>(i)];
      nlohmann::ordered_json j;
      j["index"] = i;
      j["prediction"] = o.answer;
      std::array<double, 5> probs{};
      for (int k = 0; k < 5; ++k) probs[static_cast<size_t>(k)] = o.probabilities(k);
      j["probabilities"] = probs;
      jl << j.dump() << '\n';
    }
    ioutil::write_text_file(jsonl_path, jl.str());
  }
}

}  // namespace recam::train
