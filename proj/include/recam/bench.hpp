#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recam/attention.hpp"

namespace recam::bench {

struct BenchConfig {
  std::vector<int64_t> lengths = {256, 512, 1024, 2048, 4096};
  std::vector<attn::KernelId> kernels = {attn::KernelId::Dense,
                                         attn::KernelId::Windowed,
                                         attn::KernelId::GlobalAugmented};
  int64_t window = 32;   // neighbor budget; kernels use the odd effective width
  int64_t globals = 16;  // global positions (the trailing ones), capped at 16
  int64_t reps = 3;      // timing repetitions, run serially
  int64_t d = 64;
  int64_t heads = 2;
  int64_t memory_budget_bytes = 2LL << 30;  // cap on the attention-weight buffer
  uint64_t seed = 12345;

  void validate() const;
};

struct BenchRow {
  std::string kernel;
  int64_t seq_len = 0;
  int64_t score_ops = 0;     // instrumented query-key evaluations, one forward
  int64_t weight_bytes = 0;  // attention-weight buffer for that forward
  double wall_ms = 0.0;      // mean over reps
  bool skipped = false;      // over the memory budget; analytic columns only
};

struct BenchReport {
  std::vector<BenchRow> rows;  // sorted by kernel then seq_len
  // Least-squares slope on log-log points. Exponents from the deterministic
  // score-op counter are the primary evidence; wall-time exponents corroborate.
  std::map<std::string, double> count_exponent;
  std::map<std::string, double> time_exponent;

  std::string to_csv() const;  // rows only; wall_ms is the one nondeterministic column
  nlohmann::json to_json() const;
};

// Slope of the least-squares line through (log x, log y); needs >= 2 points
// with positive coordinates.
double fit_exponent(const std::vector<std::pair<double, double>>& points);

// Runs every configured kernel forward at every length with fixed random
// parameters; a dense length whose weight buffer would exceed the memory
// budget is marked skipped instead of run.
BenchReport run_bench(const BenchConfig& config);

}  // namespace recam::bench
