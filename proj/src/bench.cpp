#include "recam/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "recam/errors.hpp"
#include "recam/ioutil.hpp"
#include "recam/rng.hpp"
#include "recam/tensor.hpp"

namespace recam::bench {

void BenchConfig::validate() const {
  if (lengths.empty()) throw ConfigError("bench: no sequence lengths");
  if (kernels.empty()) throw ConfigError("bench: no kernels");
  if (window < 1) throw ConfigError("bench: window must be positive");
  if (globals < 0) throw ConfigError("bench: negative global count");
  if (reps < 1) throw ConfigError("bench: reps must be positive");
  if (d < 1 || heads < 1 || d % heads != 0) {
    throw ConfigError("bench: width must be a positive multiple of heads");
  }
  const int64_t w = attn::effective_odd_window(window);
  for (int64_t n : lengths) {
    if (n < w) {
      throw ConfigError("bench: length " + std::to_string(n) +
                        " is below the attention window " + std::to_string(w));
    }
    if (globals > n) {
      throw ConfigError("bench: more global positions than length " +
                        std::to_string(n));
    }
  }
}

double fit_exponent(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) {
    throw ContractError("fit_exponent: need at least two points");
  }
  double sx = 0.0, sy = 0.0;
  std::vector<std::pair<double, double>> logs;
  logs.reserve(points.size());
  for (const auto& [x, y] : points) {
    if (x <= 0.0 || y <= 0.0) {
      throw ContractError("fit_exponent: points must be positive");
    }
    logs.emplace_back(std::log(x), std::log(y));
    sx += logs.back().first;
    sy += logs.back().second;
  }
  const double mx = sx / static_cast<double>(logs.size());
  const double my = sy / static_cast<double>(logs.size());
  double num = 0.0, den = 0.0;
  for (const auto& [lx, ly] : logs) {
    num += (lx - mx) * (ly - my);
    den += (lx - mx) * (lx - mx);
  }
  if (den == 0.0) throw ContractError("fit_exponent: all x values identical");
  return num / den;
}

BenchReport run_bench(const BenchConfig& config) {
  config.validate();
  const int64_t w = attn::effective_odd_window(config.window);
  const Rng root(config.seed);
  const attn::AttentionParams params = attn::AttentionParams::init(
      config.d, config.heads, root.split("params"),
      /*separate_global_projections=*/true);

  BenchReport report;
  std::vector<int64_t> lengths = config.lengths;
  std::sort(lengths.begin(), lengths.end());
  std::vector<attn::KernelId> kernels = config.kernels;
  std::sort(kernels.begin(), kernels.end(), [](attn::KernelId a, attn::KernelId b) {
    return attn::kernel_name(a) < attn::kernel_name(b);
  });

  for (attn::KernelId kernel : kernels) {
    std::vector<std::pair<double, double>> count_points, time_points;
    for (int64_t n : lengths) {
      BenchRow row;
      row.kernel = attn::kernel_name(kernel);
      row.seq_len = n;
      const int64_t g = kernel == attn::KernelId::GlobalAugmented
                            ? std::min<int64_t>(config.globals, n)
                            : 0;
      const int64_t weights_needed =
          kernel == attn::KernelId::Dense
              ? config.heads * n * n * static_cast<int64_t>(sizeof(double))
              : config.heads * attn::count_score_ops(kernel, n, w, g) *
                    static_cast<int64_t>(sizeof(double));
      if (weights_needed > config.memory_budget_bytes) {
        row.skipped = true;
        row.score_ops = attn::count_score_ops(kernel, n, w, g);
        row.weight_bytes = weights_needed;
        report.rows.push_back(row);
        continue;
      }

      Rng xr = root.split("x" + std::to_string(n));
      const Tensor x = Tensor::randn({n, config.d}, xr, 1.0);
      attn::AttentionPattern pattern;
      switch (kernel) {
        case attn::KernelId::Dense:
          pattern = attn::build_pattern(n, attn::AttentionPattern::kFull);
          break;
        case attn::KernelId::Windowed:
          pattern = attn::build_pattern(n, w);
          break;
        case attn::KernelId::GlobalAugmented: {
          std::vector<int64_t> globals;
          for (int64_t i = n - g; i < n; ++i) globals.push_back(i);
          pattern = attn::build_pattern(n, w, std::move(globals));
          break;
        }
      }

      attn::reset_kernel_stats();
      const auto t0 = std::chrono::steady_clock::now();
      for (int64_t rep = 0; rep < config.reps; ++rep) {
        switch (kernel) {
          case attn::KernelId::Dense:
            attn::dense_attention(x, params, pattern);
            break;
          case attn::KernelId::Windowed:
            attn::windowed_attention(x, params, w);
            break;
          case attn::KernelId::GlobalAugmented:
            attn::global_augmented_attention(x, params, pattern);
            break;
        }
      }
      const auto t1 = std::chrono::steady_clock::now();
      const attn::KernelStats stats = attn::kernel_stats();
      row.score_ops = stats.score_ops / config.reps;
      row.weight_bytes = stats.peak_weight_bytes;
      row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                    static_cast<double>(config.reps);
      report.rows.push_back(row);
      count_points.emplace_back(static_cast<double>(n),
                                static_cast<double>(row.score_ops));
      if (row.wall_ms > 0.0) {
        time_points.emplace_back(static_cast<double>(n), row.wall_ms);
      }
    }
    const std::string name = attn::kernel_name(kernel);
    if (count_points.size() >= 2) {
      report.count_exponent[name] = fit_exponent(count_points);
    }
    if (time_points.size() >= 2) {
      report.time_exponent[name] = fit_exponent(time_points);
    }
  }
  return report;
}

std::string BenchReport::to_csv() const {
  std::ostringstream out;
  out << "kernel,seq_len,score_ops,weight_bytes,wall_ms,skipped\n";
  for (const BenchRow& r : rows) {
    out << r.kernel << ',' << r.seq_len << ',' << r.score_ops << ','
        << r.weight_bytes << ',' << ioutil::fmt_double(r.wall_ms) << ','
        << (r.skipped ? 1 : 0) << '\n';
  }
  return out.str();
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json rws = nlohmann::ordered_json::array();
  for (const BenchRow& r : rows) {
    rws.push_back({{"kernel", r.kernel},
                   {"seq_len", r.seq_len},
                   {"score_ops", r.score_ops},
                   {"weight_bytes", r.weight_bytes},
                   {"wall_ms", r.wall_ms},
                   {"skipped", r.skipped}});
  }
  j["rows"] = rws;
  j["count_exponent"] = count_exponent;
  j["time_exponent"] = time_exponent;
  return j;
}

}  // namespace recam::bench
