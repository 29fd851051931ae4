// Scaling benchmark: the log-log slope estimator against closed-form and
// hand-computed regressions, row/counter consistency with the kernel
// instrumentation, the memory-budget skip path, and report serialization
// (with wall time as the only nondeterministic column).

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recam/attention.hpp"
#include "recam/bench.hpp"
#include "recam/errors.hpp"

using namespace recam;
using bench::BenchConfig;
using bench::BenchReport;
using bench::BenchRow;
using bench::fit_exponent;
using bench::run_bench;

namespace {

BenchConfig small_config() {
  BenchConfig bc;
  bc.lengths = {64, 128, 256};
  bc.window = 8;
  bc.globals = 4;
  bc.reps = 1;
  bc.d = 16;
  bc.heads = 2;
  bc.seed = 99;
  return bc;
}

// CSV with the wall-time column blanked, for determinism comparisons.
std::string strip_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::vector<std::string> fields;
    while (std::getline(cells, cell, ',')) fields.push_back(cell);
    if (fields.size() == 6) fields[4] = "-";
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out << ',';
      out << fields[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("fit_exponent recovers exact power laws") {
  for (double k : {1.0, 2.0, 1.5, 0.5}) {
    CAPTURE(k);
    std::vector<std::pair<double, double>> pts;
    for (double x : {256.0, 512.0, 1024.0, 2048.0}) {
      pts.emplace_back(x, 3.0 * std::pow(x, k));
    }
    CHECK(std::abs(fit_exponent(pts) - k) < 1e-12);
  }

  SUBCASE("least-squares slope on a hand-computed non-collinear case") {
    // Points (1, 1), (e, e), (e^2, e^4): logs are (0,0), (1,1), (2,4).
    // Slope = cov/var = ((0-1)(0-5/3) + 0 + (1)(4-5/3)) / ((.-1)^2 sum = 2) = 2.
    const double e = std::exp(1.0);
    std::vector<std::pair<double, double>> pts{
        {1.0, 1.0}, {e, e}, {e * e, std::exp(4.0)}};
    CHECK(fit_exponent(pts) == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("input contracts") {
    CHECK_THROWS_AS(fit_exponent({{1.0, 1.0}}), ContractError);
    CHECK_THROWS_AS(fit_exponent({{1.0, 1.0}, {-2.0, 4.0}}), ContractError);
    CHECK_THROWS_AS(fit_exponent({{1.0, 1.0}, {2.0, 0.0}}), ContractError);
    CHECK_THROWS_AS(fit_exponent({{2.0, 1.0}, {2.0, 4.0}}), ContractError);
  }
}

TEST_CASE("bench config validation") {
  BenchConfig bc = small_config();
  bc.validate();
  SUBCASE("no lengths") {
    bc.lengths.clear();
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
  SUBCASE("no kernels") {
    bc.kernels.clear();
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
  SUBCASE("bad window") {
    bc.window = 0;
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
  SUBCASE("bad reps") {
    bc.reps = 0;
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
  SUBCASE("width not a multiple of heads") {
    bc.d = 15;
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
  SUBCASE("length below the window") {
    bc.lengths = {4};
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
  SUBCASE("more globals than positions") {
    bc.lengths = {64};
    bc.globals = 65;
    CHECK_THROWS_AS(bc.validate(), ConfigError);
  }
}

TEST_CASE("run_bench rows are sorted, counted, and instrumented consistently") {
  const BenchConfig bc = small_config();
  const BenchReport report = run_bench(bc);
  const int64_t w = attn::effective_odd_window(bc.window);

  // One row per (kernel, length), sorted by kernel name then length.
  REQUIRE(report.rows.size() == 9);
  for (size_t i = 1; i < report.rows.size(); ++i) {
    const BenchRow& a = report.rows[i - 1];
    const BenchRow& b = report.rows[i];
    CHECK((a.kernel < b.kernel || (a.kernel == b.kernel && a.seq_len < b.seq_len)));
  }

  for (const BenchRow& row : report.rows) {
    CAPTURE(row.kernel);
    CAPTURE(row.seq_len);
    CHECK_FALSE(row.skipped);
    CHECK(row.wall_ms >= 0.0);

    const attn::KernelId id = attn::kernel_from_string(row.kernel);
    const int64_t g = id == attn::KernelId::GlobalAugmented
                          ? std::min<int64_t>(bc.globals, row.seq_len)
                          : 0;
    // The score-ops column must equal the analytic counter exactly, and the
    // weight buffer is one double per head per scored pair.
    CHECK(row.score_ops == attn::count_score_ops(id, row.seq_len, w, g));
    CHECK(row.weight_bytes ==
          bc.heads * row.score_ops * static_cast<int64_t>(sizeof(double)));
  }

  // Dense counts grow quadratically; sparse kernels with a fixed window grow
  // close to linearly over these lengths.
  REQUIRE(report.count_exponent.count("dense") == 1);
  REQUIRE(report.count_exponent.count("windowed") == 1);
  REQUIRE(report.count_exponent.count("windowed_global") == 1);
  CHECK(report.count_exponent.at("dense") == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(report.count_exponent.at("windowed") > 0.9);
  CHECK(report.count_exponent.at("windowed") < 1.2);
  CHECK(report.count_exponent.at("windowed_global") > 0.9);
  CHECK(report.count_exponent.at("windowed_global") < 1.3);
}

TEST_CASE("dense rows over the memory budget are skipped, not run") {
  BenchConfig bc = small_config();
  // 128 KiB admits dense n=64 (2 heads * 64^2 * 8 = 64 KiB) and every sparse
  // row here (the largest needs ~70 KiB), but not dense n=128 (256 KiB).
  bc.memory_budget_bytes = 128 * 1024;
  const BenchReport report = run_bench(bc);

  int64_t dense_run = 0, dense_skipped = 0;
  for (const BenchRow& row : report.rows) {
    if (row.kernel != "dense") {
      CHECK_FALSE(row.skipped);  // sparse buffers stay within this budget
      continue;
    }
    if (row.skipped) {
      ++dense_skipped;
      CHECK(row.seq_len > 64);
      CHECK(row.wall_ms == 0.0);
      // Analytic columns are still filled in for the report.
      CHECK(row.score_ops == row.seq_len * row.seq_len);
      CHECK(row.weight_bytes > bc.memory_budget_bytes);
    } else {
      ++dense_run;
      CHECK(row.seq_len == 64);
    }
  }
  CHECK(dense_run == 1);
  CHECK(dense_skipped == 2);

  // A single surviving dense point cannot support a fitted exponent.
  CHECK(report.count_exponent.count("dense") == 0);
  CHECK(report.count_exponent.count("windowed") == 1);
}

TEST_CASE("bench reports serialize consistently and deterministically") {
  const BenchConfig bc = small_config();
  const BenchReport a = run_bench(bc);
  const BenchReport b = run_bench(bc);

  const std::string csv = a.to_csv();
  CHECK(csv.rfind("kernel,seq_len,score_ops,weight_bytes,wall_ms,skipped\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<int64_t>(a.rows.size()) + 1);

  // Identical configs agree on everything except wall time.
  CHECK(strip_timing(a.to_csv()) == strip_timing(b.to_csv()));
  CHECK(a.count_exponent == b.count_exponent);

  const nlohmann::json j = a.to_json();
  REQUIRE(j["rows"].size() == a.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(j["rows"][i]["kernel"] == a.rows[i].kernel);
    CHECK(j["rows"][i]["seq_len"] == a.rows[i].seq_len);
    CHECK(j["rows"][i]["score_ops"] == a.rows[i].score_ops);
    CHECK(j["rows"][i]["weight_bytes"] == a.rows[i].weight_bytes);
    CHECK(j["rows"][i]["skipped"] == a.rows[i].skipped);
  }
  for (const auto& [kernel, exponent] : a.count_exponent) {
    CHECK(j["count_exponent"][kernel] == exponent);
  }
}
