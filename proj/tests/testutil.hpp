#pragma once

// Shared helpers for the unit and acceptance suites: tolerance checks,
// independent scalar oracles, and a central-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <vector>

#include "recam/ops.hpp"
#include "recam/rng.hpp"
#include "recam/tensor.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
  return std::fabs(got - want) /
         std::max({std::fabs(got), std::fabs(want), 1.0});
}

inline double max_abs_diff(const recam::Tensor& a, const recam::Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::fabs(a.data()[static_cast<size_t>(i)] -
                              b.data()[static_cast<size_t>(i)]));
  }
  return m;
}

inline bool bitwise_equal(const std::vector<double>& a,
                          const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline bool bitwise_equal(const recam::Tensor& a, const recam::Tensor& b) {
  return a.shape() == b.shape() && bitwise_equal(a.data(), b.data());
}

// Independent triple-loop product oracle for [m x k] * [k x n].
inline std::vector<double> matmul_oracle(const std::vector<double>& a,
                                         const std::vector<double>& b,
                                         int64_t m, int64_t k, int64_t n) {
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < k; ++t) {
        acc += a[static_cast<size_t>(i * k + t)] *
               b[static_cast<size_t>(t * n + j)];
      }
      out[static_cast<size_t>(i * n + j)] = acc;
    }
  }
  return out;
}

// Independent two-pass softmax oracle for one row.
inline std::vector<double> softmax_oracle(const std::vector<double>& row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  std::vector<double> out(row.size());
  double sum = 0.0;
  for (size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Independent layer-norm oracle for one row (two-pass mean/variance).
inline std::vector<double> layer_norm_oracle(const std::vector<double>& row,
                                             const std::vector<double>& gain,
                                             const std::vector<double>& bias,
                                             double eps) {
  const auto d = row.size();
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(d);
  for (size_t i = 0; i < d; ++i) out[i] = (row[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

// Central-difference gradient check. Runs loss_fn once under a tape to get
// analytic leaf gradients, then perturbs every entry of every leaf (or a
// random subset of max_entries per leaf when the leaf is larger) and compares
// against (f(x+h) - f(x-h)) / 2h. Returns the worst relative error seen.
// loss_fn must be deterministic and must return a scalar tensor.
inline double fd_max_rel_err(const std::function<recam::Tensor()>& loss_fn,
                             const std::vector<recam::Tensor>& leaves,
                             double h = 1e-4, int64_t max_entries = -1,
                             uint64_t pick_seed = 7) {
  for (const recam::Tensor& leaf : leaves) {
    const_cast<recam::Tensor&>(leaf).set_grad_enabled(true);
    const_cast<recam::Tensor&>(leaf).zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    recam::Tape tape;
    recam::Tape::Scope scope(tape);
    recam::Tensor loss = loss_fn();
    tape.backward(loss);
    for (const recam::Tensor& leaf : leaves) analytic.push_back(leaf.grad());
  }

  recam::Rng pick(pick_seed);
  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    recam::Tensor leaf = leaves[li];
    std::vector<int64_t> entries;
    if (max_entries < 0 || leaf.numel() <= max_entries) {
      entries.resize(static_cast<size_t>(leaf.numel()));
      for (int64_t i = 0; i < leaf.numel(); ++i) entries[static_cast<size_t>(i)] = i;
    } else {
      for (int64_t i = 0; i < max_entries; ++i)
        entries.push_back(pick.uniform_int(leaf.numel()));
    }
    for (int64_t idx : entries) {
      double& slot = leaf.data()[static_cast<size_t>(idx)];
      const double saved = slot;
      slot = saved + h;
      const double up = loss_fn()(0);
      slot = saved - h;
      const double down = loss_fn()(0);
      slot = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[li][static_cast<size_t>(idx)];
      worst = std::max(worst, rel_err(an, fd));
    }
  }
  return worst;
}

}  // namespace testutil
