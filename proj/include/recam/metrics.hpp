#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

namespace recam::metrics {

// Accuracy plus the F1 family over the 5-way label set, derived from the
// full confusion matrix. A class with no predicted and no gold support
// contributes precision = recall = F1 = 0 (never NaN); macro-F1 always
// divides by 5; weighted-F1 is the support-weighted mean.
struct MetricsReport {
  int64_t sample_count = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::array<std::array<int64_t, 5>, 5> confusion{};  // [gold][predicted]
  std::array<double, 5> precision{};
  std::array<double, 5> recall{};
  std::array<double, 5> f1{};
  std::array<int64_t, 5> support{};

  nlohmann::json to_json() const;
};

// gold and predicted must have equal length with entries in 0..4.
MetricsReport compute_metrics(const std::vector<int>& gold,
                              const std::vector<int>& predicted);

}  // namespace recam::metrics
