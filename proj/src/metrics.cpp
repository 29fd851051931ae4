#include "recam/metrics.hpp"

#include "recam/errors.hpp"

namespace recam::metrics {

MetricsReport compute_metrics(const std::vector<int>& gold,
                              const std::vector<int>& predicted) {
  if (gold.size() != predicted.size()) {
    throw ContractError("metrics: gold and prediction counts differ");
  }
  MetricsReport r;
  r.sample_count = static_cast<int64_t>(gold.size());
  int64_t correct = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] > 4 || predicted[i] < 0 || predicted[i] > 4) {
      throw ContractError("metrics: labels must be in 0..4");
    }
    ++r.confusion[static_cast<size_t>(gold[i])][static_cast<size_t>(predicted[i])];
    if (gold[i] == predicted[i]) ++correct;
  }
  if (r.sample_count > 0) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.sample_count);
  }
  for (size_t c = 0; c < 5; ++c) {
    int64_t tp = r.confusion[c][c];
    int64_t gold_support = 0, predicted_support = 0;
    for (size_t k = 0; k < 5; ++k) {
      gold_support += r.confusion[c][k];
      predicted_support += r.confusion[k][c];
    }
    r.support[c] = gold_support;
    r.precision[c] = predicted_support > 0
                         ? static_cast<double>(tp) / static_cast<double>(predicted_support)
                         : 0.0;
    r.recall[c] = gold_support > 0
                      ? static_cast<double>(tp) / static_cast<double>(gold_support)
                      : 0.0;
    const double denom = r.precision[c] + r.recall[c];
    r.f1[c] = denom > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / denom : 0.0;
  }
  double macro = 0.0, weighted = 0.0;
  for (size_t c = 0; c < 5; ++c) {
    macro += r.f1[c];
    if (r.sample_count > 0) {
      weighted += static_cast<double>(r.support[c]) /
                  static_cast<double>(r.sample_count) * r.f1[c];
    }
  }
  r.macro_f1 = macro / 5.0;
  r.weighted_f1 = weighted;
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["sample_count"] = sample_count;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (size_t c = 0; c < 5; ++c) {
    classes.push_back({{"class", c},
                       {"precision", precision[c]},
                       {"recall", recall[c]},
                       {"f1", f1[c]},
                       {"support", support[c]}});
  }
  j["per_class"] = classes;
  nlohmann::ordered_json conf = nlohmann::ordered_json::array();
  for (const auto& row : confusion) conf.push_back(row);
  j["confusion"] = conf;
  return j;
}

}  // namespace recam::metrics
