#include "sou/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sou/error.hpp"

namespace sou {

ConfusionCounts confusion(std::span<const int> pred, std::span<const int> truth,
                          std::size_t n_classes) {
  if (pred.size() != truth.size()) throw ShapeError("confusion: prediction/truth length mismatch");
  if (pred.empty()) throw ConfigError("confusion: empty input");
  ConfusionCounts c;
  c.n = pred.size();
  c.per_class.resize(n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= n_classes ||
        static_cast<std::size_t>(truth[i]) >= n_classes) {
      throw ConfigError("confusion: label out of range at index " + std::to_string(i));
    }
  }
  for (std::size_t k = 0; k < n_classes; ++k) {
    auto& pc = c.per_class[k];
    const int label = static_cast<int>(k);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == label, t = truth[i] == label;
      if (p && t) ++pc.tp;
      else if (p) ++pc.fp;
      else if (t) ++pc.fn;
      else ++pc.tn;
    }
  }
  return c;
}

double auc_roc(std::span<const double> scores, std::span<const int> truth) {
  if (scores.size() != truth.size()) throw ShapeError("auc_roc: score/truth length mismatch");
  std::size_t n_pos = 0;
  for (int t : truth) n_pos += t == 1 ? 1 : 0;
  const std::size_t n_neg = truth.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ConfigError("auc_roc: undefined AUC, truth has a single class");

  // Rank-sum with midranks for ties; equals the pairwise count exactly.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Ranks are doubled so that midranks stay integral.
  std::size_t rank_sum_x2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t midrank_x2 = (i + 1) + j;  // (i+1 + j) is twice the mean rank of i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == 1) rank_sum_x2 += midrank_x2;
    }
    i = j;
  }
  const std::size_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

const ClassMetrics& MetricRow::at(const std::string& label) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == label) return per_class[i];
  }
  throw ConfigError("metric row has no class '" + label + "'");
}

MetricRow metric_row(std::span<const double> scores, std::span<const int> pred,
                     std::span<const int> truth, const std::vector<std::string>& classes,
                     std::size_t positive) {
  if (scores.size() != truth.size()) throw ShapeError("metric_row: score/truth length mismatch");
  if (positive >= classes.size()) throw ConfigError("metric_row: positive class out of range");
  const auto cm = confusion(pred, truth, classes.size());

  MetricRow row;
  row.classes = classes;
  row.positive_class = classes[positive];
  row.n = cm.n;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
  row.acc = 100.0 * static_cast<double>(correct) / static_cast<double>(cm.n);

  for (const auto& pc : cm.per_class) {
    ClassMetrics m;
    m.precision = pc.tp + pc.fp == 0 ? 0.0 : static_cast<double>(pc.tp) / static_cast<double>(pc.tp + pc.fp);
    m.recall = pc.tp + pc.fn == 0 ? 0.0 : static_cast<double>(pc.tp) / static_cast<double>(pc.tp + pc.fn);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    row.per_class.push_back(m);
    row.macro_f1 += m.f1;
    row.weighted_f1 += m.f1 * static_cast<double>(pc.tp + pc.fn);
  }
  row.macro_f1 /= static_cast<double>(classes.size());
  row.weighted_f1 /= static_cast<double>(cm.n);

  std::vector<int> positive_truth(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    positive_truth[i] = truth[i] == static_cast<int>(positive) ? 1 : 0;
  }
  row.auc = auc_roc(scores, positive_truth);
  return row;
}

std::vector<double> aggregate_recording(const std::vector<std::vector<double>>& chunk_probs) {
  if (chunk_probs.empty()) throw ConfigError("aggregate_recording: no chunks");
  const std::size_t k = chunk_probs.front().size();
  std::vector<double> mean(k, 0.0);
  for (const auto& p : chunk_probs) {
    if (p.size() != k) throw ShapeError("aggregate_recording: chunk vectors differ in length");
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
      throw ConfigError("aggregate_recording: chunk probabilities do not sum to 1");
    }
    for (std::size_t j = 0; j < k; ++j) mean[j] += p[j];
  }
  for (double& v : mean) v /= static_cast<double>(chunk_probs.size());
  return mean;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace sou
