#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sou {

/// One-vs-rest counts for every class; labels are indices into `classes`.
struct ConfusionCounts {
  struct PerClass {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  };
  std::vector<PerClass> per_class;
  std::size_t n = 0;
};

ConfusionCounts confusion(std::span<const int> pred, std::span<const int> truth,
                          std::size_t n_classes);

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counted one half. `truth` holds 1 for the positive class.
double auc_roc(std::span<const double> scores, std::span<const int> truth);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool operator==(const ClassMetrics&) const = default;
};

struct MetricRow {
  double acc = 0.0;  // percent
  double auc = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::string> classes;
  std::vector<ClassMetrics> per_class;  // indexed like `classes`
  std::string positive_class;
  std::size_t n = 0;

  const ClassMetrics& at(const std::string& label) const;
  bool operator==(const MetricRow&) const = default;
};

/// `scores` are probabilities of `classes[positive]`.
MetricRow metric_row(std::span<const double> scores, std::span<const int> pred,
                     std::span<const int> truth, const std::vector<std::string>& classes,
                     std::size_t positive);

/// Arithmetic mean of chunk-level probability vectors.
std::vector<double> aggregate_recording(const std::vector<std::vector<double>>& chunk_probs);

std::size_t argmax(std::span<const double> v);

}  // namespace sou
