#pragma once

#include <span>
#include <vector>

namespace testing_support {

struct DirectMetrics {
  double accuracy = 0.0;
  std::vector<double> precision, recall, f1;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

// Walks the samples once per class and counts TP, FP and FN directly,
// without building a confusion matrix. 0/0 is taken as 0.
inline DirectMetrics direct_metrics(std::span<const int> preds, std::span<const int> labels, int num_classes) {
  DirectMetrics d;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i] ? 1 : 0;
  d.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());

  for (int c = 0; c < num_classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && labels[i] == c) ++tp;
      if (preds[i] == c && labels[i] != c) ++fp;
      if (preds[i] != c && labels[i] == c) ++fn;
    }
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    d.precision.push_back(p);
    d.recall.push_back(r);
    d.f1.push_back(p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r));
  }
  for (int c = 0; c < num_classes; ++c) {
    d.macro_precision += d.precision[c];
    d.macro_recall += d.recall[c];
    d.macro_f1 += d.f1[c];
  }
  d.macro_precision /= num_classes;
  d.macro_recall /= num_classes;
  d.macro_f1 /= num_classes;
  return d;
}

}  // namespace testing_support
