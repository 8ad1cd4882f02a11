#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cervix {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return n_; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * n_ + pred]; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * n_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

// trace / total
double accuracy(const ConfusionMatrix& cm);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  // 0/0 cases report 0 and set the matching flag.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

// One-vs-rest precision/recall/F1 per class.
std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& cm);

struct MacroMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  friend bool operator==(const MacroMetrics&, const MacroMetrics&) = default;
};

// Unweighted mean over classes, flagged-zero classes included.
MacroMetrics macro(std::span<const ClassMetrics> per_class);

struct MetricsReport {
  std::vector<std::string> class_names;
  ConfusionMatrix matrix{1};
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  MacroMetrics macro;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport make_report(const ConfusionMatrix& cm, std::vector<std::string> class_names);

enum class ReportFormat { text, structured };

// Deterministic rendering. The structured form is JSON and parses back
// with parse_report.
std::string render_report(const MetricsReport& report, ReportFormat format);
MetricsReport parse_report(std::string_view structured);

}  // namespace cervix
