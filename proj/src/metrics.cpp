#include "cervix/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "cervix/errors.hpp"

namespace cervix {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < n_; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  if (preds.size() != labels.size()) {
    throw ValidationError(fmt::format("{} predictions for {} labels", preds.size(), labels.size()));
  }
  ConfusionMatrix cm(num_classes);
  const auto n = static_cast<int>(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n || labels[i] < 0 || labels[i] >= n) {
      throw ValidationError(
          fmt::format("sample {}: prediction {} / label {} outside [0, {})", i, preds[i], labels[i], n));
    }
    ++cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]));
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ValidationError("accuracy of an empty confusion matrix is undefined");
  std::uint64_t diag = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) diag += cm.at(c, c);
  return static_cast<double>(diag) / static_cast<double>(total);
}

std::vector<ClassMetrics> per_class_prf(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out(cm.num_classes());
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const std::uint64_t tp = cm.at(c, c);
    const std::uint64_t predicted = cm.col_sum(c);  // TP + FP
    const std::uint64_t actual = cm.row_sum(c);     // TP + FN
    ClassMetrics& m = out[c];
    m.support = actual;
    m.precision_undefined = predicted == 0;
    m.recall_undefined = actual == 0;
    m.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    m.recall = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
    const double pr = m.precision + m.recall;
    m.f1_undefined = pr == 0.0;
    m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
  }
  return out;
}

MacroMetrics macro(std::span<const ClassMetrics> per_class) {
  MacroMetrics m;
  if (per_class.empty()) return m;
  for (const auto& c : per_class) {
    m.precision += c.precision;
    m.recall += c.recall;
    m.f1 += c.f1;
  }
  const auto n = static_cast<double>(per_class.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

MetricsReport make_report(const ConfusionMatrix& cm, std::vector<std::string> class_names) {
  if (class_names.size() != cm.num_classes()) {
    throw ValidationError(fmt::format("{} class names for a {}-class matrix", class_names.size(), cm.num_classes()));
  }
  MetricsReport r;
  r.class_names = std::move(class_names);
  r.matrix = cm;
  r.accuracy = accuracy(cm);
  r.per_class = per_class_prf(cm);
  r.macro = macro(r.per_class);
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string flags(const ClassMetrics& m) {
  std::string f;
  if (m.precision_undefined) f += "P";
  if (m.recall_undefined) f += "R";
  if (m.f1_undefined) f += "F";
  return f.empty() ? "-" : f;
}

std::string render_text(const MetricsReport& r) {
  std::size_t width = 5;
  for (const auto& n : r.class_names) width = std::max(width, n.size());
  std::string out = fmt::format("accuracy  {:.6f}\n", r.accuracy);
  out += fmt::format("{:<{}}  {:>9}  {:>9}  {:>9}  {:>8}  {}\n", "class", width, "precision", "recall", "f1",
                     "support", "undefined");
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    out += fmt::format("{:<{}}  {:>9.6f}  {:>9.6f}  {:>9.6f}  {:>8}  {}\n", r.class_names[c], width, m.precision,
                       m.recall, m.f1, m.support, flags(m));
  }
  out += fmt::format("{:<{}}  {:>9.6f}  {:>9.6f}  {:>9.6f}  {:>8}  -\n", "macro", width, r.macro.precision,
                     r.macro.recall, r.macro.f1, r.matrix.total());
  out += "confusion (rows=true, cols=predicted)\n";
  for (std::size_t t = 0; t < r.matrix.num_classes(); ++t) {
    out += fmt::format("{:<{}}", r.class_names[t], width);
    for (std::size_t p = 0; p < r.matrix.num_classes(); ++p) out += fmt::format("  {:>8}", r.matrix.at(t, p));
    out += "\n";
  }
  return out;
}

json to_json(const MetricsReport& r) {
  json classes = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    classes.push_back({{"name", r.class_names[c]},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"precision_undefined", m.precision_undefined},
                       {"recall_undefined", m.recall_undefined},
                       {"f1_undefined", m.f1_undefined}});
  }
  json matrix = json::array();
  for (std::size_t t = 0; t < r.matrix.num_classes(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < r.matrix.num_classes(); ++p) row.push_back(r.matrix.at(t, p));
    matrix.push_back(std::move(row));
  }
  return {{"accuracy", r.accuracy},
          {"classes", std::move(classes)},
          {"macro", {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}}},
          {"confusion", std::move(matrix)},
          {"total", r.matrix.total()}};
}

}  // namespace

std::string render_report(const MetricsReport& report, ReportFormat format) {
  if (format == ReportFormat::text) return render_text(report);
  return to_json(report).dump(2) + "\n";
}

MetricsReport parse_report(std::string_view structured) {
  json j;
  try {
    j = json::parse(structured);
    MetricsReport r;
    const auto& classes = j.at("classes");
    const auto& matrix = j.at("confusion");
    r.matrix = ConfusionMatrix(classes.size());
    for (std::size_t t = 0; t < classes.size(); ++t) {
      for (std::size_t p = 0; p < classes.size(); ++p) r.matrix.at(t, p) = matrix.at(t).at(p).get<std::uint64_t>();
    }
    for (const auto& c : classes) {
      r.class_names.push_back(c.at("name").get<std::string>());
      ClassMetrics m;
      m.precision = c.at("precision").get<double>();
      m.recall = c.at("recall").get<double>();
      m.f1 = c.at("f1").get<double>();
      m.support = c.at("support").get<std::uint64_t>();
      m.precision_undefined = c.at("precision_undefined").get<bool>();
      m.recall_undefined = c.at("recall_undefined").get<bool>();
      m.f1_undefined = c.at("f1_undefined").get<bool>();
      r.per_class.push_back(m);
    }
    r.accuracy = j.at("accuracy").get<double>();
    r.macro.precision = j.at("macro").at("precision").get<double>();
    r.macro.recall = j.at("macro").at("recall").get<double>();
    r.macro.f1 = j.at("macro").at("f1").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed metrics report: {}", e.what()));
  }
}

}  // namespace cervix
