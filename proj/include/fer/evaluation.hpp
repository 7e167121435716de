#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fer/dataset.hpp"
#include "fer/fusion.hpp"

namespace fer::eval {

// k x k counts, cells[truth][prediction].
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::int64_t> cells;

  explicit ConfusionMatrix(int classes = 0)
      : k(classes), cells(static_cast<std::size_t>(classes) * classes, 0) {}

  std::int64_t at(int truth, int pred) const { return cells[static_cast<std::size_t>(truth) * k + pred]; }
  std::int64_t& at(int truth, int pred) { return cells[static_cast<std::size_t>(truth) * k + pred]; }
  std::int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths, int k);

// F1 = 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double per_class_f1(const ConfusionMatrix& cm, int c);

struct F1Report {
  std::vector<double> per_class;
  double macro = 0.0;
  std::vector<std::int64_t> support;  // truth counts per class
};

// Unweighted mean of per-class F1 over all k classes, zero-support classes
// included.
F1Report macro_f1(const ConfusionMatrix& cm);

using ExpressionPredictor = std::function<dataset::ExpressionLabel(const dataset::ManifestEntry&)>;
using HandPredictor = std::function<bool(const dataset::ManifestEntry&)>;

struct AblationRow {
  fusion::FusionMode mode;
  F1Report report;
};

// Runs expression (and, when needed, hand) inference exactly once per entry,
// then varies only the fusion rule per requested mode. Throws when a
// hand-using mode is requested without a hand model.
std::vector<AblationRow> ablation_report(const std::vector<dataset::ManifestEntry>& entries,
                                         const ExpressionPredictor& expression_model,
                                         const HandPredictor& hand_model,
                                         const std::vector<fusion::FusionMode>& modes);

// CSV: mode,macro_f1,f1_<class>...,support_<class>...  F1 values use six
// decimals.
std::string report_csv(const std::vector<AblationRow>& rows);

// Human-readable table for standard output.
std::string report_table(const std::vector<AblationRow>& rows);

}  // namespace fer::eval
