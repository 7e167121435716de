#include "fer/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace fer::eval {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto c : cells) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths, int k) {
  if (preds.size() != truths.size()) {
    throw std::runtime_error("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                             std::to_string(truths.size()) + " truths");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= k || truths[i] < 0 || truths[i] >= k) {
      throw std::runtime_error("confusion: label out of range at sample " + std::to_string(i));
    }
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

double per_class_f1(const ConfusionMatrix& cm, int c) {
  std::int64_t tp = cm.at(c, c), fp = 0, fn = 0;
  for (int i = 0; i < cm.k; ++i) {
    if (i == c) continue;
    fp += cm.at(i, c);
    fn += cm.at(c, i);
  }
  const std::int64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Report macro_f1(const ConfusionMatrix& cm) {
  F1Report report;
  report.per_class.resize(cm.k);
  report.support.resize(cm.k);
  double sum = 0.0;
  for (int c = 0; c < cm.k; ++c) {
    report.per_class[c] = per_class_f1(cm, c);
    sum += report.per_class[c];
    std::int64_t support = 0;
    for (int p = 0; p < cm.k; ++p) support += cm.at(c, p);
    report.support[c] = support;
  }
  report.macro = sum / cm.k;
  return report;
}

std::vector<AblationRow> ablation_report(const std::vector<dataset::ManifestEntry>& entries,
                                         const ExpressionPredictor& expression_model,
                                         const HandPredictor& hand_model,
                                         const std::vector<fusion::FusionMode>& modes) {
  const bool needs_hand = std::any_of(modes.begin(), modes.end(), [](fusion::FusionMode m) {
    return m != fusion::FusionMode::ExpressionOnly;
  });
  if (needs_hand && !hand_model) {
    throw std::runtime_error("ablation_report: a hand-using mode was requested without a hand model");
  }

  // Inference once; fusion varies per mode.
  std::vector<dataset::ExpressionLabel> expr_preds;
  std::vector<bool> hand_preds;
  std::vector<int> truths;
  expr_preds.reserve(entries.size());
  truths.reserve(entries.size());
  for (const auto& e : entries) {
    expr_preds.push_back(expression_model(e));
    truths.push_back(static_cast<int>(e.expression));
  }
  if (needs_hand) {
    hand_preds.reserve(entries.size());
    for (const auto& e : entries) hand_preds.push_back(hand_model(e));
  }

  std::vector<AblationRow> rows;
  rows.reserve(modes.size());
  for (fusion::FusionMode mode : modes) {
    std::vector<int> fused(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const bool y_h = needs_hand ? static_cast<bool>(hand_preds[i]) : false;
      fused[i] = static_cast<int>(fusion::fuse(expr_preds[i], y_h, mode));
    }
    rows.push_back({mode, macro_f1(confusion(fused, truths, dataset::kExpressionClasses))});
  }
  return rows;
}

std::string report_csv(const std::vector<AblationRow>& rows) {
  std::string out = "mode,macro_f1";
  for (int c = 0; c < dataset::kExpressionClasses; ++c) {
    out += ",f1_";
    out += dataset::expression_name(static_cast<dataset::ExpressionLabel>(c));
  }
  for (int c = 0; c < dataset::kExpressionClasses; ++c) {
    out += ",support_";
    out += dataset::expression_name(static_cast<dataset::ExpressionLabel>(c));
  }
  out += '\n';
  char buf[32];
  for (const auto& row : rows) {
    out += fusion::mode_name(row.mode);
    std::snprintf(buf, sizeof buf, ",%.6f", row.report.macro);
    out += buf;
    for (double f1 : row.report.per_class) {
      std::snprintf(buf, sizeof buf, ",%.6f", f1);
      out += buf;
    }
    for (std::int64_t s : row.report.support) {
      std::snprintf(buf, sizeof buf, ",%lld", static_cast<long long>(s));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string report_table(const std::vector<AblationRow>& rows) {
  char buf[64];
  std::string out = "mode                            macro_f1";
  for (int c = 0; c < dataset::kExpressionClasses; ++c) {
    std::snprintf(buf, sizeof buf, " %9.9s", dataset::expression_name(static_cast<dataset::ExpressionLabel>(c)));
    out += buf;
  }
  out += '\n';
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%-31s %8.4f", fusion::mode_name(row.mode), row.report.macro);
    out += buf;
    for (double f1 : row.report.per_class) {
      std::snprintf(buf, sizeof buf, " %9.4f", f1);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace fer::eval
