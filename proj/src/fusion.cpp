#include "fer/fusion.hpp"

namespace fer::fusion {

dataset::ExpressionLabel fuse(dataset::ExpressionLabel y_e, bool y_h, FusionMode mode) {
  switch (mode) {
    case FusionMode::ExpressionOnly:
      return y_e;
    case FusionMode::HandOverride:
      return y_h ? dataset::ExpressionLabel::Fear : y_e;
    case FusionMode::HandOverrideExceptHappiness:
      return (y_h && y_e != dataset::ExpressionLabel::Happiness) ? dataset::ExpressionLabel::Fear
                                                                 : y_e;
  }
  return y_e;
}

std::vector<dataset::ExpressionLabel> fuse_batch(
    const std::vector<std::pair<dataset::ExpressionLabel, bool>>& pairs, FusionMode mode) {
  std::vector<dataset::ExpressionLabel> out;
  out.reserve(pairs.size());
  for (const auto& [y_e, y_h] : pairs) out.push_back(fuse(y_e, y_h, mode));
  return out;
}

const char* mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::ExpressionOnly: return "expression-only";
    case FusionMode::HandOverride: return "hand-override";
    case FusionMode::HandOverrideExceptHappiness: return "hand-override-except-happiness";
  }
  return "";
}

std::optional<FusionMode> parse_mode(std::string_view name) {
  for (FusionMode mode : kAllModes) {
    if (name == mode_name(mode)) return mode;
  }
  return std::nullopt;
}

}  // namespace fer::fusion
