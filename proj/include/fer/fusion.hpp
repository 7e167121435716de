#pragma once

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "fer/dataset.hpp"

namespace fer::fusion {

// The three decision policies of the ablation: pass the expression label
// through, override with Fear whenever a hand is present, or override except
// when the expression prediction is Happiness (post-pruning).
enum class FusionMode {
  ExpressionOnly,
  HandOverride,
  HandOverrideExceptHappiness,
};

inline constexpr FusionMode kAllModes[] = {
    FusionMode::ExpressionOnly,
    FusionMode::HandOverride,
    FusionMode::HandOverrideExceptHappiness,
};

dataset::ExpressionLabel fuse(dataset::ExpressionLabel y_e, bool y_h, FusionMode mode);

std::vector<dataset::ExpressionLabel> fuse_batch(
    const std::vector<std::pair<dataset::ExpressionLabel, bool>>& pairs, FusionMode mode);

// CLI-facing names: expression-only, hand-override,
// hand-override-except-happiness.
const char* mode_name(FusionMode mode);
std::optional<FusionMode> parse_mode(std::string_view name);

}  // namespace fer::fusion
