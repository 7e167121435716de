#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fer::dataset {

// The six basic expressions. Integer codes are stable across checkpoints.
enum class ExpressionLabel : int {
  Anger = 0,
  Disgust = 1,
  Fear = 2,
  Happiness = 3,
  Sadness = 4,
  Surprise = 5,
};

inline constexpr int kExpressionClasses = 6;

const char* expression_name(ExpressionLabel label);
std::optional<ExpressionLabel> parse_expression(std::string_view token);  // case-insensitive

enum class HandFlag : int { Absent = 0, Present = 1, Unlabeled = 2 };

// One labeled sample. `hand` may be Unlabeled only for expression-only
// training.
struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  ExpressionLabel expression = ExpressionLabel::Anger;
  HandFlag hand = HandFlag::Unlabeled;

  bool operator==(const ManifestEntry&) const = default;
};

struct ClassCounts {
  std::array<std::int64_t, kExpressionClasses> counts{};

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

// Parses manifest CSV with header `path,expression,hand`; hand is 0, 1 or `?`.
// Accepts LF or CRLF line endings; blank lines are skipped. Throws
// std::runtime_error naming the line on unknown expression tokens, wrong
// column counts, or a duplicated header.
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::vector<ManifestEntry> load_manifest(const std::string& path);
std::string write_manifest(const std::vector<ManifestEntry>& entries);

ClassCounts class_counts(const std::vector<ManifestEntry>& entries);

// Inverse-frequency weights w[c] = N / (6 * counts[c]), 0 for empty classes.
// Throws when every class is empty.
std::array<double, kExpressionClasses> sampling_weights(const ClassCounts& counts);

// Draws n indices i.i.d. with replacement, P(i) proportional to
// weights[expression(i)]. Deterministic given the seed. Throws when no entry
// has positive weight.
std::vector<std::size_t> weighted_sample(const std::vector<ManifestEntry>& entries,
                                         const std::array<double, kExpressionClasses>& weights,
                                         std::uint64_t seed, std::size_t n);

// Per-entry-weight form used by the hand task, where draws are balanced over
// the binary hand label rather than the expression label.
std::vector<std::size_t> weighted_sample_indices(const std::vector<double>& entry_weights,
                                                 std::uint64_t seed, std::size_t n);

struct Split {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
};

// Stratified split: each class contributes round-half-up(count * fraction)
// validation samples, except that a class is never emptied out of train.
// Disjoint, exhaustive, deterministic given the seed.
Split split(const std::vector<ManifestEntry>& entries, double val_fraction, std::uint64_t seed);

}  // namespace fer::dataset
