#include "fer/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fer/rng.hpp"

namespace fer::dataset {

namespace {

constexpr const char* kExpressionNames[kExpressionClasses] = {
    "anger", "disgust", "fear", "happiness", "sadness", "surprise"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

const char* expression_name(ExpressionLabel label) { return kExpressionNames[static_cast<int>(label)]; }

std::optional<ExpressionLabel> parse_expression(std::string_view token) {
  const std::string t = lower(token);
  for (int i = 0; i < kExpressionClasses; ++i) {
    if (t == kExpressionNames[i]) return static_cast<ExpressionLabel>(i);
  }
  return std::nullopt;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    if (!saw_header) {
      if (line != "path,expression,hand") {
        throw std::runtime_error("manifest line 1: expected header `path,expression,hand`");
      }
      saw_header = true;
      continue;
    }
    if (line == "path,expression,hand") {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": duplicate header");
    }

    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": expected 3 columns, got " +
                               std::to_string(fields.size()));
    }
    if (fields[0].empty()) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": empty path");
    }
    const auto expr = parse_expression(fields[1]);
    if (!expr) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": unknown expression `" +
                               fields[1] + "`");
    }
    HandFlag hand;
    if (fields[2] == "0") {
      hand = HandFlag::Absent;
    } else if (fields[2] == "1") {
      hand = HandFlag::Present;
    } else if (fields[2] == "?") {
      hand = HandFlag::Unlabeled;
    } else {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": hand flag must be 0, 1 or ?");
    }
    entries.push_back({fields[0], *expr, hand});
  }
  if (!saw_header) throw std::runtime_error("manifest is empty: missing header");
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_manifest(buf.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string write_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out = "path,expression,hand\n";
  for (const auto& e : entries) {
    out += e.path;
    out += ',';
    out += expression_name(e.expression);
    out += ',';
    switch (e.hand) {
      case HandFlag::Absent: out += '0'; break;
      case HandFlag::Present: out += '1'; break;
      case HandFlag::Unlabeled: out += '?'; break;
    }
    out += '\n';
  }
  return out;
}

ClassCounts class_counts(const std::vector<ManifestEntry>& entries) {
  ClassCounts counts;
  for (const auto& e : entries) ++counts.counts[static_cast<int>(e.expression)];
  return counts;
}

std::array<double, kExpressionClasses> sampling_weights(const ClassCounts& counts) {
  const double total = static_cast<double>(counts.total());
  if (total <= 0) throw std::runtime_error("sampling_weights: all class counts are zero");
  std::array<double, kExpressionClasses> weights{};
  for (int c = 0; c < kExpressionClasses; ++c) {
    weights[c] = counts.counts[c] > 0 ? total / (kExpressionClasses * static_cast<double>(counts.counts[c]))
                                      : 0.0;
  }
  return weights;
}

std::vector<std::size_t> weighted_sample_indices(const std::vector<double>& entry_weights,
                                                 std::uint64_t seed, std::size_t n) {
  std::vector<double> cumulative(entry_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < entry_weights.size(); ++i) {
    total += entry_weights[i];
    cumulative[i] = total;
  }
  if (total <= 0.0) throw std::runtime_error("weighted_sample: no entry has positive weight");

  Rng rng(seed);
  std::vector<std::size_t> indices;
  indices.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    indices.push_back(it == cumulative.end() ? cumulative.size() - 1
                                             : static_cast<std::size_t>(it - cumulative.begin()));
  }
  return indices;
}

std::vector<std::size_t> weighted_sample(const std::vector<ManifestEntry>& entries,
                                         const std::array<double, kExpressionClasses>& weights,
                                         std::uint64_t seed, std::size_t n) {
  std::vector<double> entry_weights(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entry_weights[i] = weights[static_cast<int>(entries[i].expression)];
  }
  return weighted_sample_indices(entry_weights, seed, n);
}

Split split(const std::vector<ManifestEntry>& entries, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::runtime_error("split: val_fraction must be in (0, 1)");
  }
  std::array<std::vector<std::size_t>, kExpressionClasses> by_class;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    by_class[static_cast<int>(entries[i].expression)].push_back(i);
  }

  std::vector<bool> in_val(entries.size(), false);
  for (int c = 0; c < kExpressionClasses; ++c) {
    auto& indices = by_class[c];
    if (indices.empty()) continue;
    // Round half-up, but never move an entire class out of train.
    std::size_t take = static_cast<std::size_t>(
        std::floor(static_cast<double>(indices.size()) * val_fraction + 0.5));
    if (take >= indices.size()) take = indices.size() - 1;
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(indices);
    for (std::size_t i = 0; i < take; ++i) in_val[indices[i]] = true;
  }

  Split out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    (in_val[i] ? out.val : out.train).push_back(entries[i]);
  }
  return out;
}

}  // namespace fer::dataset
