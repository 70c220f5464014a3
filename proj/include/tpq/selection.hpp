#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tpq/calibration.hpp"
#include "tpq/numeric.hpp"

namespace tpq {

enum class SelectionStrategy {
  kNone,
  kTopRange,
  kRandom,
  // Selection recovered from a codec table file, which records only indices.
  kUnknown,
};

const char* to_string(SelectionStrategy s) noexcept;
SelectionStrategy parse_selection_strategy(const std::string& name);

/// Static set of features sent at BF16. Indices are distinct, sorted
/// ascending and below `features`.
struct FeatureSelection {
  std::size_t features = 0;
  std::vector<std::uint32_t> indices;
  SelectionStrategy strategy = SelectionStrategy::kNone;
  std::uint64_t seed = 0;  // meaningful for kRandom only

  std::size_t k() const noexcept { return indices.size(); }
  /// Throws kInvalidArgument if the invariants above do not hold.
  void validate() const;
  friend bool operator==(const FeatureSelection&, const FeatureSelection&) = default;
};

/// floor(E / denominator); the default denominator of 64 keeps Int4 traffic
/// below 4.2 bits per value.
std::size_t default_k(std::size_t features, std::size_t denominator = 64);

FeatureSelection no_selection(std::size_t features);

/// The k features with the largest aggregated range; ties go to the lower
/// index.
FeatureSelection select_top_range(std::span<const float> aggregated, std::size_t k);
FeatureSelection select_top_range(const RangeVector& ranges, std::size_t k);

/// Uniform sample of k features without replacement.
FeatureSelection select_random(std::size_t features, std::size_t k, Rng& rng);

std::string to_json(const FeatureSelection& selection);
FeatureSelection selection_from_json(const std::string& text);

}  // namespace tpq
