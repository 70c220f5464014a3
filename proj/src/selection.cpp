#include "tpq/selection.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "json.hpp"
#include "tpq/error.hpp"

namespace tpq {

const char* to_string(SelectionStrategy s) noexcept {
  switch (s) {
    case SelectionStrategy::kNone: return "none";
    case SelectionStrategy::kTopRange: return "top_range";
    case SelectionStrategy::kRandom: return "random";
    case SelectionStrategy::kUnknown: return "unknown";
  }
  return "unknown";
}

SelectionStrategy parse_selection_strategy(const std::string& name) {
  if (name == "none") return SelectionStrategy::kNone;
  if (name == "top_range") return SelectionStrategy::kTopRange;
  if (name == "random") return SelectionStrategy::kRandom;
  if (name == "unknown") return SelectionStrategy::kUnknown;
  throw Error(ErrorCode::kInvalidArgument, "unknown selection strategy '" + name + "'");
}

void FeatureSelection::validate() const {
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= features)
      throw Error(ErrorCode::kInvalidArgument,
                  "selection: index " + std::to_string(indices[i]) + " >= E=" +
                      std::to_string(features));
    if (i > 0 && indices[i] <= indices[i - 1])
      throw Error(ErrorCode::kInvalidArgument,
                  "selection: indices must be distinct and ascending");
  }
  if ((strategy == SelectionStrategy::kNone) != indices.empty())
    throw Error(ErrorCode::kInvalidArgument,
                "selection: strategy 'none' must go with k = 0 and vice versa");
}

std::size_t default_k(std::size_t features, std::size_t denominator) {
  if (denominator == 0) throw Error(ErrorCode::kInvalidArgument, "k denominator must be > 0");
  return features / denominator;
}

FeatureSelection no_selection(std::size_t features) {
  return FeatureSelection{features, {}, SelectionStrategy::kNone, 0};
}

FeatureSelection select_top_range(std::span<const float> aggregated, std::size_t k) {
  const std::size_t e = aggregated.size();
  if (k > e)
    throw Error(ErrorCode::kInvalidArgument,
                "select: k=" + std::to_string(k) + " exceeds E=" + std::to_string(e));
  if (k == 0) return no_selection(e);
  std::vector<std::uint32_t> order(e);
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (aggregated[a] != aggregated[b]) return aggregated[a] > aggregated[b];
                      return a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return FeatureSelection{e, std::move(order), SelectionStrategy::kTopRange, 0};
}

FeatureSelection select_top_range(const RangeVector& ranges, std::size_t k) {
  return select_top_range(std::span<const float>(ranges.aggregated), k);
}

FeatureSelection select_random(std::size_t features, std::size_t k, Rng& rng) {
  if (k > features)
    throw Error(ErrorCode::kInvalidArgument,
                "select: k=" + std::to_string(k) + " exceeds E=" + std::to_string(features));
  if (k == 0) return no_selection(features);
  // Partial Fisher-Yates over the first k slots.
  std::vector<std::uint32_t> pool(features);
  std::iota(pool.begin(), pool.end(), 0u);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(features - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return FeatureSelection{features, std::move(pool), SelectionStrategy::kRandom, rng.seed()};
}

std::string to_json(const FeatureSelection& selection) {
  nlohmann::ordered_json j;
  j["E"] = selection.features;
  j["k"] = selection.k();
  j["strategy"] = to_string(selection.strategy);
  if (selection.strategy == SelectionStrategy::kRandom) j["seed"] = selection.seed;
  j["indices"] = selection.indices;
  return j.dump(2);
}

FeatureSelection selection_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FeatureSelection s;
    s.features = j.at("E").get<std::size_t>();
    s.indices = j.at("indices").get<std::vector<std::uint32_t>>();
    s.strategy = parse_selection_strategy(j.at("strategy").get<std::string>());
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("k") && j.at("k").get<std::size_t>() != s.indices.size())
      throw Error(ErrorCode::kMalformed, "selection json: k does not match indices");
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("selection json: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, e.what());
  }
}

}  // namespace tpq
