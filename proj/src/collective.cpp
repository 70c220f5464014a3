#include "tpq/collective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tpq/error.hpp"

namespace tpq {

const char* to_string(SyncStrategy s) noexcept {
  switch (s) {
    case SyncStrategy::kFullPrecision: return "full";
    case SyncStrategy::kPureLowBit: return "pure";
    case SyncStrategy::kRandomBf16: return "random";
    case SyncStrategy::kSelectedBf16: return "selected";
  }
  return "unknown";
}

SyncStrategy parse_sync_strategy(const std::string& name) {
  if (name == "full") return SyncStrategy::kFullPrecision;
  if (name == "pure") return SyncStrategy::kPureLowBit;
  if (name == "random") return SyncStrategy::kRandomBf16;
  if (name == "selected") return SyncStrategy::kSelectedBf16;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown strategy '" + name + "' (expected full, pure, random or selected)");
}

void check_table_for_strategy(const CodecTable& table, const SyncConfig& cfg) {
  if (cfg.strategy == SyncStrategy::kFullPrecision) return;
  if (table.bit_width() != cfg.bit_width)
    throw Error(ErrorCode::kInvalidArgument,
                "codec table has bit width " + std::to_string(table.bit_width()) +
                    ", sync config asks for " + std::to_string(cfg.bit_width));
  const auto s = table.selection().strategy;
  bool ok = true;
  switch (cfg.strategy) {
    case SyncStrategy::kPureLowBit:
      ok = table.selection().k() == 0;
      break;
    case SyncStrategy::kRandomBf16:
      ok = s == SelectionStrategy::kRandom || s == SelectionStrategy::kUnknown ||
           s == SelectionStrategy::kNone;
      break;
    case SyncStrategy::kSelectedBf16:
      ok = s == SelectionStrategy::kTopRange || s == SelectionStrategy::kUnknown ||
           s == SelectionStrategy::kNone;
      break;
    case SyncStrategy::kFullPrecision:
      break;
  }
  if (!ok)
    throw Error(ErrorCode::kInvalidArgument,
                std::string("codec table selection '") + to_string(s) +
                    "' cannot serve strategy '" + to_string(cfg.strategy) + "'");
}

namespace {

std::vector<std::size_t> resolve_order(const std::vector<std::size_t>& requested,
                                       std::size_t devices) {
  std::vector<std::size_t> order(devices);
  std::iota(order.begin(), order.end(), 0);
  if (requested.empty()) return order;
  std::vector<std::size_t> sorted = requested;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != order)
    throw Error(ErrorCode::kInvalidArgument, "reduce order must be a permutation of 0..N-1");
  return requested;
}

}  // namespace

SyncResult sync_partials(std::span<const Matrix> partials, const Matrix& bias,
                         const CodecTable* table, const SyncConfig& cfg) {
  if (partials.empty()) throw Error(ErrorCode::kInvalidArgument, "sync: no partial outputs");
  const std::size_t n = partials.size();
  const std::size_t s = partials[0].rows();
  const std::size_t e = partials[0].cols();
  for (const auto& p : partials)
    if (p.rows() != s || p.cols() != e)
      throw Error(ErrorCode::kShapeMismatch, "sync: partial outputs differ in shape");
  const bool full = cfg.strategy == SyncStrategy::kFullPrecision;
  if (!full) {
    if (table == nullptr)
      throw Error(ErrorCode::kInvalidArgument, "sync: strategy needs a codec table");
    check_table_for_strategy(*table, cfg);
    if (table->devices() != n || table->features() != e)
      throw Error(ErrorCode::kShapeMismatch,
                  "sync: codec table is for N=" + std::to_string(table->devices()) + ", E=" +
                      std::to_string(table->features()) + " but partials are N=" +
                      std::to_string(n) + ", E=" + std::to_string(e));
  }

  SyncResult result;
  result.messages.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    result.messages.push_back(full ? encode_full_precision(partials[i], i)
                                   : encode(partials[i], *table, i, cfg.rounding));
  for (const auto& m : result.messages) result.bytes_on_wire += m.size();
  result.bytes_baseline_bf16 = 2 * s * e * n;

  // Gather point: every device now holds all N messages. One logical reducer
  // sums them in a fixed order.
  Matrix acc(s, e);
  bool first = true;
  for (std::size_t i : resolve_order(cfg.reduce_order, n)) {
    const Matrix part = full ? decode_full_precision(result.messages[i])
                             : decode(result.messages[i], *table, cfg.rounding);
    auto dst = acc.values();
    const auto src = part.values();
    if (cfg.reduction == ReductionPrecision::kBf16) {
      for (std::size_t t = 0; t < dst.size(); ++t)
        dst[t] = first ? round_to_bf16(src[t]) : round_to_bf16(dst[t] + round_to_bf16(src[t]));
    } else {
      for (std::size_t t = 0; t < dst.size(); ++t) dst[t] += src[t];
    }
    first = false;
  }
  add_bias_rows(acc, bias);
  result.output = std::move(acc);
  return result;
}

SyncResult sync_allgather_reduce(const ShardedLayer& layer, const Matrix& x,
                                 const CodecTable& table, const SyncConfig& cfg) {
  const auto partials = partial_forward_all(layer, x);
  return sync_partials(partials, layer.bias(), &table, cfg);
}

Matrix sum_partials(std::span<const Matrix> partials, const Matrix& bias) {
  if (partials.empty()) throw Error(ErrorCode::kInvalidArgument, "sync: no partial outputs");
  Matrix acc(partials[0].rows(), partials[0].cols());
  for (const auto& p : partials) {
    if (p.rows() != acc.rows() || p.cols() != acc.cols())
      throw Error(ErrorCode::kShapeMismatch, "sync: partial outputs differ in shape");
    auto dst = acc.values();
    const auto src = p.values();
    for (std::size_t t = 0; t < dst.size(); ++t) dst[t] += src[t];
  }
  add_bias_rows(acc, bias);
  return acc;
}

Matrix sync_exact(const ShardedLayer& layer, const Matrix& x) {
  const auto partials = partial_forward_all(layer, x);
  return sum_partials(partials, layer.bias());
}

ErrorStats error_report(const Matrix& approx, const Matrix& exact) {
  if (approx.rows() != exact.rows() || approx.cols() != exact.cols())
    throw Error(ErrorCode::kShapeMismatch, "error report: shapes differ");
  ErrorStats st;
  const std::size_t e = exact.cols();
  st.per_feature_mse.assign(e, 0.0);
  st.per_feature_max_abs.assign(e, 0.0);
  st.sample.resize(exact.size());
  double sq = 0.0;
  double ref = 0.0;
  for (std::size_t r = 0; r < exact.rows(); ++r)
    for (std::size_t j = 0; j < e; ++j) {
      const double want = exact(r, j);
      const double err = static_cast<double>(approx(r, j)) - want;
      st.sample[r * e + j] = static_cast<float>(err);
      sq += err * err;
      ref += want * want;
      st.per_feature_mse[j] += err * err;
      st.per_feature_max_abs[j] = std::max(st.per_feature_max_abs[j], std::abs(err));
      st.max_abs = std::max(st.max_abs, std::abs(err));
    }
  if (exact.size() > 0) st.mse = sq / static_cast<double>(exact.size());
  if (exact.rows() > 0)
    for (auto& v : st.per_feature_mse) v /= static_cast<double>(exact.rows());
  if (ref > 0.0)
    st.rel_frobenius = std::sqrt(sq / ref);
  else
    st.rel_frobenius = sq > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return st;
}

ErrorStats error_report(const SyncResult& result, const Matrix& exact) {
  return error_report(result.output, exact);
}

}  // namespace tpq
