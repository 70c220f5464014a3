#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tpq/codec.hpp"
#include "tpq/numeric.hpp"
#include "tpq/tp_layer.hpp"

namespace tpq {

enum class SyncStrategy {
  kFullPrecision,  // BF16 transport, 16 bits per value
  kPureLowBit,     // every feature quantized
  kRandomBf16,     // k uniformly chosen features at BF16
  kSelectedBf16,   // top-k aggregated-range features at BF16
};

const char* to_string(SyncStrategy s) noexcept;
SyncStrategy parse_sync_strategy(const std::string& name);

enum class ReductionPrecision {
  kF32,   // decoded partials summed in f32
  kBf16,  // each decoded partial and every running sum rounded to BF16
};

struct SyncConfig {
  SyncStrategy strategy = SyncStrategy::kSelectedBf16;
  int bit_width = 4;
  ReductionPrecision reduction = ReductionPrecision::kF32;
  RoundingConfig rounding;
  /// Order in which gathered messages are summed; empty means 0..N-1.
  std::vector<std::size_t> reduce_order;
};

struct SyncResult {
  Matrix output;
  std::size_t bytes_on_wire = 0;
  std::size_t bytes_baseline_bf16 = 0;
  std::vector<CompressedMessage> messages;
};

/// Throws kInvalidArgument when the table cannot serve the strategy
/// (bit width differs, PureLowBit with a nonempty selection, ...).
void check_table_for_strategy(const CodecTable& table, const SyncConfig& cfg);

/// AllGather of compressed partial outputs, then local decode-and-reduce
/// plus the bias. `table` is ignored for kFullPrecision.
SyncResult sync_allgather_reduce(const ShardedLayer& layer, const Matrix& x,
                                 const CodecTable& table, const SyncConfig& cfg);

/// Same as sync_allgather_reduce() for precomputed partial outputs.
SyncResult sync_partials(std::span<const Matrix> partials, const Matrix& bias,
                         const CodecTable* table, const SyncConfig& cfg);

/// Uncompressed f32 sum of partials plus bias.
Matrix sync_exact(const ShardedLayer& layer, const Matrix& x);
Matrix sum_partials(std::span<const Matrix> partials, const Matrix& bias);

struct ErrorStats {
  double mse = 0.0;
  double max_abs = 0.0;
  double rel_frobenius = 0.0;
  std::vector<double> per_feature_mse;
  std::vector<double> per_feature_max_abs;
  /// Raw errors (approx - exact), row-major.
  std::vector<float> sample;
};

ErrorStats error_report(const Matrix& approx, const Matrix& exact);
ErrorStats error_report(const SyncResult& result, const Matrix& exact);

}  // namespace tpq
