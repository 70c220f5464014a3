#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpq/calibration.hpp"
#include "tpq/codec.hpp"
#include "tpq/collective.hpp"
#include "tpq/numeric.hpp"
#include "tpq/tp_layer.hpp"

namespace tpq {

/// Synthetic pre-sync layer with planted outlier output features.
///
/// W[d][e] ~ N(0, 1/D), and the weight columns listed in outlier_indices are
/// multiplied by outlier_multiplier. Inputs are N(0, base_std^2), so output
/// feature e has standard deviation base_std, or base_std * multiplier for
/// planted outliers.
struct SyntheticSpec {
  std::size_t input_dim = 512;
  std::size_t output_dim = 512;
  std::size_t seq_len = 128;
  std::size_t devices = 8;
  std::size_t num_calibration = 256;
  std::size_t num_evaluation = 64;
  float base_std = 1.0f;
  std::vector<std::uint32_t> outlier_indices;
  float outlier_multiplier = 50.0f;
  std::uint64_t weight_seed = 1;
  std::uint64_t data_seed = 2;

  /// D = E = 512, S = 128, N = 8, 256 + 64 sequences, 8 outliers at 50x.
  static SyntheticSpec default_spec();
  /// D = E = 128, S = 16, N = 4, 32 + 8 sequences, 2 outliers.
  static SyntheticSpec small_spec();
  void validate() const;
};

/// Outlier positions drawn uniformly (sorted) from the given seed.
std::vector<std::uint32_t> planted_outliers(std::size_t features, std::size_t count,
                                            std::uint64_t seed);

struct Dataset {
  LinearLayer layer;
  std::size_t seq_len = 0;
  std::size_t devices = 8;
  std::vector<Matrix> calibration;
  std::vector<Matrix> evaluation;
  std::optional<SyntheticSpec> origin;  // set when synthetic
};

Dataset generate_synthetic(const SyntheticSpec& spec);

/// "TPQA" v1 activation dump: magic, version, rows u32, cols u32, f32 LE data.
std::vector<std::uint8_t> serialize_dump(const Matrix& m);
Matrix deserialize_dump(std::span<const std::uint8_t> bytes);

/// Dataset directory: manifest.json, weight.tpqa, bias.tpqa, calibration.tpqa
/// and evaluation.tpqa. Sequences are stacked row-wise, seq_len rows each.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

/// How many features to keep at BF16.
struct KPolicy {
  std::size_t denominator = 64;
  std::optional<std::size_t> explicit_k;
  std::size_t resolve(std::size_t features) const;
};

struct SweepConfig {
  std::vector<SyncStrategy> strategies{SyncStrategy::kPureLowBit, SyncStrategy::kRandomBf16,
                                       SyncStrategy::kSelectedBf16};
  std::vector<int> bit_widths{2, 3, 4, 5, 6, 7, 8};
  KPolicy k_policy;
  std::uint64_t random_seed = 0;
  ReductionPrecision reduction = ReductionPrecision::kF32;
};

struct SweepRow {
  SyncStrategy strategy = SyncStrategy::kFullPrecision;
  int bit_width = 0;
  std::size_t k = 0;
  double bits_per_value = 0.0;
  double mse = 0.0;
  double max_abs_err = 0.0;
  double rel_frobenius = 0.0;
  std::size_t bytes_on_wire = 0;
};

/// Aggregated error of one strategy over an evaluation stream.
struct StreamScore {
  double mse = 0.0;
  double max_abs_err = 0.0;
  double rel_frobenius = 0.0;
  std::size_t bytes_on_wire = 0;
  std::size_t bytes_baseline_bf16 = 0;
  std::size_t values = 0;
};

/// Scores one configuration against the exact sync over every sequence.
StreamScore score_stream(const ShardedLayer& layer, std::span<const Matrix> sequences,
                         const CodecTable* table, const SyncConfig& cfg);

/// One row per (strategy, bit width). kFullPrecision yields a single row
/// with bit width 16 regardless of bit_widths.
std::vector<SweepRow> run_sweep(const LinearLayer& layer, const CalibrationTable& calibration,
                                std::span<const Matrix> sequences, const SweepConfig& cfg);

std::string sweep_csv(std::span<const SweepRow> rows);

struct RangeProfileRow {
  std::size_t rank = 0;  // 1-based
  std::size_t feature = 0;
  double value = 0.0;
};

/// Aggregated ranges sorted descending (ties by index), optionally divided
/// by the maximum. Throws kDegenerate when every range is zero.
std::vector<RangeProfileRow> range_profile(const RangeVector& ranges, bool normalize = true);
std::string range_profile_csv(std::span<const RangeProfileRow> rows);
/// Per-rank mean of several layers' normalized sorted curves.
std::vector<double> mean_range_profile(std::span<const RangeVector> layers);

/// Shortest round-trip decimal form; used for every CSV number.
std::string format_number(double v);

}  // namespace tpq
