#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tpq/numeric.hpp"
#include "tpq/tp_layer.hpp"

namespace tpq {

inline constexpr float kDefaultGamma = 0.01f;

/// Per-device, per-feature EMA of column minima and maxima.
///
/// The first sequence a device observes initializes (m, M) to the raw column
/// extrema; every later sequence applies
///   m <- (1 - gamma) m + gamma min(Y[:, j])
///   M <- (1 - gamma) M + gamma max(Y[:, j])
/// The recursion runs in double; minima()/maxima() and the serialized table
/// are its 32-bit rounding. A table rebuilt with from_state() resumes from
/// the rounded values. Updates for one device must be serialized; distinct
/// devices may be updated concurrently.
class CalibrationTable {
 public:
  CalibrationTable(std::size_t devices, std::size_t features, float gamma = kDefaultGamma);

  /// Rebuilds a table from serialized state. Every device is marked as having
  /// seen `sequences_seen` sequences.
  static CalibrationTable from_state(std::size_t devices, std::size_t features,
                                     float gamma, std::uint64_t sequences_seen,
                                     std::vector<float> minima,
                                     std::vector<float> maxima);

  void observe_sequence(std::size_t device, const Matrix& y);

  std::size_t devices() const noexcept { return devices_; }
  std::size_t features() const noexcept { return features_; }
  float gamma() const noexcept { return gamma_; }
  /// Minimum over devices of the number of sequences observed.
  std::uint64_t sequences_seen() const noexcept;
  std::uint64_t sequences_seen(std::size_t device) const { return seen_.at(device); }

  float min(std::size_t device, std::size_t feature) const {
    return minima_[device * features_ + feature];
  }
  float max(std::size_t device, std::size_t feature) const {
    return maxima_[device * features_ + feature];
  }
  std::span<const float> minima() const noexcept { return minima_; }
  std::span<const float> maxima() const noexcept { return maxima_; }

 private:
  std::size_t devices_;
  std::size_t features_;
  float gamma_;
  std::vector<std::uint64_t> seen_;
  std::vector<double> acc_min_;
  std::vector<double> acc_max_;
  std::vector<float> minima_;
  std::vector<float> maxima_;
};

/// Symmetric per-device ranges R[i][j] = 2 max(-m, M) and their sum over
/// devices.
struct RangeVector {
  std::size_t devices = 0;
  std::size_t features = 0;
  std::vector<float> per_device;   // devices x features, row-major
  std::vector<float> aggregated;   // features

  float device_range(std::size_t device, std::size_t feature) const {
    return per_device[device * features + feature];
  }
};

float symmetric_range(float min, float max) noexcept;

/// Throws kDegenerate if any device has no observations.
RangeVector compute_ranges(const CalibrationTable& table);

/// Feeds every sequence, in order, through every shard's partial forward pass
/// and into observe_sequence.
CalibrationTable run_calibration(const ShardedLayer& layer,
                                 std::span<const Matrix> sequences,
                                 float gamma = kDefaultGamma);

/// "TPQT" v1 little-endian binary format.
std::vector<std::uint8_t> serialize(const CalibrationTable& table);
CalibrationTable deserialize_calibration(std::span<const std::uint8_t> bytes);
std::string to_json(const CalibrationTable& table);

}  // namespace tpq
