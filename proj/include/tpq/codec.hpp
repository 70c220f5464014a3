#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tpq/calibration.hpp"
#include "tpq/numeric.hpp"
#include "tpq/selection.hpp"

namespace tpq {

inline constexpr int kMinBitWidth = 2;
inline constexpr int kMaxBitWidth = 8;
/// Bit-width marker of an uncompressed (all-BF16) message.
inline constexpr int kFullPrecisionBits = 16;

constexpr int qmax_for_bits(int bits) noexcept { return (1 << (bits - 1)) - 1; }

/// Frozen quantization parameters shared by sender and receiver.
///
/// scales[i][j] = (R[i][j] / 2) / qmax. Scales of selected features are kept
/// but never used. The checksum is FNV-1a over the "TPQS" serialization of
/// everything that precedes it, so two tables with equal checksums encode
/// and decode identically.
class CodecTable {
 public:
  CodecTable(std::size_t devices, std::size_t features, int bit_width,
             std::vector<float> scales, FeatureSelection selection);

  std::size_t devices() const noexcept { return devices_; }
  std::size_t features() const noexcept { return features_; }
  int bit_width() const noexcept { return bit_width_; }
  int qmax() const noexcept { return qmax_for_bits(bit_width_); }
  float scale(std::size_t device, std::size_t feature) const {
    return scales_[device * features_ + feature];
  }
  std::span<const float> scales() const noexcept { return scales_; }
  const FeatureSelection& selection() const noexcept { return selection_; }
  /// Ascending feature indices that are quantized (complement of selection).
  const std::vector<std::uint32_t>& quantized_features() const noexcept {
    return quantized_;
  }
  std::uint64_t checksum() const noexcept { return checksum_; }

 private:
  std::size_t devices_;
  std::size_t features_;
  int bit_width_;
  std::vector<float> scales_;
  FeatureSelection selection_;
  std::vector<std::uint32_t> quantized_;
  std::uint64_t checksum_ = 0;
};

CodecTable build_codec_table(const RangeVector& ranges, const FeatureSelection& selection,
                             int bit_width);

/// "TPQS" v1 format; deserialization verifies the trailing checksum.
std::vector<std::uint8_t> serialize(const CodecTable& table);
CodecTable deserialize_codec(std::span<const std::uint8_t> bytes);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;

enum class Rounding {
  kNearest,     // round half away from zero
  kStochastic,  // unbiased: floor(t) + Bernoulli(frac(t))
  kDithered,    // subtractive dither shared by sender and receiver
};

const char* to_string(Rounding r) noexcept;

/// Per-sync rounding parameters. Both sides must agree on them; random
/// draws are a pure function of (seed, device, row, feature).
struct RoundingConfig {
  Rounding mode = Rounding::kNearest;
  std::uint64_t seed = 0;
};

/// Symmetric quantization: 0 if scale is 0 (or x is NaN), otherwise
/// clamp(round_half_away(x / scale), -qmax, qmax).
int quantize_value(float x, float scale, int qmax) noexcept;
float dequantize_value(int code, float scale) noexcept;

/// Uniform draw in [0, 1) for one (device, row, feature) coordinate.
double rounding_draw(std::uint64_t seed, std::size_t device, std::size_t row,
                     std::size_t feature) noexcept;

struct MessageHeader {
  std::uint8_t version = 1;
  std::uint16_t device_id = 0;
  std::uint32_t rows = 0;
  std::uint32_t features = 0;
  std::uint32_t k = 0;
  std::uint8_t bit_width = 0;
  std::uint64_t table_checksum = 0;
};

/// magic(4) version(1) device(2) S(4) E(4) k(4) bits(1) checksum(8)
inline constexpr std::size_t kMessageHeaderBytes = 28;

/// One device's serialized partial output.
///
/// Layout after the header: S*k BF16 outliers (row-major, selection order),
/// then S rows of offset-binary codes (code + qmax), b bits each, packed
/// LSB-first, each row padded to a whole byte.
struct CompressedMessage {
  std::vector<std::uint8_t> bytes;

  std::size_t size() const noexcept { return bytes.size(); }
  /// Parses and validates the fixed header (magic, version, length).
  MessageHeader header() const;
};

std::size_t code_row_bytes(std::size_t features, std::size_t k, int bit_width) noexcept;
/// Header plus S * (2k + ceil(b (E - k) / 8)).
std::size_t message_size(std::size_t rows, std::size_t features, std::size_t k,
                         int bit_width) noexcept;
/// (16k + b (E - k)) / E, ignoring headers and the one-time table exchange.
double bits_per_value(std::size_t features, std::size_t k, int bit_width);

CompressedMessage encode(const Matrix& y, const CodecTable& table, std::size_t device,
                         const RoundingConfig& rounding = {});
/// Decodes a message produced by encode() or encode_full_precision(). Throws
/// kStaleTable on checksum mismatch and kMalformed on any structural defect.
Matrix decode(const CompressedMessage& msg, const CodecTable& table,
              const RoundingConfig& rounding = {});

/// Uncompressed transport: every feature as BF16, bit-width field 16,
/// checksum 0.
CompressedMessage encode_full_precision(const Matrix& y, std::size_t device);
Matrix decode_full_precision(const CompressedMessage& msg);

}  // namespace tpq
