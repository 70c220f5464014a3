#include "tpq/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bytes.hpp"
#include "tpq/error.hpp"

namespace tpq {

namespace {

constexpr std::string_view kTableMagic = "TPQS";
constexpr std::string_view kMessageMagic = "TPQC";
constexpr std::uint8_t kVersion = 1;

void check_bit_width(int bits) {
  if (bits < kMinBitWidth || bits > kMaxBitWidth)
    throw Error(ErrorCode::kInvalidArgument,
                "bit width must lie in [2, 8], got " + std::to_string(bits));
}

// Everything in the TPQS file that precedes the checksum.
std::vector<std::uint8_t> table_prefix(std::size_t devices, std::size_t features, int bits,
                                       const FeatureSelection& selection,
                                       std::span<const float> scales) {
  detail::ByteWriter w;
  w.magic(kTableMagic);
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(devices));
  w.u32(static_cast<std::uint32_t>(features));
  w.u8(static_cast<std::uint8_t>(bits));
  w.u32(static_cast<std::uint32_t>(selection.k()));
  for (auto idx : selection.indices) w.u32(idx);
  w.f32s(scales);
  return w.take();
}

float apply_rounding_decode(int code, float scale, Rounding mode, double draw) {
  if (mode == Rounding::kDithered && scale != 0.0f)
    return static_cast<float>((code - (draw - 0.5)) * static_cast<double>(scale));
  return dequantize_value(code, scale);
}

int apply_rounding_encode(float x, float scale, int qmax, Rounding mode, double draw) {
  if (mode == Rounding::kNearest || !(scale > 0.0f) || std::isnan(x))
    return quantize_value(x, scale, qmax);
  const double limit = qmax;
  double t = static_cast<double>(x) / scale;
  if (mode == Rounding::kStochastic) {
    t = std::clamp(t, -limit, limit);
    const double lo = std::floor(t);
    const double code = lo + (draw < t - lo ? 1.0 : 0.0);
    return static_cast<int>(std::clamp(code, -limit, limit));
  }
  // Subtractive dither: the receiver removes the same offset again.
  t += draw - 0.5;
  return static_cast<int>(std::clamp(std::round(t), -limit, limit));
}

class BitPacker {
 public:
  explicit BitPacker(std::uint8_t* out) : out_(out) {}
  void put(std::uint32_t value, int bits) {
    acc_ |= std::uint64_t{value} << filled_;
    filled_ += bits;
    while (filled_ >= 8) {
      *out_++ = static_cast<std::uint8_t>(acc_);
      acc_ >>= 8;
      filled_ -= 8;
    }
  }
  void flush() {
    if (filled_ > 0) *out_++ = static_cast<std::uint8_t>(acc_);
    acc_ = 0;
    filled_ = 0;
  }

 private:
  std::uint8_t* out_;
  std::uint64_t acc_ = 0;
  int filled_ = 0;
};

class BitUnpacker {
 public:
  explicit BitUnpacker(const std::uint8_t* in) : in_(in) {}
  std::uint32_t get(int bits) {
    while (filled_ < bits) {
      acc_ |= std::uint64_t{*in_++} << filled_;
      filled_ += 8;
    }
    const auto v = static_cast<std::uint32_t>(acc_ & ((1u << bits) - 1u));
    acc_ >>= bits;
    filled_ -= bits;
    return v;
  }

 private:
  const std::uint8_t* in_;
  std::uint64_t acc_ = 0;
  int filled_ = 0;
};

void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::vector<std::uint8_t> header_bytes(const MessageHeader& h) {
  detail::ByteWriter w;
  w.magic(kMessageMagic);
  w.u8(h.version);
  w.u16(h.device_id);
  w.u32(h.rows);
  w.u32(h.features);
  w.u32(h.k);
  w.u8(h.bit_width);
  w.u64(h.table_checksum);
  return w.take();
}

MessageHeader make_header(const Matrix& y, std::size_t device, std::size_t k, int bits,
                          std::uint64_t checksum) {
  if (device > std::numeric_limits<std::uint16_t>::max() ||
      y.rows() > std::numeric_limits<std::uint32_t>::max() ||
      y.cols() > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::kInvalidArgument, "encode: shape does not fit the message header");
  MessageHeader h;
  h.device_id = static_cast<std::uint16_t>(device);
  h.rows = static_cast<std::uint32_t>(y.rows());
  h.features = static_cast<std::uint32_t>(y.cols());
  h.k = static_cast<std::uint32_t>(k);
  h.bit_width = static_cast<std::uint8_t>(bits);
  h.table_checksum = checksum;
  return h;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

CodecTable::CodecTable(std::size_t devices, std::size_t features, int bit_width,
                       std::vector<float> scales, FeatureSelection selection)
    : devices_(devices),
      features_(features),
      bit_width_(bit_width),
      scales_(std::move(scales)),
      selection_(std::move(selection)) {
  check_bit_width(bit_width);
  if (devices == 0 || features == 0)
    throw Error(ErrorCode::kInvalidArgument, "codec table: N and E must be positive");
  if (scales_.size() != devices * features)
    throw Error(ErrorCode::kShapeMismatch, "codec table: expected N x E scales");
  for (float s : scales_)
    if (!(s >= 0.0f) || !std::isfinite(s))
      throw Error(ErrorCode::kInvalidArgument, "codec table: scales must be finite and >= 0");
  if (selection_.features != features)
    throw Error(ErrorCode::kShapeMismatch, "codec table: selection E does not match");
  selection_.validate();

  quantized_.reserve(features - selection_.k());
  auto sel = selection_.indices.begin();
  for (std::uint32_t j = 0; j < features; ++j) {
    if (sel != selection_.indices.end() && *sel == j) {
      ++sel;
      continue;
    }
    quantized_.push_back(j);
  }
  checksum_ = fnv1a64(table_prefix(devices_, features_, bit_width_, selection_, scales_));
}

CodecTable build_codec_table(const RangeVector& ranges, const FeatureSelection& selection,
                             int bit_width) {
  check_bit_width(bit_width);
  if (selection.features != ranges.features)
    throw Error(ErrorCode::kShapeMismatch,
                "codec table: selection covers E=" + std::to_string(selection.features) +
                    " but ranges have E=" + std::to_string(ranges.features));
  const float qmax = static_cast<float>(qmax_for_bits(bit_width));
  std::vector<float> scales(ranges.per_device.size());
  for (std::size_t i = 0; i < scales.size(); ++i)
    scales[i] = (ranges.per_device[i] * 0.5f) / qmax;
  return CodecTable(ranges.devices, ranges.features, bit_width, std::move(scales), selection);
}

std::vector<std::uint8_t> serialize(const CodecTable& table) {
  auto bytes = table_prefix(table.devices(), table.features(), table.bit_width(),
                            table.selection(), table.scales());
  detail::ByteWriter w;
  w.u64(table.checksum());
  bytes.insert(bytes.end(), w.bytes().begin(), w.bytes().end());
  return bytes;
}

CodecTable deserialize_codec(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "codec table");
  r.expect_magic(kTableMagic);
  const auto version = r.u8("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const std::size_t n = r.u32("N");
  const std::size_t e = r.u32("E");
  const int bits = r.u8("b");
  const std::size_t k = r.u32("k");
  if (n == 0 || e == 0) r.fail("N and E must be positive");
  if (bits < kMinBitWidth || bits > kMaxBitWidth) r.fail("bit width outside [2, 8]");
  if (k > e) r.fail("k exceeds E");
  if (k > r.remaining() / 4) r.fail("truncated selection");
  FeatureSelection sel{e, {}, k == 0 ? SelectionStrategy::kNone : SelectionStrategy::kUnknown, 0};
  sel.indices.resize(k);
  for (auto& idx : sel.indices) idx = r.u32("selection index");
  auto scales = r.f32s(n * e, "scales");
  const std::uint64_t stored = r.u64("checksum");
  r.expect_end();
  try {
    CodecTable table(n, e, bits, std::move(scales), std::move(sel));
    if (table.checksum() != stored) r.fail("checksum mismatch");
    return table;
  } catch (const Error& err) {
    if (err.code() == ErrorCode::kMalformed) throw;
    throw Error(ErrorCode::kMalformed, std::string("codec table: ") + err.what());
  }
}

const char* to_string(Rounding r) noexcept {
  switch (r) {
    case Rounding::kNearest: return "nearest";
    case Rounding::kStochastic: return "stochastic";
    case Rounding::kDithered: return "dithered";
  }
  return "unknown";
}

int quantize_value(float x, float scale, int qmax) noexcept {
  if (!(scale > 0.0f) || std::isnan(x)) return 0;
  const float t = x / scale;
  if (t >= static_cast<float>(qmax)) return qmax;
  if (t <= -static_cast<float>(qmax)) return -qmax;
  return static_cast<int>(std::round(t));
}

float dequantize_value(int code, float scale) noexcept {
  return static_cast<float>(code) * scale;
}

double rounding_draw(std::uint64_t seed, std::size_t device, std::size_t row,
                     std::size_t feature) noexcept {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ device);
  h = mix64(h ^ row);
  h = mix64(h ^ feature);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

MessageHeader CompressedMessage::header() const {
  detail::ByteReader r(bytes, "malformed message");
  r.expect_magic(kMessageMagic);
  MessageHeader h;
  h.version = r.u8("version");
  if (h.version != kVersion) r.fail("unsupported version " + std::to_string(h.version));
  h.device_id = r.u16("device_id");
  h.rows = r.u32("S");
  h.features = r.u32("E");
  h.k = r.u32("k");
  h.bit_width = r.u8("bit_width");
  h.table_checksum = r.u64("table_checksum");
  if (h.k > h.features) r.fail("k exceeds E");
  const bool full = h.bit_width == kFullPrecisionBits;
  if (!full && (h.bit_width < kMinBitWidth || h.bit_width > kMaxBitWidth))
    r.fail("bit width " + std::to_string(h.bit_width) + " unsupported");
  if (full && h.k != h.features) r.fail("full-precision message must carry k = E");
  const std::size_t expected = message_size(h.rows, h.features, h.k, h.bit_width);
  if (bytes.size() != expected)
    r.fail("payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
           std::to_string(expected));
  return h;
}

std::size_t code_row_bytes(std::size_t features, std::size_t k, int bit_width) noexcept {
  return ((features - k) * static_cast<std::size_t>(bit_width) + 7) / 8;
}

std::size_t message_size(std::size_t rows, std::size_t features, std::size_t k,
                         int bit_width) noexcept {
  return kMessageHeaderBytes + rows * (2 * k + code_row_bytes(features, k, bit_width));
}

double bits_per_value(std::size_t features, std::size_t k, int bit_width) {
  if (features == 0 || k > features)
    throw Error(ErrorCode::kInvalidArgument, "bits_per_value: need 0 <= k <= E, E > 0");
  return (16.0 * static_cast<double>(k) +
          static_cast<double>(bit_width) * static_cast<double>(features - k)) /
         static_cast<double>(features);
}

CompressedMessage encode(const Matrix& y, const CodecTable& table, std::size_t device,
                         const RoundingConfig& rounding) {
  if (y.cols() != table.features())
    throw Error(ErrorCode::kShapeMismatch,
                "encode: partial has " + std::to_string(y.cols()) + " features, table has " +
                    std::to_string(table.features()));
  if (device >= table.devices())
    throw Error(ErrorCode::kInvalidArgument, "encode: device " + std::to_string(device) +
                                                 " outside table with N=" +
                                                 std::to_string(table.devices()));
  const auto& selected = table.selection().indices;
  const auto& quantized = table.quantized_features();
  const std::size_t k = selected.size();
  const int bits = table.bit_width();
  const int qmax = table.qmax();
  const std::size_t s = y.rows();
  const std::size_t row_bytes = code_row_bytes(y.cols(), k, bits);

  CompressedMessage msg;
  msg.bytes = header_bytes(make_header(y, device, k, bits, table.checksum()));
  msg.bytes.resize(message_size(s, y.cols(), k, bits), 0);

  std::uint8_t* outliers = msg.bytes.data() + kMessageHeaderBytes;
  std::uint8_t* codes = outliers + s * k * 2;
  const float* scales = table.scales().data() + device * table.features();
  for (std::size_t r = 0; r < s; ++r) {
    const auto row = y.row(r);
    for (std::size_t t = 0; t < k; ++t)
      put_u16(outliers + 2 * (r * k + t), f32_to_bf16(row[selected[t]]).bits);
    BitPacker pack(codes + r * row_bytes);
    for (std::uint32_t j : quantized) {
      const double draw = rounding.mode == Rounding::kNearest
                              ? 0.0
                              : rounding_draw(rounding.seed, device, r, j);
      const int code = apply_rounding_encode(row[j], scales[j], qmax, rounding.mode, draw);
      pack.put(static_cast<std::uint32_t>(code + qmax), bits);
    }
    pack.flush();
  }
  return msg;
}

Matrix decode(const CompressedMessage& msg, const CodecTable& table,
              const RoundingConfig& rounding) {
  const MessageHeader h = msg.header();
  if (h.bit_width == kFullPrecisionBits) {
    if (h.features != table.features())
      throw Error(ErrorCode::kMalformed, "decode: message E does not match table");
    return decode_full_precision(msg);
  }
  if (h.table_checksum != table.checksum())
    throw Error(ErrorCode::kStaleTable, "stale codec table: message was encoded against a "
                                        "different table");
  if (h.features != table.features() || h.k != table.selection().k() ||
      h.bit_width != table.bit_width() || h.device_id >= table.devices())
    throw Error(ErrorCode::kMalformed, "malformed message: header disagrees with codec table");

  const auto& selected = table.selection().indices;
  const auto& quantized = table.quantized_features();
  const std::size_t k = selected.size();
  const int bits = table.bit_width();
  const int qmax = table.qmax();
  const std::size_t s = h.rows;
  const std::size_t row_bytes = code_row_bytes(h.features, k, bits);
  const std::size_t device = h.device_id;

  Matrix out(s, h.features);
  const std::uint8_t* outliers = msg.bytes.data() + kMessageHeaderBytes;
  const std::uint8_t* codes = outliers + s * k * 2;
  const float* scales = table.scales().data() + device * table.features();
  for (std::size_t r = 0; r < s; ++r) {
    auto row = out.row(r);
    for (std::size_t t = 0; t < k; ++t)
      row[selected[t]] = bf16_to_f32(Bf16{get_u16(outliers + 2 * (r * k + t))});
    BitUnpacker unpack(codes + r * row_bytes);
    for (std::uint32_t j : quantized) {
      const auto offset = static_cast<int>(unpack.get(bits));
      if (offset > 2 * qmax)
        throw Error(ErrorCode::kMalformed, "malformed message: code offset " +
                                               std::to_string(offset) + " exceeds 2*qmax");
      const double draw = rounding.mode == Rounding::kDithered
                              ? rounding_draw(rounding.seed, device, r, j)
                              : 0.0;
      row[j] = apply_rounding_decode(offset - qmax, scales[j], rounding.mode, draw);
    }
  }
  return out;
}

CompressedMessage encode_full_precision(const Matrix& y, std::size_t device) {
  CompressedMessage msg;
  msg.bytes = header_bytes(make_header(y, device, y.cols(), kFullPrecisionBits, 0));
  msg.bytes.resize(message_size(y.rows(), y.cols(), y.cols(), kFullPrecisionBits));
  std::uint8_t* p = msg.bytes.data() + kMessageHeaderBytes;
  for (float v : y.values()) {
    put_u16(p, f32_to_bf16(v).bits);
    p += 2;
  }
  return msg;
}

Matrix decode_full_precision(const CompressedMessage& msg) {
  const MessageHeader h = msg.header();
  if (h.bit_width != kFullPrecisionBits)
    throw Error(ErrorCode::kMalformed, "malformed message: not a full-precision message");
  Matrix out(h.rows, h.features);
  const std::uint8_t* p = msg.bytes.data() + kMessageHeaderBytes;
  for (float& v : out.values()) {
    v = bf16_to_f32(Bf16{get_u16(p)});
    p += 2;
  }
  return out;
}

}  // namespace tpq
