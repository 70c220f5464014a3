#include "tpq/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "json.hpp"

#include "bytes.hpp"
#include "tpq/error.hpp"

namespace tpq {

namespace {

constexpr std::string_view kMagic = "TPQT";
constexpr std::uint8_t kVersion = 1;

void check_gamma(float gamma) {
  if (!(gamma > 0.0f && gamma <= 1.0f))
    throw Error(ErrorCode::kInvalidArgument,
                "calibration: gamma must lie in (0, 1], got " + std::to_string(gamma));
}

}  // namespace

CalibrationTable::CalibrationTable(std::size_t devices, std::size_t features, float gamma)
    : devices_(devices),
      features_(features),
      gamma_(gamma),
      seen_(devices, 0),
      acc_min_(devices * features, 0.0),
      acc_max_(devices * features, 0.0),
      minima_(devices * features, 0.0f),
      maxima_(devices * features, 0.0f) {
  if (devices == 0 || features == 0)
    throw Error(ErrorCode::kInvalidArgument, "calibration: N and E must be positive");
  check_gamma(gamma);
}

CalibrationTable CalibrationTable::from_state(std::size_t devices, std::size_t features,
                                              float gamma, std::uint64_t sequences_seen,
                                              std::vector<float> minima,
                                              std::vector<float> maxima) {
  CalibrationTable t(devices, features, gamma);
  if (minima.size() != devices * features || maxima.size() != devices * features)
    throw Error(ErrorCode::kShapeMismatch, "calibration: state size does not match N x E");
  for (std::size_t i = 0; i < minima.size(); ++i) {
    if (!std::isfinite(minima[i]) || !std::isfinite(maxima[i]))
      throw Error(ErrorCode::kNonFinite, "calibration: non-finite state entry");
    if (sequences_seen > 0 && minima[i] > maxima[i])
      throw Error(ErrorCode::kMalformed, "calibration: min exceeds max at entry " +
                                             std::to_string(i));
  }
  std::fill(t.seen_.begin(), t.seen_.end(), sequences_seen);
  t.acc_min_.assign(minima.begin(), minima.end());
  t.acc_max_.assign(maxima.begin(), maxima.end());
  t.minima_ = std::move(minima);
  t.maxima_ = std::move(maxima);
  return t;
}

std::uint64_t CalibrationTable::sequences_seen() const noexcept {
  return *std::min_element(seen_.begin(), seen_.end());
}

void CalibrationTable::observe_sequence(std::size_t device, const Matrix& y) {
  if (device >= devices_)
    throw Error(ErrorCode::kInvalidArgument, "calibration: device " + std::to_string(device) +
                                                 " out of range");
  if (y.cols() != features_ || y.rows() == 0)
    throw Error(ErrorCode::kShapeMismatch,
                "calibration: sequence is " + std::to_string(y.rows()) + "x" +
                    std::to_string(y.cols()) + ", expected Sx" + std::to_string(features_) +
                    " with S >= 1");

  std::vector<float> col_min(y.row(0).begin(), y.row(0).end());
  std::vector<float> col_max = col_min;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const auto row = y.row(r);
    for (std::size_t j = 0; j < features_; ++j) {
      const float v = row[j];
      if (!std::isfinite(v))
        throw Error(ErrorCode::kNonFinite,
                    "calibration: non-finite activation at row " + std::to_string(r) +
                        ", feature " + std::to_string(j) + " on device " +
                        std::to_string(device));
      col_min[j] = std::min(col_min[j], v);
      col_max[j] = std::max(col_max[j], v);
    }
  }

  const std::size_t base = device * features_;
  const double g = gamma_;
  for (std::size_t j = 0; j < features_; ++j) {
    double& m = acc_min_[base + j];
    double& mx = acc_max_[base + j];
    if (seen_[device] == 0) {
      m = col_min[j];
      mx = col_max[j];
    } else {
      m += g * (col_min[j] - m);
      mx += g * (col_max[j] - mx);
    }
    minima_[base + j] = static_cast<float>(m);
    maxima_[base + j] = static_cast<float>(mx);
  }
  ++seen_[device];
}

float symmetric_range(float min, float max) noexcept { return 2.0f * std::max(-min, max); }

RangeVector compute_ranges(const CalibrationTable& table) {
  for (std::size_t i = 0; i < table.devices(); ++i)
    if (table.sequences_seen(i) == 0)
      throw Error(ErrorCode::kDegenerate,
                  "degenerate calibration: device " + std::to_string(i) + " has no observations");
  RangeVector out;
  out.devices = table.devices();
  out.features = table.features();
  out.per_device.resize(out.devices * out.features);
  out.aggregated.assign(out.features, 0.0f);
  for (std::size_t i = 0; i < out.devices; ++i)
    for (std::size_t j = 0; j < out.features; ++j) {
      const float r = symmetric_range(table.min(i, j), table.max(i, j));
      out.per_device[i * out.features + j] = r;
      out.aggregated[j] += r;
    }
  return out;
}

CalibrationTable run_calibration(const ShardedLayer& layer, std::span<const Matrix> sequences,
                                 float gamma) {
  if (sequences.empty())
    throw Error(ErrorCode::kInvalidArgument, "calibration: empty sequence stream");
  CalibrationTable table(layer.devices(), layer.output_dim(), gamma);
  for (const Matrix& x : sequences) {
    if (x.cols() != layer.input_dim())
      throw Error(ErrorCode::kShapeMismatch,
                  "calibration: sequence has " + std::to_string(x.cols()) +
                      " columns, layer expects " + std::to_string(layer.input_dim()));
    for (const auto& shard : layer.shards())
      table.observe_sequence(shard.device_id, partial_forward(shard, x));
  }
  return table;
}

std::vector<std::uint8_t> serialize(const CalibrationTable& table) {
  detail::ByteWriter w;
  w.magic(kMagic);
  w.u8(kVersion);
  w.u32(static_cast<std::uint32_t>(table.devices()));
  w.u32(static_cast<std::uint32_t>(table.features()));
  w.f32(table.gamma());
  w.u64(table.sequences_seen());
  w.f32s(table.minima());
  w.f32s(table.maxima());
  return w.take();
}

CalibrationTable deserialize_calibration(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "calibration table");
  r.expect_magic(kMagic);
  const auto version = r.u8("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  const std::size_t n = r.u32("N");
  const std::size_t e = r.u32("E");
  const float gamma = r.f32("gamma");
  const std::uint64_t seen = r.u64("sequences_seen");
  if (n == 0 || e == 0) r.fail("N and E must be positive");
  if (!(gamma > 0.0f && gamma <= 1.0f)) r.fail("gamma outside (0, 1]");
  auto minima = r.f32s(n * e, "m");
  auto maxima = r.f32s(n * e, "M");
  r.expect_end();
  return CalibrationTable::from_state(n, e, gamma, seen, std::move(minima), std::move(maxima));
}

std::string to_json(const CalibrationTable& table) {
  nlohmann::ordered_json j;
  j["format"] = "TPQT";
  j["version"] = kVersion;
  j["N"] = table.devices();
  j["E"] = table.features();
  j["gamma"] = table.gamma();
  j["sequences_seen"] = table.sequences_seen();
  auto rows = [&](std::span<const float> flat) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < table.devices(); ++i)
      out.push_back(std::vector<float>(flat.begin() + i * table.features(),
                                       flat.begin() + (i + 1) * table.features()));
    return out;
  };
  j["m"] = rows(table.minima());
  j["M"] = rows(table.maxima());
  return j.dump(2);
}

}  // namespace tpq
