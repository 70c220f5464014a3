#include "tpq/tp_layer.hpp"

#include <string>

#include "tpq/error.hpp"

namespace tpq {

void LinearLayer::validate() const {
  if (weight.rows() == 0 || weight.cols() == 0)
    throw Error(ErrorCode::kShapeMismatch, "linear layer: empty weight");
  if (bias.rows() != 1 || bias.cols() != weight.cols())
    throw Error(ErrorCode::kShapeMismatch,
                "linear layer: bias must be 1x" + std::to_string(weight.cols()) + ", got " +
                    std::to_string(bias.rows()) + "x" + std::to_string(bias.cols()));
  if (!weight.all_finite() || !bias.all_finite())
    throw Error(ErrorCode::kNonFinite, "linear layer: non-finite parameters");
}

ShardedLayer::ShardedLayer(std::vector<DeviceShard> shards, Matrix bias)
    : shards_(std::move(shards)), bias_(std::move(bias)) {
  if (shards_.empty()) throw Error(ErrorCode::kInvalidArgument, "sharded layer: no shards");
  std::size_t next = 0;
  for (std::size_t i = 0; i < shards_.size(); ++i) {
    const auto& s = shards_[i];
    if (s.device_id != i || s.input_slice.begin != next ||
        s.input_slice.end < s.input_slice.begin ||
        s.weight.rows() != s.input_slice.size() || s.weight.cols() != bias_.cols())
      throw Error(ErrorCode::kShapeMismatch,
                  "sharded layer: shard " + std::to_string(i) + " is inconsistent");
    next = s.input_slice.end;
  }
  input_dim_ = next;
}

ShardedLayer shard_layer(const LinearLayer& layer, std::size_t devices) {
  layer.validate();
  const std::size_t d = layer.input_dim();
  if (devices == 0) throw Error(ErrorCode::kInvalidArgument, "shard_layer: N must be >= 1");
  if (d % devices != 0)
    throw Error(ErrorCode::kInvalidArgument,
                "shard_layer: N must divide D (D=" + std::to_string(d) +
                    ", N=" + std::to_string(devices) + ")");
  const std::size_t block = d / devices;
  const std::size_t e = layer.output_dim();
  std::vector<DeviceShard> shards;
  shards.reserve(devices);
  for (std::size_t i = 0; i < devices; ++i) {
    const auto first = layer.weight.values().begin() + static_cast<std::ptrdiff_t>(i * block * e);
    std::vector<float> rows(first, first + static_cast<std::ptrdiff_t>(block * e));
    shards.push_back({i, Matrix(block, e, std::move(rows)), {i * block, (i + 1) * block}});
  }
  return ShardedLayer(std::move(shards), layer.bias);
}

Matrix partial_forward(const DeviceShard& shard, const Matrix& x) {
  return matmul_columns(x, shard.input_slice.begin, shard.input_slice.end, shard.weight);
}

std::vector<Matrix> partial_forward_all(const ShardedLayer& layer, const Matrix& x) {
  if (x.cols() != layer.input_dim())
    throw Error(ErrorCode::kShapeMismatch,
                "partial forward: input has " + std::to_string(x.cols()) +
                    " columns, layer expects " + std::to_string(layer.input_dim()));
  std::vector<Matrix> out;
  out.reserve(layer.devices());
  for (const auto& shard : layer.shards()) out.push_back(partial_forward(shard, x));
  return out;
}

void add_bias_rows(Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols())
    throw Error(ErrorCode::kShapeMismatch, "bias does not match output width");
  const auto b = bias.row(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  }
}

Matrix reference_forward(const LinearLayer& layer, const Matrix& x) {
  Matrix y = matmul(x, layer.weight);
  add_bias_rows(y, layer.bias);
  return y;
}

}  // namespace tpq
