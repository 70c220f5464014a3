#pragma once

#include <cstddef>
#include <vector>

#include "tpq/numeric.hpp"

namespace tpq {

/// Single-device linear layer y = xW + b with W of shape D x E and b of 1 x E.
struct LinearLayer {
  Matrix weight;
  Matrix bias;

  std::size_t input_dim() const noexcept { return weight.rows(); }
  std::size_t output_dim() const noexcept { return weight.cols(); }

  /// Throws kShapeMismatch / kNonFinite on inconsistent or non-finite data.
  void validate() const;
};

/// Half-open interval [begin, end).
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(ColumnRange, ColumnRange) = default;
};

struct DeviceShard {
  std::size_t device_id = 0;
  Matrix weight;             // (D / N) x E row block of W
  ColumnRange input_slice;   // columns of the full input consumed here
};

/// Layer split into N contiguous row blocks. The bias is not owned by any
/// device: it is added once, after the reduction.
class ShardedLayer {
 public:
  ShardedLayer(std::vector<DeviceShard> shards, Matrix bias);

  std::size_t devices() const noexcept { return shards_.size(); }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return bias_.cols(); }
  const std::vector<DeviceShard>& shards() const noexcept { return shards_; }
  const DeviceShard& shard(std::size_t i) const { return shards_.at(i); }
  const Matrix& bias() const noexcept { return bias_; }

 private:
  std::vector<DeviceShard> shards_;
  Matrix bias_;
  std::size_t input_dim_ = 0;
};

/// Shard i holds rows [i*D/N, (i+1)*D/N). N must divide D.
ShardedLayer shard_layer(const LinearLayer& layer, std::size_t devices);

/// X[:, slice] * W_i, without bias.
Matrix partial_forward(const DeviceShard& shard, const Matrix& x);

/// All partial outputs, in device order.
std::vector<Matrix> partial_forward_all(const ShardedLayer& layer, const Matrix& x);

/// Single-device ground truth xW + b.
Matrix reference_forward(const LinearLayer& layer, const Matrix& x);

/// Adds the 1 x E bias row to every row of m.
void add_bias_rows(Matrix& m, const Matrix& bias);

}  // namespace tpq
