#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tpq {

/// Dense row-major matrix of 32-bit floats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  /// Throws kShapeMismatch unless data.size() == rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Raw bfloat16 bit pattern: 1 sign, 8 exponent and 7 mantissa bits.
struct Bf16 {
  std::uint16_t bits = 0;
  friend bool operator==(Bf16, Bf16) = default;
};

/// Round-to-nearest-even narrowing. NaN becomes a quiet NaN, infinities are
/// preserved.
Bf16 f32_to_bf16(float x) noexcept;
/// Exact widening.
float bf16_to_f32(Bf16 v) noexcept;
/// f32 -> bf16 -> f32.
inline float round_to_bf16(float x) noexcept { return bf16_to_f32(f32_to_bf16(x)); }

/// Standard product. Every output element accumulates its terms in ascending
/// inner-index order in f32.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Product of the column block a[:, begin:end) with b. b.rows() must equal
/// end - begin. Accumulation order matches matmul().
Matrix matmul_columns(const Matrix& a, std::size_t begin, std::size_t end,
                      const Matrix& b);

/// xoshiro256** seeded through SplitMix64. Sub-streams are derived by
/// hashing (seed, stream id) so that every consumer gets an independent,
/// reproducible sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent generator for the given sub-stream of the same seed.
  Rng substream(std::uint64_t stream) const { return Rng(seed_, stream); }

  std::uint64_t next_u64() noexcept;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be nonzero.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; also used for counter-based hashing.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Entry (i, j) ~ Normal(0, per_col_std[j]^2), filled row-major from rng.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                       std::span<const float> per_col_std);

}  // namespace tpq
