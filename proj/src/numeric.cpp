#include "tpq/numeric.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "tpq/error.hpp"

namespace tpq {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw Error(ErrorCode::kShapeMismatch,
                "matrix data has " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

bool Matrix::all_finite() const noexcept {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Bf16 f32_to_bf16(float x) noexcept {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  if (std::isnan(x)) return Bf16{static_cast<std::uint16_t>((bits >> 16) | 0x0040u)};
  const std::uint32_t bias = 0x7FFFu + ((bits >> 16) & 1u);
  return Bf16{static_cast<std::uint16_t>((bits + bias) >> 16)};
}

float bf16_to_f32(Bf16 v) noexcept {
  return std::bit_cast<float>(std::uint32_t{v.bits} << 16);
}

Matrix matmul_columns(const Matrix& a, std::size_t begin, std::size_t end,
                      const Matrix& b) {
  if (begin > end || end > a.cols() || end - begin != b.rows())
    throw Error(ErrorCode::kShapeMismatch,
                "matmul: column block [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") of a " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " matrix cannot multiply " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  const std::size_t n = b.cols();
  Matrix out(a.rows(), n);
  // i-k-j loop: each out(i, j) still receives its terms in ascending k.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    float* dst = out.row(i).data();
    const float* src = a.row(i).data();
    for (std::size_t k = begin; k < end; ++k) {
      const float aik = src[k];
      const float* brow = b.row(k - begin).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::kShapeMismatch,
                "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  return matmul_columns(a, 0, a.cols(), b);
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::uint64_t sm = mix64(seed ^ mix64(stream ^ 0x5DEECE66Dull));
  for (auto& s : state_) {
    sm += 0x9E3779B97F4A7C15ull;
    s = mix64(sm);
  }
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = std::rotl(state_[3], 45);
  return result;
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) noexcept {
  // Rejection sampling on the top of the range removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                       std::span<const float> per_col_std) {
  if (per_col_std.size() != cols)
    throw Error(ErrorCode::kShapeMismatch, "gaussian_matrix: per-column std has " +
                                               std::to_string(per_col_std.size()) +
                                               " entries for " + std::to_string(cols) +
                                               " columns");
  for (float s : per_col_std)
    if (!(s >= 0.0f) || !std::isfinite(s))
      throw Error(ErrorCode::kInvalidArgument, "gaussian_matrix: std must be finite and >= 0");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double z = rng.normal();
      m(i, j) = per_col_std[j] == 0.0f ? 0.0f : static_cast<float>(per_col_std[j] * z);
    }
  return m;
}

}  // namespace tpq
