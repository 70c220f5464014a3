#pragma once

// Test-only reference implementations. None of these share code paths with
// the library; they are deliberately slow and literal.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "tpq/numeric.hpp"

namespace tpq::oracle {

// Nearest bf16 by comparing the two bracketing candidates in double
// precision; ties pick the even mantissa.
inline std::uint16_t bf16_nearest(float x) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint16_t lo = static_cast<std::uint16_t>(bits >> 16);
  const std::uint16_t hi = static_cast<std::uint16_t>(lo + 1);
  const double vx = x;
  const double vlo = std::bit_cast<float>(std::uint32_t{lo} << 16);
  const double vhi_raw = std::bit_cast<float>(std::uint32_t{hi} << 16);
  // Stepping past the largest finite magnitude lands on infinity; compare
  // against the would-be next value 2^128 instead.
  const double vhi = std::isinf(vhi_raw) ? std::copysign(std::ldexp(1.0, 128), vx) : vhi_raw;
  const double dlo = std::abs(vx - vlo);
  const double dhi = std::abs(vhi - vx);
  if (dlo < dhi) return lo;
  if (dhi < dlo) return hi;
  return (lo & 1u) == 0 ? lo : hi;
}

// Textbook i-j-k product with k ascending.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

// Sort every (value, index) pair descending by value, ascending by index,
// keep the first k, return them ascending.
inline std::vector<std::uint32_t> brute_top_k(const std::vector<float>& values, std::size_t k) {
  std::vector<std::pair<float, std::uint32_t>> pairs;
  for (std::uint32_t j = 0; j < values.size(); ++j) pairs.push_back({values[j], j});
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(pairs[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

// Replays the EMA min/max recursion in double precision from the partial
// outputs of each sequence (one matrix per device per sequence).
struct EmaReplay {
  std::size_t devices, features;
  double gamma;
  std::vector<double> m, M;
  std::vector<bool> started;

  EmaReplay(std::size_t n, std::size_t e, double g)
      : devices(n), features(e), gamma(g), m(n * e), M(n * e), started(n, false) {}

  void observe(std::size_t device, const Matrix& y) {
    for (std::size_t j = 0; j < features; ++j) {
      double lo = y(0, j), hi = y(0, j);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        lo = std::min<double>(lo, y(r, j));
        hi = std::max<double>(hi, y(r, j));
      }
      double& mm = m[device * features + j];
      double& MM = M[device * features + j];
      if (!started[device]) {
        mm = lo;
        MM = hi;
      } else {
        mm = (1.0 - gamma) * mm + gamma * lo;
        MM = (1.0 - gamma) * MM + gamma * hi;
      }
    }
    started[device] = true;
  }
};

// Sample moments of a float sample.
struct Moments {
  double mean = 0, variance = 0, excess_kurtosis = 0;
};

inline Moments moments(const std::vector<double>& xs) {
  Moments out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  double m2 = 0, m4 = 0;
  for (double x : xs) {
    const double d = x - out.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m4 /= n;
  out.variance = m2;
  out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return out;
}

}  // namespace tpq::oracle
