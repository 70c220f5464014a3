#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "tpq/calibration.hpp"
#include "tpq/error.hpp"

using namespace tpq;

namespace {

Matrix column(std::vector<float> v) {
  const std::size_t n = v.size();
  return Matrix(n, 1, std::move(v));
}

Matrix random_partial(Rng& rng, std::size_t s, std::size_t e, float sd) {
  return gaussian_matrix(rng, s, e, std::vector<float>(e, sd));
}

}  // namespace

TEST_CASE("observe_sequence examples") {
  CalibrationTable t(1, 1, 0.01f);
  t.observe_sequence(0, column({-3.0f, 1.0f, 2.0f}));
  CHECK(t.min(0, 0) == -3.0f);
  CHECK(t.max(0, 0) == 2.0f);
  CHECK(t.sequences_seen() == 1);

  CalibrationTable up(1, 1, 0.01f);
  up.observe_sequence(0, column({1.0f}));
  up.observe_sequence(0, column({2.0f}));
  CHECK(up.max(0, 0) == doctest::Approx(1.01).epsilon(1e-6));

  CalibrationTable down(1, 1, 0.01f);
  down.observe_sequence(0, column({-1.0f}));
  down.observe_sequence(0, column({-3.0f}));
  CHECK(down.min(0, 0) == doctest::Approx(-1.02).epsilon(1e-6));
}

TEST_CASE("observe_sequence rejects bad input") {
  CalibrationTable t(2, 2);
  Matrix y(3, 2);
  y(1, 1) = std::nanf("");
  try {
    t.observe_sequence(0, y);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
  }
  CHECK(t.sequences_seen(0) == 0);
  CHECK_THROWS_AS(t.observe_sequence(2, Matrix(3, 2)), Error);
  CHECK_THROWS_AS(t.observe_sequence(0, Matrix(3, 3)), Error);
  CHECK_THROWS_AS(t.observe_sequence(0, Matrix(0, 2)), Error);
  CHECK_THROWS_AS(CalibrationTable(1, 1, 0.0f), Error);
  CHECK_THROWS_AS(CalibrationTable(1, 1, 1.5f), Error);
}

TEST_CASE("compute_ranges examples") {
  CHECK(symmetric_range(-2.0f, 5.0f) == 10.0f);
  CHECK(symmetric_range(0.0f, 0.0f) == 0.0f);
  CHECK(symmetric_range(-4.0f, -1.0f) == 8.0f);

  const auto t = CalibrationTable::from_state(3, 1, 0.01f, 1, {-0.5f, -1.0f, 0.0f},
                                              {0.1f, 0.3f, 1.5f});
  const RangeVector r = compute_ranges(t);
  CHECK(r.device_range(0, 0) == 1.0f);
  CHECK(r.device_range(1, 0) == 2.0f);
  CHECK(r.device_range(2, 0) == 3.0f);
  CHECK(r.aggregated[0] == 6.0f);
}

TEST_CASE("compute_ranges needs every device observed") {
  CalibrationTable t(2, 3);
  t.observe_sequence(0, Matrix(2, 3, 1.0f));
  try {
    compute_ranges(t);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
}

TEST_CASE("compute_ranges matches brute-force recomputation") {
  Rng rng(8);
  CalibrationTable t(4, 16);
  for (int s = 0; s < 5; ++s)
    for (std::size_t d = 0; d < 4; ++d) t.observe_sequence(d, random_partial(rng, 6, 16, 3.0f));
  const RangeVector r = compute_ranges(t);
  for (std::size_t j = 0; j < 16; ++j) {
    float agg = 0.0f;
    for (std::size_t d = 0; d < 4; ++d) {
      const float expect = 2.0f * std::max(-t.min(d, j), t.max(d, j));
      CHECK(r.device_range(d, j) == expect);
      CHECK(expect >= 0.0f);
      agg += expect;
    }
    CHECK(r.aggregated[j] == agg);
  }
}

TEST_CASE("EMA boundedness and ordering") {
  Rng rng(9);
  CalibrationTable t(1, 8);
  t.observe_sequence(0, random_partial(rng, 4, 8, 1.0f));
  for (int s = 0; s < 200; ++s) {
    const Matrix y = random_partial(rng, 4, 8, 1.0f + static_cast<float>(s % 7));
    std::vector<float> prev_m(t.minima().begin(), t.minima().end());
    std::vector<float> prev_M(t.maxima().begin(), t.maxima().end());
    t.observe_sequence(0, y);
    for (std::size_t j = 0; j < 8; ++j) {
      float lo = y(0, j), hi = y(0, j);
      for (std::size_t r = 0; r < 4; ++r) {
        lo = std::min(lo, y(r, j));
        hi = std::max(hi, y(r, j));
      }
      REQUIRE(t.min(0, j) >= std::min(prev_m[j], lo));
      REQUIRE(t.min(0, j) <= std::max(prev_m[j], lo));
      REQUIRE(t.max(0, j) >= std::min(prev_M[j], hi));
      REQUIRE(t.max(0, j) <= std::max(prev_M[j], hi));
      REQUIRE(t.min(0, j) <= t.max(0, j));
    }
  }
}

TEST_CASE("run_calibration examples") {
  Rng rng(10);
  const LinearLayer layer{gaussian_matrix(rng, 8, 5, std::vector<float>(5, 0.5f)), Matrix(1, 5)};
  const ShardedLayer sharded = shard_layer(layer, 2);
  const Matrix x = gaussian_matrix(rng, 6, 8, std::vector<float>(8, 1.0f));

  SUBCASE("single sequence gives raw extrema") {
    const std::vector<Matrix> seqs{x};
    const CalibrationTable t = run_calibration(sharded, seqs);
    for (std::size_t d = 0; d < 2; ++d) {
      const Matrix y = oracle::naive_matmul(
          [&] {
            Matrix block(6, 4);
            for (std::size_t r = 0; r < 6; ++r)
              for (std::size_t c = 0; c < 4; ++c) block(r, c) = x(r, d * 4 + c);
            return block;
          }(),
          sharded.shard(d).weight);
      for (std::size_t j = 0; j < 5; ++j) {
        float lo = y(0, j), hi = y(0, j);
        for (std::size_t r = 0; r < 6; ++r) {
          lo = std::min(lo, y(r, j));
          hi = std::max(hi, y(r, j));
        }
        CHECK(t.min(d, j) == lo);
        CHECK(t.max(d, j) == hi);
      }
    }
  }

  SUBCASE("identical sequences are a fixed point") {
    const std::vector<Matrix> once{x};
    const std::vector<Matrix> twice{x, x, x};
    const CalibrationTable a = run_calibration(sharded, once);
    const CalibrationTable b = run_calibration(sharded, twice);
    CHECK(std::equal(a.minima().begin(), a.minima().end(), b.minima().begin()));
    CHECK(std::equal(a.maxima().begin(), a.maxima().end(), b.maxima().begin()));
    CHECK(b.sequences_seen() == 3);
  }

  SUBCASE("same stream, same table") {
    std::vector<Matrix> seqs;
    for (int i = 0; i < 10; ++i)
      seqs.push_back(gaussian_matrix(rng, 6, 8, std::vector<float>(8, 1.0f)));
    CHECK(serialize(run_calibration(sharded, seqs)) == serialize(run_calibration(sharded, seqs)));
  }
}

TEST_CASE("run_calibration tracks the double-precision replay") {
  Rng rng(11);
  const std::size_t d = 32, e = 12, n = 4, s = 8;
  std::vector<float> wsd(e, 1.0f / std::sqrt(static_cast<float>(d)));
  const LinearLayer layer{gaussian_matrix(rng, d, e, wsd), Matrix(1, e)};
  const ShardedLayer sharded = shard_layer(layer, n);
  std::vector<Matrix> seqs;
  for (int i = 0; i < 256; ++i) seqs.push_back(gaussian_matrix(rng, s, d, std::vector<float>(d, 1.0f)));
  const CalibrationTable t = run_calibration(sharded, seqs, 0.01f);

  oracle::EmaReplay replay(n, e, 0.01);
  for (const auto& x : seqs)
    for (std::size_t i = 0; i < n; ++i) replay.observe(i, partial_forward(sharded.shard(i), x));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) {
      CHECK(std::abs(t.min(i, j) - replay.m[i * e + j]) <= 1e-5);
      CHECK(std::abs(t.max(i, j) - replay.M[i * e + j]) <= 1e-5);
    }
}

TEST_CASE("TPQT serialization") {
  Rng rng(12);
  CalibrationTable t(3, 7, 0.02f);
  for (int s = 0; s < 4; ++s)
    for (std::size_t d = 0; d < 3; ++d) t.observe_sequence(d, random_partial(rng, 5, 7, 2.0f));
  const auto bytes = serialize(t);
  CHECK(bytes.size() == 4 + 1 + 4 + 4 + 4 + 8 + 2 * 3 * 7 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TPQT");
  CHECK(bytes[4] == 1);

  const CalibrationTable back = deserialize_calibration(bytes);
  CHECK(back.devices() == 3);
  CHECK(back.features() == 7);
  CHECK(back.gamma() == 0.02f);
  CHECK(back.sequences_seen() == 4);
  CHECK(serialize(back) == bytes);

  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    const std::span<const std::uint8_t> prefix(bytes.data(), cut);
    REQUIRE_THROWS_AS(deserialize_calibration(prefix), Error);
  }
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(deserialize_calibration(extra), Error);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_calibration(magic), Error);

  const auto j = nlohmann::json::parse(to_json(t));
  CHECK(j["N"] == 3);
  CHECK(j["E"] == 7);
  CHECK(j["sequences_seen"] == 4);
  CHECK(j["m"].size() == 3);
  CHECK(j["m"][1].size() == 7);
  CHECK(j["M"][2][6].get<float>() == t.max(2, 6));
}
