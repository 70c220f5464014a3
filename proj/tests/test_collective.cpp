#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tpq/collective.hpp"
#include "tpq/error.hpp"

using namespace tpq;

namespace {

struct Fixture {
  LinearLayer layer;
  ShardedLayer sharded;
  std::vector<Matrix> calibration;
  Matrix x;

  Fixture(std::size_t d, std::size_t e, std::size_t n, std::uint64_t seed)
      : layer(make_layer(d, e, seed)), sharded(shard_layer(layer, n)) {
    Rng rng(seed, 1);
    for (int i = 0; i < 16; ++i)
      calibration.push_back(gaussian_matrix(rng, 8, d, std::vector<float>(d, 1.0f)));
    x = gaussian_matrix(rng, 8, d, std::vector<float>(d, 1.0f));
  }

  static LinearLayer make_layer(std::size_t d, std::size_t e, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> sd(e, 1.0f / std::sqrt(static_cast<float>(d)));
    sd[1] *= 30.0f;
    return {gaussian_matrix(rng, d, e, sd), gaussian_matrix(rng, 1, e, std::vector<float>(e, 0.1f))};
  }

  RangeVector ranges() const { return compute_ranges(run_calibration(sharded, calibration)); }
};

}  // namespace

TEST_CASE("error_report examples") {
  Rng rng(1);
  const Matrix a = gaussian_matrix(rng, 10, 10, std::vector<float>(10, 1.0f));
  const ErrorStats zero = error_report(a, a);
  CHECK(zero.mse == 0.0);
  CHECK(zero.max_abs == 0.0);
  CHECK(zero.rel_frobenius == 0.0);

  Matrix b = a;
  b(3, 4) += 1.0f;
  const ErrorStats one = error_report(b, a);
  CHECK(one.mse == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(one.max_abs == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(one.per_feature_mse[4] == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(one.per_feature_mse[3] == 0.0);
  CHECK(one.sample.size() == 100);

  CHECK_THROWS_AS(error_report(Matrix(2, 3), Matrix(3, 2)), Error);
}

TEST_CASE("sync_exact examples") {
  Fixture f(16, 6, 1, 2);
  CHECK(sync_exact(f.sharded, f.x) == reference_forward(f.layer, f.x));
  const Fixture g(16, 6, 4, 3);
  const Matrix zero = sync_exact(g.sharded, Matrix(5, 16));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) CHECK(zero(r, c) == g.layer.bias(0, c));
}

TEST_CASE("full-precision sync") {
  for (std::size_t n : {1, 4}) {
    Fixture f(32, 10, n, 4);
    const RangeVector r = f.ranges();
    const CodecTable unused = build_codec_table(r, no_selection(10), 4);
    SyncConfig cfg;
    cfg.strategy = SyncStrategy::kFullPrecision;
    const SyncResult res = sync_allgather_reduce(f.sharded, f.x, unused, cfg);
    const Matrix exact = sync_exact(f.sharded, f.x);
    CHECK(error_report(res, exact).rel_frobenius <= std::ldexp(1.0, -7));
    CHECK(res.bytes_baseline_bf16 == 2 * 8 * 10 * n);
    CHECK(res.bytes_on_wire == res.bytes_baseline_bf16 + n * kMessageHeaderBytes);
    if (n == 1) {
      // One device: the only rounding is BF16 transport of the partial.
      const Matrix p = partial_forward(f.sharded.shard(0), f.x);
      for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(res.output.values()[i] == round_to_bf16(p.values()[i]) + f.layer.bias.values()[i % 10]);
    }
  }
}

TEST_CASE("selected sync error is bounded by the per-device bounds") {
  Fixture f(64, 24, 4, 5);
  const RangeVector r = f.ranges();
  const FeatureSelection sel = select_top_range(r, 2);
  const CodecTable t = build_codec_table(r, sel, 4);
  SyncConfig cfg;
  const SyncResult res = sync_allgather_reduce(f.sharded, f.x, t, cfg);
  const Matrix exact = sync_exact(f.sharded, f.x);
  const auto partials = partial_forward_all(f.sharded, f.x);
  std::vector<bool> kept(24, false);
  for (auto j : sel.indices) kept[j] = true;
  for (std::size_t s = 0; s < 8; ++s)
    for (std::size_t j = 0; j < 24; ++j) {
      double bound = 1e-4 * (1 + std::abs(exact(s, j)));
      for (std::size_t i = 0; i < 4; ++i) {
        const double y = partials[i](s, j);
        if (kept[j])
          bound += std::ldexp(std::abs(y), -8);
        else if (std::abs(y) <= 0.5 * r.device_range(i, j))
          bound += t.scale(i, j) / 2.0;
        else
          bound += std::abs(y) - 0.5 * r.device_range(i, j) + t.scale(i, j) / 2.0;
      }
      REQUIRE(std::abs(res.output(s, j) - exact(s, j)) <= bound);
    }
}

TEST_CASE("reduction order invariance") {
  Fixture f(64, 16, 8, 6);
  const RangeVector r = f.ranges();
  const CodecTable t = build_codec_table(r, select_top_range(r, 1), 4);
  SyncConfig cfg;
  const SyncResult base = sync_allgather_reduce(f.sharded, f.x, t, cfg);
  std::vector<std::size_t> order(8);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(i + 1)]);
    cfg.reduce_order = order;
    const SyncResult res = sync_allgather_reduce(f.sharded, f.x, t, cfg);
    CHECK(error_report(res.output, base.output).rel_frobenius <= 1e-4);
    CHECK(res.bytes_on_wire == base.bytes_on_wire);
  }
  cfg.reduce_order = {0, 1, 2};
  CHECK_THROWS_AS(sync_allgather_reduce(f.sharded, f.x, t, cfg), Error);
  cfg.reduce_order = {0, 1, 2, 3, 4, 5, 6, 6};
  CHECK_THROWS_AS(sync_allgather_reduce(f.sharded, f.x, t, cfg), Error);
}

TEST_CASE("bytes on wire equal serialized lengths") {
  Fixture f(32, 20, 4, 8);
  const RangeVector r = f.ranges();
  for (auto strategy : {SyncStrategy::kPureLowBit, SyncStrategy::kSelectedBf16,
                        SyncStrategy::kRandomBf16, SyncStrategy::kFullPrecision}) {
    Rng rng(1);
    const FeatureSelection sel = strategy == SyncStrategy::kPureLowBit ? no_selection(20)
                                 : strategy == SyncStrategy::kRandomBf16 ? select_random(20, 3, rng)
                                                                         : select_top_range(r, 3);
    const CodecTable t = build_codec_table(r, sel, 3);
    SyncConfig cfg;
    cfg.strategy = strategy;
    cfg.bit_width = 3;
    const SyncResult res = sync_allgather_reduce(f.sharded, f.x, t, cfg);
    std::size_t total = 0;
    for (const auto& m : res.messages) total += m.size();
    CHECK(res.bytes_on_wire == total);
    CHECK(res.messages.size() == 4);
    const auto partials = partial_forward_all(f.sharded, f.x);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto again = strategy == SyncStrategy::kFullPrecision
                             ? encode_full_precision(partials[i], i)
                             : encode(partials[i], t, i);
      CHECK(again.bytes == res.messages[i].bytes);
    }
  }
}

TEST_CASE("pure low-bit wire size at large E") {
  const std::size_t e = 4608;
  RangeVector r{2, e, std::vector<float>(2 * e, 4.0f), std::vector<float>(e, 8.0f)};
  const FeatureSelection sel = select_top_range(r, default_k(e));
  const CodecTable t = build_codec_table(r, sel, 4);
  const std::vector<Matrix> partials(2, Matrix(1, e));
  SyncConfig cfg;
  const SyncResult res = sync_partials(partials, Matrix(1, e), &t, cfg);
  CHECK(res.bytes_on_wire == 2 * (kMessageHeaderBytes + 2412));
  CHECK(res.bytes_baseline_bf16 == 2 * 2 * e);

  const CodecTable pure = build_codec_table(r, no_selection(e), 4);
  cfg.strategy = SyncStrategy::kPureLowBit;
  CHECK(sync_partials(partials, Matrix(1, e), &pure, cfg).bytes_on_wire ==
        2 * (kMessageHeaderBytes + e / 2));
}

TEST_CASE("tables must match the strategy") {
  Fixture f(16, 8, 2, 9);
  const RangeVector r = f.ranges();
  const CodecTable sel4 = build_codec_table(r, select_top_range(r, 2), 4);
  const CodecTable pure4 = build_codec_table(r, no_selection(8), 4);
  SyncConfig cfg;
  cfg.bit_width = 5;
  CHECK_THROWS_AS(check_table_for_strategy(sel4, cfg), Error);
  cfg.bit_width = 4;
  cfg.strategy = SyncStrategy::kPureLowBit;
  CHECK_THROWS_AS(check_table_for_strategy(sel4, cfg), Error);
  CHECK_NOTHROW(check_table_for_strategy(pure4, cfg));
  // floor(E/64) can be 0, so an empty selection still serves SelectedBf16.
  cfg.strategy = SyncStrategy::kSelectedBf16;
  CHECK_NOTHROW(check_table_for_strategy(pure4, cfg));
  Rng rng(1);
  const CodecTable random4 = build_codec_table(r, select_random(8, 2, rng), 4);
  CHECK_THROWS_AS(check_table_for_strategy(random4, cfg), Error);
  cfg.strategy = SyncStrategy::kRandomBf16;
  CHECK_THROWS_AS(check_table_for_strategy(sel4, cfg), Error);
  const auto partials = partial_forward_all(f.sharded, f.x);
  CHECK_THROWS_AS(sync_partials(partials, f.layer.bias, nullptr, cfg), Error);
}

TEST_CASE("bf16 reduction stays close to f32 reduction") {
  Fixture f(64, 16, 8, 10);
  const RangeVector r = f.ranges();
  const CodecTable t = build_codec_table(r, select_top_range(r, 1), 8);
  SyncConfig cfg;
  cfg.bit_width = 8;
  const SyncResult a = sync_allgather_reduce(f.sharded, f.x, t, cfg);
  cfg.reduction = ReductionPrecision::kBf16;
  const SyncResult b = sync_allgather_reduce(f.sharded, f.x, t, cfg);
  CHECK(a.bytes_on_wire == b.bytes_on_wire);
  CHECK(error_report(b.output, a.output).rel_frobenius < 0.02);
}

TEST_CASE("strategy names") {
  CHECK(parse_sync_strategy("selected") == SyncStrategy::kSelectedBf16);
  CHECK(parse_sync_strategy("pure") == SyncStrategy::kPureLowBit);
  CHECK(parse_sync_strategy("random") == SyncStrategy::kRandomBf16);
  CHECK(parse_sync_strategy("full") == SyncStrategy::kFullPrecision);
  CHECK(std::string(to_string(SyncStrategy::kSelectedBf16)) == "selected");
  CHECK_THROWS_AS(parse_sync_strategy("int4"), Error);
}
