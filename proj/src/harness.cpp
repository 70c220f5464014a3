#include "tpq/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <string>

#include "bytes.hpp"
#include "json.hpp"
#include "tpq/error.hpp"
#include "tpq/selection.hpp"

namespace tpq {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kDumpMagic = "TPQA";
constexpr std::uint8_t kDumpVersion = 1;
constexpr std::uint64_t kEvaluationStreamBase = 1ull << 32;

std::vector<Matrix> split_rows(const Matrix& stacked, std::size_t seq_len, const char* what) {
  if (seq_len == 0 || stacked.rows() % seq_len != 0)
    throw Error(ErrorCode::kMalformed, std::string("dataset: ") + what + " has " +
                                           std::to_string(stacked.rows()) +
                                           " rows, not a multiple of seq_len " +
                                           std::to_string(seq_len));
  std::vector<Matrix> out;
  const std::size_t block = seq_len * stacked.cols();
  for (std::size_t r = 0; r < stacked.rows(); r += seq_len) {
    const auto first = stacked.values().begin() + static_cast<std::ptrdiff_t>(r * stacked.cols());
    out.emplace_back(seq_len, stacked.cols(),
                     std::vector<float>(first, first + static_cast<std::ptrdiff_t>(block)));
  }
  return out;
}

Matrix stack_rows(const std::vector<Matrix>& seqs, std::size_t cols) {
  std::vector<float> data;
  std::size_t rows = 0;
  for (const auto& m : seqs) {
    data.insert(data.end(), m.values().begin(), m.values().end());
    rows += m.rows();
  }
  return Matrix(rows, cols, std::move(data));
}

nlohmann::ordered_json spec_json(const SyntheticSpec& s) {
  nlohmann::ordered_json j;
  j["input_dim"] = s.input_dim;
  j["output_dim"] = s.output_dim;
  j["seq_len"] = s.seq_len;
  j["devices"] = s.devices;
  j["num_calibration"] = s.num_calibration;
  j["num_evaluation"] = s.num_evaluation;
  j["base_std"] = s.base_std;
  j["outlier_indices"] = s.outlier_indices;
  j["outlier_multiplier"] = s.outlier_multiplier;
  j["weight_seed"] = s.weight_seed;
  j["data_seed"] = s.data_seed;
  return j;
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.seq_len = j.at("seq_len").get<std::size_t>();
  s.devices = j.at("devices").get<std::size_t>();
  s.num_calibration = j.at("num_calibration").get<std::size_t>();
  s.num_evaluation = j.at("num_evaluation").get<std::size_t>();
  s.base_std = j.at("base_std").get<float>();
  s.outlier_indices = j.at("outlier_indices").get<std::vector<std::uint32_t>>();
  s.outlier_multiplier = j.at("outlier_multiplier").get<float>();
  s.weight_seed = j.at("weight_seed").get<std::uint64_t>();
  s.data_seed = j.at("data_seed").get<std::uint64_t>();
  return s;
}

struct Accumulator {
  double sq = 0.0;
  double ref = 0.0;
  double max_abs = 0.0;
  std::size_t bytes = 0;
  std::size_t baseline = 0;
  std::size_t values = 0;

  void add(const Matrix& approx, const Matrix& exact, const SyncResult& r) {
    const auto a = approx.values();
    const auto x = exact.values();
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double err = static_cast<double>(a[t]) - static_cast<double>(x[t]);
      sq += err * err;
      ref += static_cast<double>(x[t]) * x[t];
      max_abs = std::max(max_abs, std::abs(err));
    }
    values += x.size();
    bytes += r.bytes_on_wire;
    baseline += r.bytes_baseline_bf16;
  }

  StreamScore score() const {
    StreamScore s;
    s.mse = values ? sq / static_cast<double>(values) : 0.0;
    s.max_abs_err = max_abs;
    s.rel_frobenius = ref > 0.0 ? std::sqrt(sq / ref) : 0.0;
    s.bytes_on_wire = bytes;
    s.bytes_baseline_bf16 = baseline;
    s.values = values;
    return s;
  }
};

}  // namespace

SyntheticSpec SyntheticSpec::default_spec() {
  SyntheticSpec s;
  s.outlier_indices = planted_outliers(s.output_dim, 8, s.weight_seed);
  return s;
}

SyntheticSpec SyntheticSpec::small_spec() {
  SyntheticSpec s;
  s.input_dim = 128;
  s.output_dim = 128;
  s.seq_len = 16;
  s.devices = 4;
  s.num_calibration = 32;
  s.num_evaluation = 8;
  s.outlier_indices = planted_outliers(s.output_dim, 2, s.weight_seed);
  return s;
}

void SyntheticSpec::validate() const {
  auto bad = [](const std::string& why) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic spec: " + why);
  };
  if (input_dim == 0 || output_dim == 0 || seq_len == 0 || devices == 0)
    bad("D, E, S and N must be positive");
  if (input_dim % devices != 0) bad("N must divide D");
  if (num_calibration == 0) bad("need at least one calibration sequence");
  if (!(base_std >= 0.0f) || !std::isfinite(base_std)) bad("base_std must be finite and >= 0");
  if (!(outlier_multiplier >= 1.0f) || !std::isfinite(outlier_multiplier))
    bad("outlier_multiplier must be finite and >= 1");
  std::set<std::uint32_t> seen;
  for (auto idx : outlier_indices) {
    if (idx >= output_dim) bad("outlier index " + std::to_string(idx) + " >= E");
    if (!seen.insert(idx).second) bad("duplicate outlier index " + std::to_string(idx));
  }
}

std::vector<std::uint32_t> planted_outliers(std::size_t features, std::size_t count,
                                            std::uint64_t seed) {
  Rng rng(seed, 0x6F75746C69657273ull);  // "outliers"
  return select_random(features, count, rng).indices;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const float w_std = 1.0f / std::sqrt(static_cast<float>(spec.input_dim));
  std::vector<float> col_std(spec.output_dim, w_std);
  for (auto idx : spec.outlier_indices) col_std[idx] = w_std * spec.outlier_multiplier;

  Dataset data;
  Rng weight_rng(spec.weight_seed, 1);
  data.layer.weight = gaussian_matrix(weight_rng, spec.input_dim, spec.output_dim, col_std);
  Rng bias_rng(spec.weight_seed, 2);
  const std::vector<float> bias_std(spec.output_dim, 0.1f * spec.base_std);
  data.layer.bias = gaussian_matrix(bias_rng, 1, spec.output_dim, bias_std);
  data.seq_len = spec.seq_len;
  data.devices = spec.devices;

  const std::vector<float> x_std(spec.input_dim, spec.base_std);
  for (std::size_t c = 0; c < spec.num_calibration; ++c) {
    Rng rng(spec.data_seed, c);
    data.calibration.push_back(gaussian_matrix(rng, spec.seq_len, spec.input_dim, x_std));
  }
  for (std::size_t v = 0; v < spec.num_evaluation; ++v) {
    Rng rng(spec.data_seed, kEvaluationStreamBase + v);
    data.evaluation.push_back(gaussian_matrix(rng, spec.seq_len, spec.input_dim, x_std));
  }
  data.origin = spec;
  return data;
}

std::vector<std::uint8_t> serialize_dump(const Matrix& m) {
  detail::ByteWriter w;
  w.magic(kDumpMagic);
  w.u8(kDumpVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.bytes().reserve(13 + 4 * m.size());
  w.f32s(m.values());
  return w.take();
}

Matrix deserialize_dump(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "activation dump");
  r.expect_magic(kDumpMagic);
  const auto version = r.u8("version");
  if (version != kDumpVersion) r.fail("unsupported version " + std::to_string(version));
  const std::size_t rows = r.u32("rows");
  const std::size_t cols = r.u32("cols");
  if (r.remaining() != 4 * rows * cols)
    r.fail("data is " + std::to_string(r.remaining()) + " bytes, header implies " +
           std::to_string(4 * rows * cols));
  return Matrix(rows, cols, r.f32s(rows * cols, "data"));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "failed reading '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot rename onto '" + path.string() + "': " + ec.message());
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_dataset(const Dataset& data, const fs::path& dir) {
  data.layer.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create '" + dir.string() + "': " + ec.message());

  nlohmann::ordered_json j;
  j["format"] = "tpq-dataset";
  j["version"] = 1;
  j["input_dim"] = data.layer.input_dim();
  j["output_dim"] = data.layer.output_dim();
  j["seq_len"] = data.seq_len;
  j["devices"] = data.devices;
  j["num_calibration"] = data.calibration.size();
  j["num_evaluation"] = data.evaluation.size();
  if (data.origin) j["synthetic"] = spec_json(*data.origin);
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  write_file_atomic(dir / "weight.tpqa", serialize_dump(data.layer.weight));
  write_file_atomic(dir / "bias.tpqa", serialize_dump(data.layer.bias));
  write_file_atomic(dir / "calibration.tpqa",
                    serialize_dump(stack_rows(data.calibration, data.layer.input_dim())));
  write_file_atomic(dir / "evaluation.tpqa",
                    serialize_dump(stack_rows(data.evaluation, data.layer.input_dim())));
}

Dataset load_dataset(const fs::path& dir) {
  const auto manifest_bytes = read_file(dir / "manifest.json");
  Dataset data;
  std::size_t d = 0, e = 0, n_cal = 0, n_eval = 0;
  try {
    const auto j = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    if (j.at("format").get<std::string>() != "tpq-dataset")
      throw Error(ErrorCode::kMalformed, "dataset manifest: field 'format' is not tpq-dataset");
    d = j.at("input_dim").get<std::size_t>();
    e = j.at("output_dim").get<std::size_t>();
    data.seq_len = j.at("seq_len").get<std::size_t>();
    data.devices = j.at("devices").get<std::size_t>();
    n_cal = j.at("num_calibration").get<std::size_t>();
    n_eval = j.at("num_evaluation").get<std::size_t>();
    if (j.contains("synthetic")) data.origin = spec_from_json(j.at("synthetic"));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kMalformed, std::string("dataset manifest: ") + ex.what());
  }
  data.layer.weight = deserialize_dump(read_file(dir / "weight.tpqa"));
  data.layer.bias = deserialize_dump(read_file(dir / "bias.tpqa"));
  if (data.layer.weight.rows() != d || data.layer.weight.cols() != e)
    throw Error(ErrorCode::kMalformed, "dataset: weight.tpqa shape disagrees with manifest");
  data.layer.validate();
  const Matrix cal = deserialize_dump(read_file(dir / "calibration.tpqa"));
  const Matrix ev = deserialize_dump(read_file(dir / "evaluation.tpqa"));
  if (cal.cols() != d || ev.cols() != d)
    throw Error(ErrorCode::kMalformed, "dataset: activation dumps must have D columns");
  data.calibration = split_rows(cal, data.seq_len, "calibration.tpqa");
  data.evaluation = split_rows(ev, data.seq_len, "evaluation.tpqa");
  if (data.calibration.size() != n_cal || data.evaluation.size() != n_eval)
    throw Error(ErrorCode::kMalformed, "dataset: sequence counts disagree with manifest");
  return data;
}

std::size_t KPolicy::resolve(std::size_t features) const {
  if (explicit_k) {
    if (*explicit_k > features)
      throw Error(ErrorCode::kInvalidArgument, "k=" + std::to_string(*explicit_k) +
                                                   " exceeds E=" + std::to_string(features));
    return *explicit_k;
  }
  return default_k(features, denominator);
}

StreamScore score_stream(const ShardedLayer& layer, std::span<const Matrix> sequences,
                         const CodecTable* table, const SyncConfig& cfg) {
  Accumulator acc;
  for (const Matrix& x : sequences) {
    const auto partials = partial_forward_all(layer, x);
    const Matrix exact = sum_partials(partials, layer.bias());
    const SyncResult r = sync_partials(partials, layer.bias(), table, cfg);
    acc.add(r.output, exact, r);
  }
  return acc.score();
}

std::vector<SweepRow> run_sweep(const LinearLayer& layer, const CalibrationTable& calibration,
                                std::span<const Matrix> sequences, const SweepConfig& cfg) {
  const ShardedLayer sharded = shard_layer(layer, calibration.devices());
  if (calibration.features() != layer.output_dim())
    throw Error(ErrorCode::kShapeMismatch, "sweep: calibration E does not match the layer");
  const RangeVector ranges = compute_ranges(calibration);
  const std::size_t e = layer.output_dim();
  const std::size_t k = cfg.k_policy.resolve(e);

  struct Combo {
    SweepRow row;
    const CodecTable* table = nullptr;
    SyncConfig sync;
    Accumulator acc;
  };
  std::vector<Combo> combos;
  std::vector<CodecTable> tables;
  tables.reserve(cfg.strategies.size() * cfg.bit_widths.size());
  for (SyncStrategy strategy : cfg.strategies) {
    if (strategy == SyncStrategy::kFullPrecision) {
      Combo c;
      c.row = {strategy, kFullPrecisionBits, e, 16.0};
      c.sync.strategy = strategy;
      c.sync.reduction = cfg.reduction;
      combos.push_back(std::move(c));
      continue;
    }
    FeatureSelection sel = no_selection(e);
    if (strategy == SyncStrategy::kSelectedBf16) {
      sel = select_top_range(ranges, k);
    } else if (strategy == SyncStrategy::kRandomBf16) {
      Rng rng(cfg.random_seed);
      sel = select_random(e, k, rng);
    }
    for (int bits : cfg.bit_widths) {
      Combo c;
      c.table = &tables.emplace_back(build_codec_table(ranges, sel, bits));
      c.row = {strategy, bits, sel.k(), bits_per_value(e, sel.k(), bits)};
      c.sync.strategy = strategy;
      c.sync.bit_width = bits;
      c.sync.reduction = cfg.reduction;
      combos.push_back(std::move(c));
    }
  }

  for (const Matrix& x : sequences) {
    const auto partials = partial_forward_all(sharded, x);
    const Matrix exact = sum_partials(partials, sharded.bias());
    for (auto& c : combos) {
      const SyncResult r =
          sync_partials(partials, sharded.bias(), c.table, c.sync);
      c.acc.add(r.output, exact, r);
    }
  }

  std::vector<SweepRow> rows;
  for (auto& c : combos) {
    const StreamScore s = c.acc.score();
    c.row.mse = s.mse;
    c.row.max_abs_err = s.max_abs_err;
    c.row.rel_frobenius = s.rel_frobenius;
    c.row.bytes_on_wire = s.bytes_on_wire;
    rows.push_back(c.row);
  }
  return rows;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "strategy,bit_width,k,bits_per_value,mse,max_abs_err,rel_frobenius,bytes_on_wire\n";
  for (const auto& r : rows) {
    out += to_string(r.strategy);
    out += ',' + std::to_string(r.bit_width) + ',' + std::to_string(r.k) + ',' +
           format_number(r.bits_per_value) + ',' + format_number(r.mse) + ',' +
           format_number(r.max_abs_err) + ',' + format_number(r.rel_frobenius) + ',' +
           std::to_string(r.bytes_on_wire) + '\n';
  }
  return out;
}

std::vector<RangeProfileRow> range_profile(const RangeVector& ranges, bool normalize) {
  const auto& agg = ranges.aggregated;
  if (agg.empty()) throw Error(ErrorCode::kDegenerate, "degenerate calibration: no features");
  const float top = *std::max_element(agg.begin(), agg.end());
  if (!(top > 0.0f))
    throw Error(ErrorCode::kDegenerate, "degenerate calibration: all aggregated ranges are zero");
  std::vector<std::size_t> order(agg.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return agg[a] > agg[b]; });
  std::vector<RangeProfileRow> rows;
  rows.reserve(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const double v = agg[order[r]];
    rows.push_back({r + 1, order[r], normalize ? v / top : v});
  }
  return rows;
}

std::string range_profile_csv(std::span<const RangeProfileRow> rows) {
  std::string out = "rank,feature_index,range\n";
  for (const auto& r : rows)
    out += std::to_string(r.rank) + ',' + std::to_string(r.feature) + ',' +
           format_number(r.value) + '\n';
  return out;
}

std::vector<double> mean_range_profile(std::span<const RangeVector> layers) {
  if (layers.empty()) return {};
  const std::size_t e = layers.front().features;
  std::vector<double> mean(e, 0.0);
  for (const auto& layer : layers) {
    if (layer.features != e)
      throw Error(ErrorCode::kShapeMismatch, "range profile: layers differ in feature count");
    const auto rows = range_profile(layer, true);
    for (std::size_t r = 0; r < e; ++r) mean[r] += rows[r].value;
  }
  for (auto& v : mean) v /= static_cast<double>(layers.size());
  return mean;
}

}  // namespace tpq
