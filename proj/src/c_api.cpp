#include "tpq/tpq.h"

#include <cstring>
#include <new>
#include <optional>
#include <string>

#include "tpq/calibration.hpp"
#include "tpq/codec.hpp"
#include "tpq/collective.hpp"
#include "tpq/error.hpp"
#include "tpq/harness.hpp"
#include "tpq/selection.hpp"

struct tpq_matrix {
  tpq::Matrix value;
};
struct tpq_dataset {
  tpq::Dataset value;
};
struct tpq_calibration {
  tpq::CalibrationTable value;
};
struct tpq_selection {
  tpq::FeatureSelection value;
};
struct tpq_codec {
  tpq::CodecTable value;
};

namespace {

thread_local std::string g_last_error;

tpq_status to_status(tpq::ErrorCode code) {
  using tpq::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return TPQ_ERR_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return TPQ_ERR_SHAPE;
    case ErrorCode::kMalformed: return TPQ_ERR_MALFORMED;
    case ErrorCode::kStaleTable: return TPQ_ERR_STALE_TABLE;
    case ErrorCode::kDegenerate: return TPQ_ERR_DEGENERATE;
    case ErrorCode::kNonFinite: return TPQ_ERR_NON_FINITE;
    case ErrorCode::kIo: return TPQ_ERR_IO;
    case ErrorCode::kInternal: return TPQ_ERR_INTERNAL;
  }
  return TPQ_ERR_INTERNAL;
}

tpq_status fail(tpq_status status, const std::string& what) {
  g_last_error = what;
  return status;
}

template <class F>
tpq_status guarded(F&& body) {
  try {
    body();
    return TPQ_OK;
  } catch (const tpq::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TPQ_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TPQ_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TPQ_ERR_INTERNAL, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw tpq::Error(tpq::ErrorCode::kInvalidArgument, what);
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

tpq::Matrix matrix_from(const float* data, std::size_t rows, std::size_t cols) {
  require(data != nullptr || rows * cols == 0, "null data pointer");
  return tpq::Matrix(rows, cols, std::vector<float>(data, data + rows * cols));
}

tpq::SyncStrategy sync_strategy(tpq_sync_strategy s) {
  switch (s) {
    case TPQ_SYNC_FULL: return tpq::SyncStrategy::kFullPrecision;
    case TPQ_SYNC_PURE: return tpq::SyncStrategy::kPureLowBit;
    case TPQ_SYNC_RANDOM: return tpq::SyncStrategy::kRandomBf16;
    case TPQ_SYNC_SELECTED: return tpq::SyncStrategy::kSelectedBf16;
  }
  throw tpq::Error(tpq::ErrorCode::kInvalidArgument, "unknown sync strategy");
}

tpq::Rounding rounding_mode(tpq_rounding r) {
  switch (r) {
    case TPQ_ROUND_NEAREST: return tpq::Rounding::kNearest;
    case TPQ_ROUND_STOCHASTIC: return tpq::Rounding::kStochastic;
    case TPQ_ROUND_DITHERED: return tpq::Rounding::kDithered;
  }
  throw tpq::Error(tpq::ErrorCode::kInvalidArgument, "unknown rounding mode");
}

tpq::SyntheticSpec spec_from(const tpq_synthetic_spec& c) {
  tpq::SyntheticSpec s;
  s.input_dim = c.input_dim;
  s.output_dim = c.output_dim;
  s.seq_len = c.seq_len;
  s.devices = c.devices;
  s.num_calibration = c.num_calibration;
  s.num_evaluation = c.num_evaluation;
  s.base_std = c.base_std;
  s.outlier_multiplier = c.outlier_multiplier;
  s.weight_seed = c.weight_seed;
  s.data_seed = c.data_seed;
  if (c.outlier_indices != nullptr)
    s.outlier_indices.assign(c.outlier_indices, c.outlier_indices + c.num_outliers);
  else
    s.outlier_indices = tpq::planted_outliers(c.output_dim, c.num_outliers, c.weight_seed);
  return s;
}

}  // namespace

extern "C" {

const char* tpq_version(void) { return "1.0.0"; }

const char* tpq_status_string(tpq_status status) {
  switch (status) {
    case TPQ_OK: return "ok";
    case TPQ_ERR_INVALID_ARGUMENT: return tpq::to_string(tpq::ErrorCode::kInvalidArgument);
    case TPQ_ERR_SHAPE: return tpq::to_string(tpq::ErrorCode::kShapeMismatch);
    case TPQ_ERR_MALFORMED: return tpq::to_string(tpq::ErrorCode::kMalformed);
    case TPQ_ERR_STALE_TABLE: return tpq::to_string(tpq::ErrorCode::kStaleTable);
    case TPQ_ERR_DEGENERATE: return tpq::to_string(tpq::ErrorCode::kDegenerate);
    case TPQ_ERR_NON_FINITE: return tpq::to_string(tpq::ErrorCode::kNonFinite);
    case TPQ_ERR_IO: return tpq::to_string(tpq::ErrorCode::kIo);
    case TPQ_ERR_INTERNAL: return tpq::to_string(tpq::ErrorCode::kInternal);
  }
  return "unknown status";
}

const char* tpq_last_error(void) { return g_last_error.c_str(); }
void tpq_string_free(char* s) { delete[] s; }
void tpq_bytes_free(uint8_t* bytes) { delete[] bytes; }

uint16_t tpq_f32_to_bf16(float x) { return tpq::f32_to_bf16(x).bits; }
float tpq_bf16_to_f32(uint16_t bits) { return tpq::bf16_to_f32(tpq::Bf16{bits}); }

tpq_status tpq_matrix_create(size_t rows, size_t cols, const float* data, tpq_matrix** out) {
  return guarded([&] {
    require(out != nullptr, "null output handle");
    tpq::Matrix m = data ? matrix_from(data, rows, cols) : tpq::Matrix(rows, cols);
    *out = new tpq_matrix{std::move(m)};
  });
}

void tpq_matrix_destroy(tpq_matrix* m) { delete m; }
size_t tpq_matrix_rows(const tpq_matrix* m) { return m ? m->value.rows() : 0; }
size_t tpq_matrix_cols(const tpq_matrix* m) { return m ? m->value.cols() : 0; }
const float* tpq_matrix_data(const tpq_matrix* m) {
  return m ? m->value.values().data() : nullptr;
}

tpq_status tpq_matrix_read_dump(const char* path, tpq_matrix** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new tpq_matrix{tpq::deserialize_dump(tpq::read_file(path))};
  });
}

tpq_status tpq_matrix_write_dump(const tpq_matrix* m, const char* path) {
  return guarded([&] {
    require(m && path, "null argument");
    tpq::write_file_atomic(path, tpq::serialize_dump(m->value));
  });
}

tpq_status tpq_synthetic_spec_preset(tpq_preset preset, tpq_synthetic_spec* spec) {
  return guarded([&] {
    require(spec != nullptr, "null spec");
    tpq::SyntheticSpec s;
    switch (preset) {
      case TPQ_PRESET_DEFAULT: s = tpq::SyntheticSpec::default_spec(); break;
      case TPQ_PRESET_SMALL: s = tpq::SyntheticSpec::small_spec(); break;
      default: throw tpq::Error(tpq::ErrorCode::kInvalidArgument, "unknown preset");
    }
    *spec = tpq_synthetic_spec{s.input_dim,          s.output_dim,  s.seq_len,
                               s.devices,            s.num_calibration, s.num_evaluation,
                               s.base_std,           s.outlier_multiplier,
                               s.outlier_indices.size(), nullptr,  s.weight_seed,
                               s.data_seed};
  });
}

tpq_status tpq_dataset_generate(const tpq_synthetic_spec* spec, tpq_dataset** out) {
  return guarded([&] {
    require(spec && out, "null argument");
    *out = new tpq_dataset{tpq::generate_synthetic(spec_from(*spec))};
  });
}

tpq_status tpq_dataset_save(const tpq_dataset* data, const char* dir) {
  return guarded([&] {
    require(data && dir, "null argument");
    tpq::save_dataset(data->value, dir);
  });
}

tpq_status tpq_dataset_load(const char* dir, tpq_dataset** out) {
  return guarded([&] {
    require(dir && out, "null argument");
    *out = new tpq_dataset{tpq::load_dataset(dir)};
  });
}

void tpq_dataset_destroy(tpq_dataset* data) { delete data; }

tpq_status tpq_dataset_get_info(const tpq_dataset* data, tpq_dataset_info* info) {
  return guarded([&] {
    require(data && info, "null argument");
    const auto& d = data->value;
    *info = tpq_dataset_info{d.layer.input_dim(), d.layer.output_dim(), d.seq_len,
                             d.devices, d.calibration.size(), d.evaluation.size()};
  });
}

tpq_status tpq_calibrate(const tpq_dataset* data, size_t devices, float gamma,
                         tpq_calibration** out) {
  return guarded([&] {
    require(data && out, "null argument");
    const auto& d = data->value;
    const auto sharded = tpq::shard_layer(d.layer, devices ? devices : d.devices);
    *out = new tpq_calibration{tpq::run_calibration(sharded, d.calibration, gamma)};
  });
}

tpq_status tpq_calibration_create(size_t devices, size_t features, float gamma,
                                  tpq_calibration** out) {
  return guarded([&] {
    require(out != nullptr, "null output handle");
    *out = new tpq_calibration{tpq::CalibrationTable(devices, features, gamma)};
  });
}

tpq_status tpq_calibration_observe(tpq_calibration* table, size_t device, const float* y,
                                   size_t rows, size_t features) {
  return guarded([&] {
    require(table != nullptr, "null table");
    table->value.observe_sequence(device, matrix_from(y, rows, features));
  });
}

void tpq_calibration_destroy(tpq_calibration* table) { delete table; }

tpq_status tpq_calibration_save(const tpq_calibration* table, const char* path) {
  return guarded([&] {
    require(table && path, "null argument");
    tpq::write_file_atomic(path, tpq::serialize(table->value));
  });
}

tpq_status tpq_calibration_load(const char* path, tpq_calibration** out) {
  return guarded([&] {
    require(path && out, "null argument");
    const auto bytes = tpq::read_file(path);
    if (bytes.empty())
      throw tpq::Error(tpq::ErrorCode::kDegenerate,
                       std::string("degenerate calibration: '") + path + "' is empty");
    *out = new tpq_calibration{tpq::deserialize_calibration(bytes)};
  });
}

tpq_status tpq_calibration_to_json(const tpq_calibration* table, char** json) {
  return guarded([&] {
    require(table && json, "null argument");
    *json = copy_string(tpq::to_json(table->value));
  });
}

tpq_status tpq_calibration_get_info(const tpq_calibration* table, tpq_calibration_info* info) {
  return guarded([&] {
    require(table && info, "null argument");
    const auto& t = table->value;
    *info = tpq_calibration_info{t.devices(), t.features(), t.gamma(), t.sequences_seen()};
  });
}

tpq_status tpq_calibration_aggregated_ranges(const tpq_calibration* table, float* out,
                                             size_t capacity) {
  return guarded([&] {
    require(table && out, "null argument");
    const auto ranges = tpq::compute_ranges(table->value);
    require(capacity >= ranges.aggregated.size(), "output buffer smaller than E");
    std::memcpy(out, ranges.aggregated.data(), ranges.aggregated.size() * sizeof(float));
  });
}

tpq_status tpq_calibration_range_csv(const tpq_calibration* table, int normalize, char** csv) {
  return guarded([&] {
    require(table && csv, "null argument");
    const auto rows = tpq::range_profile(tpq::compute_ranges(table->value), normalize != 0);
    *csv = copy_string(tpq::range_profile_csv(rows));
  });
}

size_t tpq_default_k(size_t features, size_t denominator) {
  return denominator == 0 ? 0 : tpq::default_k(features, denominator);
}

tpq_status tpq_select(const tpq_calibration* table, tpq_selection_strategy strategy, size_t k,
                      uint64_t seed, tpq_selection** out) {
  return guarded([&] {
    require(table && out, "null argument");
    const std::size_t e = table->value.features();
    tpq::FeatureSelection sel;
    switch (strategy) {
      case TPQ_SELECT_NONE:
        sel = tpq::no_selection(e);
        break;
      case TPQ_SELECT_TOP_RANGE: {
        const auto ranges = tpq::compute_ranges(table->value);
        sel = tpq::select_top_range(ranges, k);
        break;
      }
      case TPQ_SELECT_RANDOM: {
        tpq::Rng rng(seed);
        sel = tpq::select_random(e, k, rng);
        break;
      }
      default:
        throw tpq::Error(tpq::ErrorCode::kInvalidArgument, "cannot select with this strategy");
    }
    *out = new tpq_selection{std::move(sel)};
  });
}

void tpq_selection_destroy(tpq_selection* sel) { delete sel; }
size_t tpq_selection_k(const tpq_selection* sel) { return sel ? sel->value.k() : 0; }
const uint32_t* tpq_selection_indices(const tpq_selection* sel) {
  return sel ? sel->value.indices.data() : nullptr;
}

tpq_selection_strategy tpq_selection_get_strategy(const tpq_selection* sel) {
  if (!sel) return TPQ_SELECT_UNKNOWN;
  switch (sel->value.strategy) {
    case tpq::SelectionStrategy::kNone: return TPQ_SELECT_NONE;
    case tpq::SelectionStrategy::kTopRange: return TPQ_SELECT_TOP_RANGE;
    case tpq::SelectionStrategy::kRandom: return TPQ_SELECT_RANDOM;
    case tpq::SelectionStrategy::kUnknown: return TPQ_SELECT_UNKNOWN;
  }
  return TPQ_SELECT_UNKNOWN;
}

tpq_status tpq_selection_to_json(const tpq_selection* sel, char** json) {
  return guarded([&] {
    require(sel && json, "null argument");
    *json = copy_string(tpq::to_json(sel->value));
  });
}

tpq_status tpq_selection_from_json(const char* json, tpq_selection** out) {
  return guarded([&] {
    require(json && out, "null argument");
    *out = new tpq_selection{tpq::selection_from_json(json)};
  });
}

double tpq_bits_per_value(size_t features, size_t k, int bit_width) {
  if (features == 0 || k > features) return 0.0;
  return tpq::bits_per_value(features, k, bit_width);
}

size_t tpq_message_size(size_t rows, size_t features, size_t k, int bit_width) {
  return tpq::message_size(rows, features, k, bit_width);
}

tpq_status tpq_codec_build(const tpq_calibration* table, const tpq_selection* sel,
                           int bit_width, tpq_codec** out) {
  return guarded([&] {
    require(table && sel && out, "null argument");
    const auto ranges = tpq::compute_ranges(table->value);
    *out = new tpq_codec{tpq::build_codec_table(ranges, sel->value, bit_width)};
  });
}

void tpq_codec_destroy(tpq_codec* codec) { delete codec; }

tpq_status tpq_codec_save(const tpq_codec* codec, const char* path) {
  return guarded([&] {
    require(codec && path, "null argument");
    tpq::write_file_atomic(path, tpq::serialize(codec->value));
  });
}

tpq_status tpq_codec_load(const char* path, tpq_codec** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new tpq_codec{tpq::deserialize_codec(tpq::read_file(path))};
  });
}

uint64_t tpq_codec_checksum(const tpq_codec* codec) { return codec ? codec->value.checksum() : 0; }
int tpq_codec_bit_width(const tpq_codec* codec) { return codec ? codec->value.bit_width() : 0; }
size_t tpq_codec_k(const tpq_codec* codec) { return codec ? codec->value.selection().k() : 0; }
size_t tpq_codec_devices(const tpq_codec* codec) { return codec ? codec->value.devices() : 0; }
size_t tpq_codec_features(const tpq_codec* codec) { return codec ? codec->value.features() : 0; }

tpq_status tpq_encode(const tpq_codec* codec, size_t device, const float* y, size_t rows,
                      size_t features, tpq_rounding rounding, uint64_t seed, uint8_t** bytes,
                      size_t* len) {
  return guarded([&] {
    require(codec && bytes && len, "null argument");
    const auto msg = tpq::encode(matrix_from(y, rows, features), codec->value, device,
                                 {rounding_mode(rounding), seed});
    auto* buf = new uint8_t[msg.size()];
    std::memcpy(buf, msg.bytes.data(), msg.size());
    *bytes = buf;
    *len = msg.size();
  });
}

tpq_status tpq_decode(const tpq_codec* codec, const uint8_t* bytes, size_t len,
                      tpq_rounding rounding, uint64_t seed, tpq_matrix** out) {
  return guarded([&] {
    require(codec && out && (bytes || len == 0), "null argument");
    tpq::CompressedMessage msg{std::vector<std::uint8_t>(bytes, bytes + len)};
    *out = new tpq_matrix{tpq::decode(msg, codec->value, {rounding_mode(rounding), seed})};
  });
}

tpq_status tpq_simulate(const tpq_dataset* data, const tpq_codec* codec,
                        const tpq_sync_config* cfg, tpq_sync_report* report) {
  return guarded([&] {
    require(data && cfg && report, "null argument");
    tpq::SyncConfig sync;
    sync.strategy = sync_strategy(cfg->strategy);
    sync.bit_width = cfg->bit_width;
    sync.reduction =
        cfg->bf16_reduction ? tpq::ReductionPrecision::kBf16 : tpq::ReductionPrecision::kF32;
    sync.rounding = {rounding_mode(cfg->rounding), cfg->rounding_seed};
    const bool full = sync.strategy == tpq::SyncStrategy::kFullPrecision;
    require(full || codec != nullptr, "strategy needs a codec table");
    const std::size_t devices = codec ? codec->value.devices() : data->value.devices;
    const auto sharded = tpq::shard_layer(data->value.layer, devices);
    const auto score = tpq::score_stream(sharded, data->value.evaluation,
                                         codec ? &codec->value : nullptr, sync);
    *report = tpq_sync_report{score.mse,           score.max_abs_err, score.rel_frobenius,
                              score.bytes_on_wire, score.bytes_baseline_bf16,
                              data->value.evaluation.size()};
  });
}

tpq_status tpq_sweep(const tpq_dataset* data, const tpq_calibration* table,
                     const tpq_sweep_config* cfg, char** csv) {
  return guarded([&] {
    require(data && table && cfg && csv, "null argument");
    require(cfg->strategies || cfg->num_strategies == 0, "null strategies");
    require(cfg->bit_widths || cfg->num_bit_widths == 0, "null bit widths");
    tpq::SweepConfig sweep;
    sweep.strategies.clear();
    for (size_t i = 0; i < cfg->num_strategies; ++i)
      sweep.strategies.push_back(sync_strategy(cfg->strategies[i]));
    sweep.bit_widths.assign(cfg->bit_widths, cfg->bit_widths + cfg->num_bit_widths);
    sweep.k_policy.denominator = cfg->k_denominator;
    if (cfg->explicit_k >= 0) sweep.k_policy.explicit_k = static_cast<std::size_t>(cfg->explicit_k);
    sweep.random_seed = cfg->random_seed;
    sweep.reduction =
        cfg->bf16_reduction ? tpq::ReductionPrecision::kBf16 : tpq::ReductionPrecision::kF32;
    const auto rows =
        tpq::run_sweep(data->value.layer, table->value, data->value.evaluation, sweep);
    *csv = copy_string(tpq::sweep_csv(rows));
  });
}

}  // extern "C"
