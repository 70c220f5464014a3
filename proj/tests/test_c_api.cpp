#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "tpq/tpq.h"

namespace {

struct Scratch {
  std::filesystem::path dir;
  explicit Scratch(const std::string& name)
      : dir(std::filesystem::temp_directory_path() / ("tpq_capi_" + name)) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
  }
  ~Scratch() { std::filesystem::remove_all(dir); }
  std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
};

tpq_synthetic_spec tiny_spec() {
  tpq_synthetic_spec spec;
  REQUIRE(tpq_synthetic_spec_preset(TPQ_PRESET_SMALL, &spec) == TPQ_OK);
  spec.input_dim = 64;
  spec.output_dim = 64;
  spec.seq_len = 8;
  spec.num_calibration = 16;
  spec.num_evaluation = 4;
  static const uint32_t planted[] = {5, 40, 41};
  spec.num_outliers = 3;
  spec.outlier_indices = planted;
  return spec;
}

}  // namespace

TEST_CASE("status strings and last error") {
  CHECK(std::string(tpq_status_string(TPQ_OK)) == "ok");
  CHECK(std::strlen(tpq_status_string(TPQ_ERR_STALE_TABLE)) > 0);
  CHECK(std::strlen(tpq_version()) > 0);

  tpq_matrix* m = nullptr;
  CHECK(tpq_matrix_create(2, 2, nullptr, nullptr) == TPQ_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(tpq_last_error()) > 0);
  CHECK(tpq_matrix_read_dump("/nonexistent/x.tpqa", &m) == TPQ_ERR_IO);
  CHECK(m == nullptr);
}

TEST_CASE("bf16 conversions") {
  CHECK(tpq_f32_to_bf16(1.0f) == 0x3F80);
  CHECK(tpq_bf16_to_f32(0xC000) == -2.0f);
}

TEST_CASE("matrix and dump files") {
  Scratch s("matrix");
  const float data[] = {1, 2, 3, 4, 5, 6};
  tpq_matrix* m = nullptr;
  REQUIRE(tpq_matrix_create(2, 3, data, &m) == TPQ_OK);
  CHECK(tpq_matrix_rows(m) == 2);
  CHECK(tpq_matrix_cols(m) == 3);
  CHECK(tpq_matrix_data(m)[4] == 5.0f);
  REQUIRE(tpq_matrix_write_dump(m, s.path("m.tpqa").c_str()) == TPQ_OK);
  CHECK(std::filesystem::file_size(s.dir / "m.tpqa") == 13 + 24);
  tpq_matrix* back = nullptr;
  REQUIRE(tpq_matrix_read_dump(s.path("m.tpqa").c_str(), &back) == TPQ_OK);
  CHECK(std::memcmp(tpq_matrix_data(back), data, sizeof data) == 0);
  tpq_matrix_destroy(back);
  tpq_matrix_destroy(m);
  tpq_matrix_destroy(nullptr);
}

TEST_CASE("end-to-end pipeline through the C API") {
  Scratch s("pipeline");
  tpq_synthetic_spec spec = tiny_spec();
  tpq_dataset* data = nullptr;
  REQUIRE(tpq_dataset_generate(&spec, &data) == TPQ_OK);
  REQUIRE(tpq_dataset_save(data, s.path("data").c_str()) == TPQ_OK);
  tpq_dataset* loaded = nullptr;
  REQUIRE(tpq_dataset_load(s.path("data").c_str(), &loaded) == TPQ_OK);
  tpq_dataset_info info{};
  REQUIRE(tpq_dataset_get_info(loaded, &info) == TPQ_OK);
  CHECK(info.output_dim == 64);
  CHECK(info.devices == spec.devices);
  CHECK(info.num_calibration == 16);

  tpq_calibration* cal = nullptr;
  REQUIRE(tpq_calibrate(loaded, 0, 0.01f, &cal) == TPQ_OK);
  tpq_calibration_info cinfo{};
  REQUIRE(tpq_calibration_get_info(cal, &cinfo) == TPQ_OK);
  CHECK(cinfo.sequences_seen == 16);
  CHECK(cinfo.gamma == 0.01f);
  REQUIRE(tpq_calibration_save(cal, s.path("t.tpqt").c_str()) == TPQ_OK);
  tpq_calibration* cal2 = nullptr;
  REQUIRE(tpq_calibration_load(s.path("t.tpqt").c_str(), &cal2) == TPQ_OK);

  std::vector<float> ranges(64);
  REQUIRE(tpq_calibration_aggregated_ranges(cal2, ranges.data(), ranges.size()) == TPQ_OK);
  CHECK(tpq_calibration_aggregated_ranges(cal2, ranges.data(), 3) == TPQ_ERR_INVALID_ARGUMENT);
  char* csv = nullptr;
  REQUIRE(tpq_calibration_range_csv(cal2, 1, &csv) == TPQ_OK);
  CHECK(std::string(csv).rfind("rank,feature_index,range\n1,", 0) == 0);
  tpq_string_free(csv);
  char* json = nullptr;
  REQUIRE(tpq_calibration_to_json(cal2, &json) == TPQ_OK);
  CHECK(std::string(json).find("\"sequences_seen\"") != std::string::npos);
  tpq_string_free(json);

  tpq_selection* sel = nullptr;
  REQUIRE(tpq_select(cal2, TPQ_SELECT_TOP_RANGE, spec.num_outliers, 0, &sel) == TPQ_OK);
  REQUIRE(tpq_selection_k(sel) == spec.num_outliers);
  for (size_t i = 0; i < spec.num_outliers; ++i)
    CHECK(tpq_selection_indices(sel)[i] == spec.outlier_indices[i]);
  REQUIRE(tpq_selection_to_json(sel, &json) == TPQ_OK);
  tpq_selection* sel2 = nullptr;
  REQUIRE(tpq_selection_from_json(json, &sel2) == TPQ_OK);
  CHECK(tpq_selection_get_strategy(sel2) == TPQ_SELECT_TOP_RANGE);
  tpq_string_free(json);
  CHECK(tpq_selection_from_json("{", &sel2) == TPQ_ERR_MALFORMED);

  tpq_codec* codec = nullptr;
  REQUIRE(tpq_codec_build(cal2, sel, 4, &codec) == TPQ_OK);
  CHECK(tpq_codec_bit_width(codec) == 4);
  CHECK(tpq_codec_k(codec) == spec.num_outliers);
  CHECK(tpq_codec_devices(codec) == spec.devices);
  CHECK(tpq_codec_features(codec) == 64);
  REQUIRE(tpq_codec_save(codec, s.path("c.tpqs").c_str()) == TPQ_OK);
  tpq_codec* codec2 = nullptr;
  REQUIRE(tpq_codec_load(s.path("c.tpqs").c_str(), &codec2) == TPQ_OK);
  CHECK(tpq_codec_checksum(codec2) == tpq_codec_checksum(codec));

  std::vector<float> y(3 * 64, 0.25f);
  uint8_t* bytes = nullptr;
  size_t len = 0;
  REQUIRE(tpq_encode(codec2, 1, y.data(), 3, 64, TPQ_ROUND_NEAREST, 0, &bytes, &len) == TPQ_OK);
  CHECK(len == tpq_message_size(3, 64, spec.num_outliers, 4));
  tpq_matrix* decoded = nullptr;
  REQUIRE(tpq_decode(codec, bytes, len, TPQ_ROUND_NEAREST, 0, &decoded) == TPQ_OK);
  CHECK(tpq_matrix_rows(decoded) == 3);
  tpq_matrix_destroy(decoded);
  CHECK(tpq_decode(codec, bytes, len - 1, TPQ_ROUND_NEAREST, 0, &decoded) == TPQ_ERR_MALFORMED);

  tpq_codec* other = nullptr;
  REQUIRE(tpq_codec_build(cal2, sel, 5, &other) == TPQ_OK);
  CHECK(tpq_decode(other, bytes, len, TPQ_ROUND_NEAREST, 0, &decoded) == TPQ_ERR_STALE_TABLE);
  CHECK(std::string(tpq_last_error()).find("stale codec table") != std::string::npos);
  tpq_bytes_free(bytes);

  tpq_sync_config cfg{TPQ_SYNC_SELECTED, 4, 0, TPQ_ROUND_NEAREST, 0};
  tpq_sync_report sel_report{};
  REQUIRE(tpq_simulate(loaded, codec, &cfg, &sel_report) == TPQ_OK);
  CHECK(sel_report.sequences == 4);
  CHECK(sel_report.bytes_on_wire < sel_report.bytes_baseline_bf16);
  cfg.strategy = TPQ_SYNC_FULL;
  tpq_sync_report full{};
  REQUIRE(tpq_simulate(loaded, nullptr, &cfg, &full) == TPQ_OK);
  CHECK(full.rel_frobenius <= 1.0 / 128);
  cfg.strategy = TPQ_SYNC_PURE;
  CHECK(tpq_simulate(loaded, codec, &cfg, &full) == TPQ_ERR_INVALID_ARGUMENT);

  const tpq_sync_strategy strategies[] = {TPQ_SYNC_PURE, TPQ_SYNC_SELECTED};
  const int bits[] = {3, 4};
  tpq_sweep_config sweep{strategies, 2, bits, 2, 64, (long long)spec.num_outliers, 0, 0};
  char* sweep_csv = nullptr;
  REQUIRE(tpq_sweep(loaded, cal2, &sweep, &sweep_csv) == TPQ_OK);
  const std::string text(sweep_csv);
  tpq_string_free(sweep_csv);
  size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 5);

  tpq_codec_destroy(other);
  tpq_codec_destroy(codec2);
  tpq_codec_destroy(codec);
  tpq_selection_destroy(sel2);
  tpq_selection_destroy(sel);
  tpq_calibration_destroy(cal2);
  tpq_calibration_destroy(cal);
  tpq_dataset_destroy(loaded);
  tpq_dataset_destroy(data);
}

TEST_CASE("degenerate and malformed calibration files") {
  Scratch s("degenerate");
  {
    std::FILE* f = std::fopen(s.path("empty.tpqt").c_str(), "wb");
    std::fclose(f);
  }
  tpq_calibration* cal = nullptr;
  CHECK(tpq_calibration_load(s.path("empty.tpqt").c_str(), &cal) == TPQ_ERR_DEGENERATE);
  CHECK(std::string(tpq_last_error()).find("degenerate calibration") != std::string::npos);
  {
    std::FILE* f = std::fopen(s.path("junk.tpqt").c_str(), "wb");
    std::fputs("TPQTjunk", f);
    std::fclose(f);
  }
  CHECK(tpq_calibration_load(s.path("junk.tpqt").c_str(), &cal) == TPQ_ERR_MALFORMED);

  REQUIRE(tpq_calibration_create(2, 3, 0.01f, &cal) == TPQ_OK);
  const float y[] = {1, 2, 3, 4, 5, 6};
  REQUIRE(tpq_calibration_observe(cal, 0, y, 2, 3) == TPQ_OK);
  tpq_selection* sel = nullptr;
  CHECK(tpq_select(cal, TPQ_SELECT_TOP_RANGE, 1, 0, &sel) == TPQ_ERR_DEGENERATE);
  const float bad[] = {1, 2, NAN, 4, 5, 6};
  CHECK(tpq_calibration_observe(cal, 1, bad, 2, 3) == TPQ_ERR_NON_FINITE);
  tpq_calibration_destroy(cal);

  CHECK(tpq_default_k(4608, 64) == 72);
  CHECK(tpq_bits_per_value(4608, 72, 4) == 4.1875);
}
