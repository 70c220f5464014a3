/*
 * C interface to the tensor-parallel quantized synchronization library.
 *
 * Every object is an opaque handle created by a tpq_*_create/load/generate
 * call and released with the matching tpq_*_destroy. Functions that can fail
 * return a tpq_status; on failure, tpq_last_error() describes the problem for
 * the calling thread until its next failing call. Strings and byte buffers
 * handed out by the library must be released with tpq_string_free and
 * tpq_bytes_free.
 */
#ifndef TPQ_TPQ_H
#define TPQ_TPQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TPQ_API __declspec(dllexport)
#else
#define TPQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tpq_status {
  TPQ_OK = 0,
  TPQ_ERR_INVALID_ARGUMENT = 1,
  TPQ_ERR_SHAPE = 2,
  TPQ_ERR_MALFORMED = 3,
  TPQ_ERR_STALE_TABLE = 4,
  TPQ_ERR_DEGENERATE = 5,
  TPQ_ERR_NON_FINITE = 6,
  TPQ_ERR_IO = 7,
  TPQ_ERR_INTERNAL = 8
} tpq_status;

typedef struct tpq_matrix tpq_matrix;
typedef struct tpq_dataset tpq_dataset;
typedef struct tpq_calibration tpq_calibration;
typedef struct tpq_selection tpq_selection;
typedef struct tpq_codec tpq_codec;

TPQ_API const char* tpq_version(void);
TPQ_API const char* tpq_status_string(tpq_status status);
TPQ_API const char* tpq_last_error(void);
TPQ_API void tpq_string_free(char* s);
TPQ_API void tpq_bytes_free(uint8_t* bytes);

/* ---- numeric ---------------------------------------------------------- */

TPQ_API uint16_t tpq_f32_to_bf16(float x);
TPQ_API float tpq_bf16_to_f32(uint16_t bits);

/* data may be NULL for a zero matrix; otherwise rows*cols row-major floats. */
TPQ_API tpq_status tpq_matrix_create(size_t rows, size_t cols, const float* data,
                                     tpq_matrix** out);
TPQ_API void tpq_matrix_destroy(tpq_matrix* m);
TPQ_API size_t tpq_matrix_rows(const tpq_matrix* m);
TPQ_API size_t tpq_matrix_cols(const tpq_matrix* m);
TPQ_API const float* tpq_matrix_data(const tpq_matrix* m);
TPQ_API tpq_status tpq_matrix_read_dump(const char* path, tpq_matrix** out);
TPQ_API tpq_status tpq_matrix_write_dump(const tpq_matrix* m, const char* path);

/* ---- synthetic data and dataset directories ---------------------------- */

typedef struct tpq_synthetic_spec {
  size_t input_dim;
  size_t output_dim;
  size_t seq_len;
  size_t devices;
  size_t num_calibration;
  size_t num_evaluation;
  float base_std;
  float outlier_multiplier;
  /* Either an explicit list (outlier_indices != NULL) or num_outliers
     positions drawn from weight_seed. */
  size_t num_outliers;
  const uint32_t* outlier_indices;
  uint64_t weight_seed;
  uint64_t data_seed;
} tpq_synthetic_spec;

typedef enum tpq_preset { TPQ_PRESET_DEFAULT = 0, TPQ_PRESET_SMALL = 1 } tpq_preset;

/* Fills spec with a preset; outlier_indices is left NULL. */
TPQ_API tpq_status tpq_synthetic_spec_preset(tpq_preset preset, tpq_synthetic_spec* spec);
TPQ_API tpq_status tpq_dataset_generate(const tpq_synthetic_spec* spec, tpq_dataset** out);
TPQ_API tpq_status tpq_dataset_save(const tpq_dataset* data, const char* dir);
TPQ_API tpq_status tpq_dataset_load(const char* dir, tpq_dataset** out);
TPQ_API void tpq_dataset_destroy(tpq_dataset* data);

typedef struct tpq_dataset_info {
  size_t input_dim;
  size_t output_dim;
  size_t seq_len;
  size_t devices;
  size_t num_calibration;
  size_t num_evaluation;
} tpq_dataset_info;

TPQ_API tpq_status tpq_dataset_get_info(const tpq_dataset* data, tpq_dataset_info* info);

/* ---- calibration ------------------------------------------------------- */

/* Shards the dataset's layer across `devices` (0 = the dataset's own N) and
   runs EMA calibration over its calibration split. */
TPQ_API tpq_status tpq_calibrate(const tpq_dataset* data, size_t devices, float gamma,
                                 tpq_calibration** out);
TPQ_API tpq_status tpq_calibration_create(size_t devices, size_t features, float gamma,
                                          tpq_calibration** out);
/* y is rows x features, row-major. */
TPQ_API tpq_status tpq_calibration_observe(tpq_calibration* table, size_t device,
                                           const float* y, size_t rows, size_t features);
TPQ_API void tpq_calibration_destroy(tpq_calibration* table);
TPQ_API tpq_status tpq_calibration_save(const tpq_calibration* table, const char* path);
TPQ_API tpq_status tpq_calibration_load(const char* path, tpq_calibration** out);
TPQ_API tpq_status tpq_calibration_to_json(const tpq_calibration* table, char** json);

typedef struct tpq_calibration_info {
  size_t devices;
  size_t features;
  float gamma;
  uint64_t sequences_seen;
} tpq_calibration_info;

TPQ_API tpq_status tpq_calibration_get_info(const tpq_calibration* table,
                                            tpq_calibration_info* info);
/* Writes E aggregated ranges into out (capacity must be >= E). */
TPQ_API tpq_status tpq_calibration_aggregated_ranges(const tpq_calibration* table, float* out,
                                                     size_t capacity);
/* CSV rank,feature_index,range sorted descending; normalize != 0 scales max to 1. */
TPQ_API tpq_status tpq_calibration_range_csv(const tpq_calibration* table, int normalize,
                                             char** csv);

/* ---- selection --------------------------------------------------------- */

typedef enum tpq_selection_strategy {
  TPQ_SELECT_NONE = 0,
  TPQ_SELECT_TOP_RANGE = 1,
  TPQ_SELECT_RANDOM = 2,
  TPQ_SELECT_UNKNOWN = 3
} tpq_selection_strategy;

TPQ_API size_t tpq_default_k(size_t features, size_t denominator);
/* seed is used by TPQ_SELECT_RANDOM only. */
TPQ_API tpq_status tpq_select(const tpq_calibration* table, tpq_selection_strategy strategy,
                              size_t k, uint64_t seed, tpq_selection** out);
TPQ_API void tpq_selection_destroy(tpq_selection* sel);
TPQ_API size_t tpq_selection_k(const tpq_selection* sel);
TPQ_API const uint32_t* tpq_selection_indices(const tpq_selection* sel);
TPQ_API tpq_selection_strategy tpq_selection_get_strategy(const tpq_selection* sel);
TPQ_API tpq_status tpq_selection_to_json(const tpq_selection* sel, char** json);
TPQ_API tpq_status tpq_selection_from_json(const char* json, tpq_selection** out);

/* ---- codec ------------------------------------------------------------- */

typedef enum tpq_rounding {
  TPQ_ROUND_NEAREST = 0,
  TPQ_ROUND_STOCHASTIC = 1,
  TPQ_ROUND_DITHERED = 2
} tpq_rounding;

TPQ_API double tpq_bits_per_value(size_t features, size_t k, int bit_width);
TPQ_API size_t tpq_message_size(size_t rows, size_t features, size_t k, int bit_width);

TPQ_API tpq_status tpq_codec_build(const tpq_calibration* table, const tpq_selection* sel,
                                   int bit_width, tpq_codec** out);
TPQ_API void tpq_codec_destroy(tpq_codec* codec);
TPQ_API tpq_status tpq_codec_save(const tpq_codec* codec, const char* path);
TPQ_API tpq_status tpq_codec_load(const char* path, tpq_codec** out);
TPQ_API uint64_t tpq_codec_checksum(const tpq_codec* codec);
TPQ_API int tpq_codec_bit_width(const tpq_codec* codec);
TPQ_API size_t tpq_codec_k(const tpq_codec* codec);
TPQ_API size_t tpq_codec_devices(const tpq_codec* codec);
TPQ_API size_t tpq_codec_features(const tpq_codec* codec);

/* Encodes rows x features partial outputs of one device into a message. */
TPQ_API tpq_status tpq_encode(const tpq_codec* codec, size_t device, const float* y,
                              size_t rows, size_t features, tpq_rounding rounding,
                              uint64_t seed, uint8_t** bytes, size_t* len);
TPQ_API tpq_status tpq_decode(const tpq_codec* codec, const uint8_t* bytes, size_t len,
                              tpq_rounding rounding, uint64_t seed, tpq_matrix** out);

/* ---- simulation -------------------------------------------------------- */

typedef enum tpq_sync_strategy {
  TPQ_SYNC_FULL = 0,
  TPQ_SYNC_PURE = 1,
  TPQ_SYNC_RANDOM = 2,
  TPQ_SYNC_SELECTED = 3
} tpq_sync_strategy;

typedef struct tpq_sync_config {
  tpq_sync_strategy strategy;
  int bit_width;
  int bf16_reduction; /* nonzero: round every partial sum to BF16 */
  tpq_rounding rounding;
  uint64_t rounding_seed;
} tpq_sync_config;

typedef struct tpq_sync_report {
  double mse;
  double max_abs_err;
  double rel_frobenius;
  uint64_t bytes_on_wire;
  uint64_t bytes_baseline_bf16;
  size_t sequences;
} tpq_sync_report;

/* Runs the sync over the evaluation split and scores it against the exact
   sum. codec may be NULL for TPQ_SYNC_FULL; N is taken from the codec (or
   the dataset for TPQ_SYNC_FULL). */
TPQ_API tpq_status tpq_simulate(const tpq_dataset* data, const tpq_codec* codec,
                                const tpq_sync_config* cfg, tpq_sync_report* report);

typedef struct tpq_sweep_config {
  const tpq_sync_strategy* strategies;
  size_t num_strategies;
  const int* bit_widths;
  size_t num_bit_widths;
  size_t k_denominator; /* used when explicit_k < 0 */
  long long explicit_k;
  uint64_t random_seed;
  int bf16_reduction;
} tpq_sweep_config;

/* One CSV row per (strategy, bit width) over the evaluation split. */
TPQ_API tpq_status tpq_sweep(const tpq_dataset* data, const tpq_calibration* table,
                             const tpq_sweep_config* cfg, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* TPQ_TPQ_H */
