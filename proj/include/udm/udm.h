/* C interface to the uncertainty-driven selective-scan segmentation library.
 *
 * Every function that can fail returns a status code:
 *   UDM_OK (0)           success
 *   UDM_ERR_CONFIG (2)   invalid configuration, arguments, or data shapes
 *   UDM_ERR_NUMERIC (3)  non-finite values or numeric breakdown
 *   UDM_ERR_IO (4)       missing, unreadable, unwritable, or corrupt files
 * After a failure, udm_last_error() returns a human-readable message for the
 * calling thread. Strings returned through char** out-parameters are heap
 * allocations owned by the caller; release them with udm_string_free().
 */
#ifndef UDM_H
#define UDM_H

#include <stdint.h>

#if defined(__GNUC__)
#define UDM_API __attribute__((visibility("default")))
#else
#define UDM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define UDM_OK 0
#define UDM_ERR_CONFIG 2
#define UDM_ERR_NUMERIC 3
#define UDM_ERR_IO 4

/* Library version as "major.minor.patch". Static storage; do not free. */
UDM_API const char* udm_version(void);

/* Message of the calling thread's most recent failure ("" if none).
 * Static storage; do not free. */
UDM_API const char* udm_last_error(void);

/* Releases a string returned through any char** out-parameter. NULL is ok. */
UDM_API void udm_string_free(char* s);

/* Writes the canonical default configuration as pretty-printed JSON. */
UDM_API int udm_config_default(char** out_json);

/* Normalizes a configuration: parses config_json (NULL or "" means the
 * defaults), applies n_overrides dotted-key/value pairs (for example
 * "train.lr" / "0.05"; values are parsed as JSON where possible and taken
 * as raw text for string-typed fields), validates, and returns the complete
 * canonical JSON with every field present. */
UDM_API int udm_config_normalize(const char* config_json, const char* const* override_keys,
                                 const char* const* override_values, int64_t n_overrides,
                                 char** out_json);

/* Generates the synthetic dataset described by the config's "synth" section
 * and writes images/, masks/, and manifest.json under out_dir. */
UDM_API int udm_synth_generate(const char* config_json, const char* out_dir);

/* Runs a full training job as described by config_json. Logs, checkpoints,
 * and summary.json are written under the config's out_dir. When out_summary
 * is non-NULL it receives the run summary as JSON (steps, epochs, DSC
 * figures, checkpoint paths). */
UDM_API int udm_train(const char* config_json, char** out_summary);

/* Evaluates a checkpoint. The dataset comes from data_dir when non-NULL and
 * non-empty, otherwise from the data source recorded in the checkpoint's
 * embedded config (a stored data_dir, or the synthetic generator settings).
 * split selects "train", "val", "test", or "all". threads fans out the
 * forward passes without changing the result. out_csv/out_json, when
 * non-NULL, receive the per-class + macro report. */
UDM_API int udm_eval(const char* checkpoint_path, const char* data_dir, const char* split,
                     int64_t threads, char** out_csv, char** out_json);

/* Times one forward selective scan per kernel (best of three) for each
 * sequence length and returns a "length,sequential_ns,parallel_ns" CSV. */
UDM_API int udm_bench_scan(const int64_t* lengths, int64_t n_lengths, int64_t channels,
                           int64_t state_dim, uint64_t seed, char** out_csv);

/* Runs one PGM image through a checkpointed model and dumps each block's
 * ranking artifacts under out_dir: uncertainty map as normalized PGM and
 * row/col/value CSV (when uncertainty ranking is active), the four traversal
 * orders, and pooled branch norms. */
UDM_API int udm_inspect(const char* checkpoint_path, const char* image_pgm_path,
                        const char* out_dir);

/* Opaque handle to a loaded model. */
typedef struct udm_model udm_model;

/* Loads a checkpoint into a ready-to-run model. */
UDM_API int udm_model_load(const char* checkpoint_path, udm_model** out_model);

/* Frees a model handle. NULL is ok. */
UDM_API void udm_model_free(udm_model* model);

/* Total number of trainable scalars. Returns -1 for NULL. */
UDM_API int64_t udm_model_param_count(const udm_model* model);

/* Number of output classes. Returns -1 for NULL. */
UDM_API int32_t udm_model_num_classes(const udm_model* model);

/* Segments one PGM image and writes the predicted mask as a PGM whose gray
 * levels encode class ids scaled across 0..255. */
UDM_API int udm_model_predict_pgm(const udm_model* model, const char* image_pgm_path,
                                  const char* mask_pgm_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* UDM_H */
