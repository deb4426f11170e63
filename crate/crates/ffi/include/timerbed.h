#ifndef TIMERBED_H
#define TIMERBED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_ARGUMENT = 1,
  TB_STATUS_INVALID_UTF8 = 2,
  TB_STATUS_INVALID_ARGUMENT = 3,
  TB_STATUS_NOT_FOUND = 4,
  TB_STATUS_IO = 5,
  TB_STATUS_INVALID_DATA = 6,
  TB_STATUS_NO_ANSWER = 7,
  TB_STATUS_AMBIGUOUS_ANSWER = 8,
  TB_STATUS_RENDER_FAILED = 9,
  TB_STATUS_PROMPT_FAILED = 10,
  TB_STATUS_PANIC = 99,
} TbStatus;

/**
 * Loaded dataset. Opaque to C.
 */
typedef struct TbDataset TbDataset;

/**
 * Byte buffer owned by the library.
 */
typedef struct TbBuffer {
  uint8_t *data;
  size_t len;
} TbBuffer;

typedef struct TbDatasetInfo {
  size_t num_classes;
  size_t num_channels;
  size_t series_length;
  size_t train_count;
  size_t test_count;
} TbDatasetInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *tb_last_error(void);

/**
 * Library version, static storage.
 */
const char *tb_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void tb_string_free(char *s);

/**
 * # Safety
 * `buf` must be a buffer returned by this library, not yet freed.
 */
void tb_buffer_free(struct TbBuffer buf);

/**
 * Built-in task specifications as a JSON object keyed by task name.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TbStatus tb_task_registry_json(char **out);

/**
 * Loads and validates a dataset directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer. The handle
 * is released with [`tb_dataset_free`].
 */
enum TbStatus tb_dataset_load(const char *dir, struct TbDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from [`tb_dataset_load`], not yet freed.
 */
void tb_dataset_free(struct TbDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle and `info` a valid pointer.
 */
enum TbStatus tb_dataset_info(const struct TbDataset *ds, struct TbDatasetInfo *info);

/**
 * The line `timerbed validate` prints for this dataset.
 *
 * # Safety
 * `ds` must be a live handle and `out` a valid pointer.
 */
enum TbStatus tb_dataset_summary(const struct TbDataset *ds, char **out);

/**
 * Hex SHA-256 over a dataset directory's manifest and split files.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TbStatus tb_dataset_digest(const char *dir, char **out);

/**
 * Assigns ids to train (1) or test (0) with the split used for datasets that
 * ship without a test file.
 *
 * # Safety
 * `ids` must point to `n` NUL-terminated strings and `is_train` to `n` bytes.
 */
enum TbStatus tb_split_ids(const char *const *ids,
                           size_t n,
                           double train_fraction,
                           uint8_t *is_train);

/**
 * Serializes one sample the way numeric prompts embed it.
 *
 * # Safety
 * `ds` must be a live handle, `id` a NUL-terminated string, `out` valid.
 */
enum TbStatus tb_dataset_serialize_numeric(const struct TbDataset *ds,
                                           const char *id,
                                           uint8_t precision,
                                           char **out);

/**
 * Renders one sample to PNG with the task's default settings, optionally
 * overriding the domain (`"time"` or `"frequency"`). `tokens` receives the
 * estimated image token count when non-null.
 *
 * # Safety
 * `ds` must be a live handle, `id` a NUL-terminated string, `mode` null or a
 * NUL-terminated string, `out` valid and `tokens` null or valid.
 */
enum TbStatus tb_dataset_render_png(const struct TbDataset *ds,
                                    const char *id,
                                    const char *mode,
                                    struct TbBuffer *out,
                                    uint32_t *tokens);

/**
 * Forward, unnormalized DFT of `n` real values into `re` and `im`.
 *
 * # Safety
 * `signal`, `re` and `im` must each point to `n` doubles.
 */
enum TbStatus tb_dft(const double *signal, size_t n, double *re, double *im);

/**
 * Estimated tokens for an image of the given size; `auto_detail` selects
 * the tiled rule over the flat low-detail cost.
 */
uint32_t tb_image_tokens(uint32_t width, uint32_t height, bool auto_detail);

/**
 * US dollars for a request at per-million-token prices.
 */
double tb_cost(uint64_t tokens_in,
               uint64_t tokens_out,
               double input_per_million,
               double output_per_million);

/**
 * Relative gain of `new_pct` over `baseline_pct`, in percent.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TbStatus tb_improvement(double new_pct, double baseline_pct, double *out);

/**
 * Accuracy divided by the task's random-guess accuracy.
 *
 * # Safety
 * `task` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TbStatus tb_normalize(double accuracy_pct, const char *task, double *out);

/**
 * Number of supervised baselines the accuracy strictly beats, out of `total`.
 *
 * # Safety
 * `task` must be a NUL-terminated string; `wins` and `total` valid pointers.
 */
enum TbStatus tb_win_count(double accuracy_pct, const char *task, size_t *wins, size_t *total);

/**
 * Extracts the class letter from a model reply.
 *
 * # Safety
 * `task` and `response` must be NUL-terminated strings; `letter` valid.
 */
enum TbStatus tb_parse_answer(const char *task, const char *response, char *letter);

/**
 * Builds a text-only prompt. `strategy` is `"zst"` or `"cot"`; `"plan"`
 * builds the planning prompt and ignores `data`.
 *
 * # Safety
 * `task` and `strategy` must be NUL-terminated strings, `data` too unless the
 * strategy is `"plan"`; `out` must be valid.
 */
enum TbStatus tb_build_prompt(const char *task, const char *strategy, const char *data, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIMERBED_H */
