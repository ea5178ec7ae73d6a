/* C interface to the reconstruction toolkit. All entry points are
 * exception-free: failures come back as status codes, with a human-readable
 * message (and, for config schema violations, the first offending key)
 * retrievable from the context. */

#ifndef RECON_RECON_H_
#define RECON_RECON_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  RECON_OK = 0,
  RECON_ERR_CONFIG = 1,    /* schema violation or invalid parameter */
  RECON_ERR_DIMENSION = 2, /* array shape mismatch */
  RECON_ERR_STATE = 3,     /* operation invalid in the current state */
  RECON_ERR_NOT_FOUND = 4, /* missing file, split, or sample */
  RECON_ERR_IO = 5,
  RECON_ERR_NUMERIC = 6,   /* non-finite or unstable numerics */
  RECON_ERR_UNKNOWN = 7
} recon_status;

typedef struct recon_ctx recon_ctx;

recon_ctx* recon_ctx_create(void);
void recon_ctx_destroy(recon_ctx* ctx);

/* Last failure detail; both live until the next call on the context. The key
 * is empty unless the failure was a config schema violation. */
const char* recon_last_error(const recon_ctx* ctx);
const char* recon_last_error_key(const recon_ctx* ctx);

/* Loads (and fully validates) a run config. Text form takes the JSON document
 * directly. */
recon_status recon_load_config_file(recon_ctx* ctx, const char* path);
recon_status recon_load_config_text(recon_ctx* ctx, const char* json_text);

/* Hash of the resolved config; 0 until a config is loaded. */
uint64_t recon_config_hash(const recon_ctx* ctx);

/* Builds the synthetic dataset at the config's dataset path. */
recon_status recon_gen_data(recon_ctx* ctx);

typedef void (*recon_step_callback)(int64_t step, double gen_total,
                                    double beta, void* user);

/* Runs training per the loaded config. max_steps > 0 caps the run below the
 * config's epoch budget; resume_from (nullable) restores a checkpoint first.
 * n_workers >= 1 controls data-loading parallelism. The callback (nullable)
 * fires once per generator step. Writes the frozen resolved config, loss and
 * metric CSVs, and checkpoints to the configured paths. */
recon_status recon_train(recon_ctx* ctx, int64_t max_steps,
                         const char* resume_from, int n_workers,
                         recon_step_callback cb, void* user);

/* Evaluates a checkpoint's generator on one split: mean NMSE plus FID against
 * the fully sampled references. Writes <report_dir>/evaluate_<split>.csv and a
 * comparison grid PNG for the split's first sample, plus the frozen config.
 * out_nmse / out_fid are nullable. */
recon_status recon_evaluate(recon_ctx* ctx, const char* checkpoint,
                            const char* split, double* out_nmse,
                            double* out_fid);

/* Reconstructs one stored sample through a checkpoint's generator. Writes the
 * complex image to out_h5 ("image", H x W x 2 float32) and, when out_png is
 * non-null, a comparison grid. */
recon_status recon_reconstruct(recon_ctx* ctx, const char* checkpoint,
                               const char* split, int index,
                               const char* out_h5, const char* out_png);

/* Samples an undersampling mask and writes it to out_h5 ("mask", u8 column
 * flags plus parameter attributes). out_lines (nullable) receives the
 * acquired-line count. */
recon_status recon_make_mask(recon_ctx* ctx, int width, double accel,
                             int n_center, double density_exponent,
                             uint64_t seed, const char* out_h5,
                             int* out_lines);

#ifdef __cplusplus
}
#endif

#endif /* RECON_RECON_H_ */
