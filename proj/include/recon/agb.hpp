#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "recon/batches.hpp"
#include "recon/critic.hpp"
#include "recon/dataset.hpp"
#include "recon/dci.hpp"
#include "recon/metrics.hpp"
#include "recon/nn/adam.hpp"

namespace recon::train {

// cwgan-agb: conditional critic, adaptive beta.
// cwgan-fixed: conditional critic, beta frozen at TrainOptions::fixed_beta.
// wgan: unconditional critic (scores the candidate alone), adaptive beta.
// mse-only: no critic; supervised MSE descent.
enum class TrainMode { kCWganAgb, kCWganFixed, kWgan, kMseOnly };
std::string mode_name(TrainMode mode);
TrainMode mode_from_name(const std::string& name);

struct AGBConfig {
  double learning_rate = 5e-4;
  double beta_init = 10.0;
  double clip = 0.01;
  double lambda_ma = 0.99;  // moving-average decay for g_ma / p_ma
  double ratio = 10.0;      // trigger threshold: g_ma > ratio * p_ma
  double rate = 0.01;       // multiplicative beta step on trigger
  int n_discriminator = 1;  // critic updates per generator update
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int batch_size = 4;
  int max_epochs = 1;
  std::uint64_t seed = 0;
  void validate() const;
};

struct AGBState {
  double beta = 0.0;
  double g_ma = 0.0;  // moving SD of the beta-scaled adversarial image gradient
  double p_ma = 0.0;  // moving SD of the MSE image gradient
  std::int64_t step = 0;
};

// One record per generator step.
struct LossRow {
  std::int64_t step = 0;
  double wgan_loss = 0.0;
  double mse_loss = 0.0;
  double gen_total = 0.0;
  double critic_loss = 0.0;
  double beta = 0.0;
  double g_ma = 0.0;
  double p_ma = 0.0;
  double wall_ms = 0.0;
};
std::string loss_csv_header();
std::string to_csv(const LossRow& row);  // %.17g doubles, no trailing newline

// Mean over all pixels of |a - ref|^2 (real and imaginary parts summed).
double mse_loss(const mri::ComplexImage& a, const mri::ComplexImage& ref);

// Population standard deviation over all elements.
double sd(const std::vector<double>& values);

struct WganLosses {
  double critic_objective;  // (1/(m*beta)) (sum real - sum fake), ascended
  double gen_term;          // -(1/(m*beta)) sum fake, descended
};
WganLosses wgan_losses(const std::vector<double>& scores_real,
                       const std::vector<double>& scores_fake, double beta);

// The balance rule: if g_ma > ratio * (p_ma + 1e-12), multiply beta by
// (1 + rate) and decay g_ma by (1 - rate). At most one step per call.
// Returns whether it fired.
bool update_balance(AGBState& state, const AGBConfig& cfg);

struct EvalResult {
  double nmse_mean = 0.0;
  double fid = 0.0;  // NaN when no extractor was given or n < 2
  int n = 0;
};
EvalResult evaluate_split(const data::DatasetReader& reader,
                          const std::string& split,
                          const gen::DCIParams& params,
                          const gen::DCIConfig& cfg,
                          const metrics::FeatureExtractor* extractor,
                          int max_samples = 0);

struct TrainOptions {
  TrainMode mode = TrainMode::kCWganAgb;
  double fixed_beta = 100.0;   // beta used by cwgan-fixed
  std::int64_t max_steps = 0;  // 0: bounded by max_epochs only
  int eval_every = 1;          // epochs between validation passes; 0 disables
  int checkpoint_every = 1;    // epochs between checkpoints; 0: final only
  bool augment = false;
  int n_workers = 1;
  std::uint64_t config_hash = 0;
  std::string loss_csv_path;     // empty: no loss log file
  std::string metrics_csv_path;  // empty: no metric report file
  std::string checkpoint_path;   // empty: no checkpoints
  std::string diagnostics_path;  // empty: no dump file on non-finite aborts
  std::string resume_from;       // checkpoint to restore before training
  std::function<void(const LossRow&)> on_step;
  std::function<void(int epoch, const EvalResult&)> on_eval;
};

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  std::int64_t completed_epochs = 0;
  std::int64_t global_step = 0;
  bool at_epoch_boundary = true;
  std::string mode;
  AGBState agb;
};

// Single-archive checkpoint: every named parameter array, optimizer moments,
// balance state, counters, and the run's config hash. critic/critic_opt may
// be null (mse-only runs store no critic).
void save_checkpoint(const std::string& path, const gen::DCIParams& gen_params,
                     const gan::CriticParams* critic, const nn::Adam* gen_opt,
                     const nn::Adam* critic_opt, const AGBState& state,
                     std::int64_t completed_epochs, bool at_epoch_boundary,
                     TrainMode mode, std::uint64_t config_hash);

// Restores in place; every present target must match the stored shapes. Null
// targets skip their section (e.g. evaluation only needs generator weights).
CheckpointInfo load_checkpoint(const std::string& path,
                               gen::DCIParams& gen_params,
                               gan::CriticParams* critic, nn::Adam* gen_opt,
                               nn::Adam* critic_opt);
CheckpointInfo read_checkpoint_info(const std::string& path);

class Trainer {
 public:
  Trainer(const data::DatasetReader& reader, gen::DCIConfig gen_cfg,
          gan::CriticConfig critic_cfg, AGBConfig agb, TrainOptions options);
  ~Trainer();

  // Full run: alternating critic/generator steps, per-epoch validation and
  // checkpoints, CSV logs. Deterministic for fixed configs in single-worker
  // mode.
  void run();

  // One critic update (forward generator, ascend critic objective, clip).
  // Returns the objective value before the update. Not available in mse-only
  // mode.
  double critic_step(const std::vector<data::KSpaceSample>& batch);

  // One generator update plus moving-average and balance bookkeeping.
  LossRow generator_step(const std::vector<data::KSpaceSample>& batch);

  const AGBState& state() const { return state_; }
  gen::DCIParams& gen_params() { return gen_params_; }
  gan::CriticParams& critic_params();
  const gen::DCIConfig& generator_config() const { return gen_cfg_; }
  int steps_per_epoch() const { return steps_per_epoch_; }
  bool has_critic() const { return options_.mode != TrainMode::kMseOnly; }

 private:
  struct BatchGraphs;
  BatchGraphs build_batch(const std::vector<data::KSpaceSample>& batch) const;
  void ensure_finite_scalar(double v, const char* what);
  void ensure_finite_grads(const std::vector<nn::Var>& params,
                           const char* what);
  [[noreturn]] void abort_non_finite(const std::string& what);
  void write_eval_row(std::ostream& out, int epoch, const EvalResult& r) const;

  const data::DatasetReader& reader_;
  gen::DCIConfig gen_cfg_;
  gan::CriticConfig critic_cfg_;
  AGBConfig agb_;
  TrainOptions options_;

  gen::DCIParams gen_params_;
  std::unique_ptr<gan::CriticParams> critic_params_;
  std::unique_ptr<nn::Adam> gen_opt_;
  std::unique_ptr<nn::Adam> critic_opt_;
  AGBState state_;
  double last_critic_objective_ = 0.0;
  int steps_per_epoch_ = 0;
};

}  // namespace recon::train
