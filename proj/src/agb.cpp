#include "recon/agb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "recon/errors.hpp"
#include "recon/h5.hpp"
#include "recon/nn/ops.hpp"
#include "recon/rng.hpp"

namespace recon::train {

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_tensor(h5::File& f, const std::string& path, const nn::Tensor& t) {
  std::vector<std::size_t> dims(t.shape.begin(), t.shape.end());
  f.write_f64(path, t.data.data(), dims);
}

void read_tensor_into(const h5::File& f, const std::string& path,
                      nn::Tensor& t) {
  if (!f.exists(path)) {
    throw ConfigError("checkpoint is missing array '" + path + "'");
  }
  std::vector<std::size_t> dims;
  std::vector<double> data = f.read_f64(path, &dims);
  std::vector<int> shape(dims.begin(), dims.end());
  if (shape != t.shape) {
    throw DimensionError("checkpoint array '" + path + "' has shape " +
                         nn::shape_str(shape) + ", expected " +
                         nn::shape_str(t.shape));
  }
  t.data = std::move(data);
}

// Reads the stored Adam state for one parameter group back into the live
// optimizer. Moment order follows named_entries(), which matches the order
// the optimizer was constructed with.
void restore_optimizer(
    const h5::File& f, const std::string& group,
    const std::vector<std::pair<std::string, nn::Var>>& names, nn::Adam& opt) {
  if (!f.exists(group)) {
    throw ConfigError("checkpoint stores no optimizer state under '" + group +
                      "'");
  }
  std::vector<nn::Tensor> m, v;
  m.reserve(names.size());
  v.reserve(names.size());
  for (const auto& [name, var] : names) {
    nn::Tensor tm = nn::Tensor::zeros(var->value.shape);
    nn::Tensor tv = nn::Tensor::zeros(var->value.shape);
    read_tensor_into(f, group + "/m/" + name, tm);
    read_tensor_into(f, group + "/v/" + name, tv);
    m.push_back(std::move(tm));
    v.push_back(std::move(tv));
  }
  opt.restore_state(std::move(m), std::move(v), f.attr_i64(group, "steps"));
}

void save_optimizer(h5::File& f, const std::string& group,
                    const std::vector<std::pair<std::string, nn::Var>>& names,
                    const nn::Adam& opt) {
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  if (m.size() != names.size()) {
    throw InvalidStateError("optimizer tracks " + std::to_string(m.size()) +
                            " tensors but the parameter set names " +
                            std::to_string(names.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    write_tensor(f, group + "/m/" + names[i].first, m[i]);
    write_tensor(f, group + "/v/" + names[i].first, v[i]);
  }
  f.set_attr_i64(group, "steps", opt.steps_taken());
}

constexpr std::uint64_t kCheckpointVersion = 1;

}  // namespace

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kCWganAgb:
      return "cwgan-agb";
    case TrainMode::kCWganFixed:
      return "cwgan-fixed";
    case TrainMode::kWgan:
      return "wgan";
    case TrainMode::kMseOnly:
      return "mse-only";
  }
  throw ConfigError("unknown training mode enum value");
}

TrainMode mode_from_name(const std::string& name) {
  if (name == "cwgan-agb") return TrainMode::kCWganAgb;
  if (name == "cwgan-fixed") return TrainMode::kCWganFixed;
  if (name == "wgan") return TrainMode::kWgan;
  if (name == "mse-only") return TrainMode::kMseOnly;
  throw ConfigError("unknown training mode '" + name +
                        "' (expected cwgan-agb, cwgan-fixed, wgan or mse-only)",
                    "training.mode");
}

void AGBConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0",
                      "training.learning_rate");
  }
  if (!(beta_init > 0.0) || !std::isfinite(beta_init)) {
    throw ConfigError("beta_init must be positive", "training.beta_init");
  }
  if (!(clip > 0.0) || !std::isfinite(clip)) {
    throw ConfigError("clip must be positive", "training.clip");
  }
  if (!(lambda_ma > 0.0 && lambda_ma < 1.0)) {
    throw ConfigError("lambda_ma must lie in (0, 1)", "training.lambda_ma");
  }
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    throw ConfigError("ratio must be positive", "training.ratio");
  }
  if (!(rate > 0.0 && rate < 1.0)) {
    throw ConfigError("rate must lie in (0, 1)", "training.rate");
  }
  if (n_discriminator < 1) {
    throw ConfigError("n_discriminator must be >= 1",
                      "training.n_discriminator");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)", "training.adam_beta1");
  }
  if (batch_size < 1) {
    throw ConfigError("batch_size must be >= 1", "training.batch_size");
  }
  if (max_epochs < 1) {
    throw ConfigError("max_epochs must be >= 1", "training.max_epochs");
  }
}

std::string loss_csv_header() {
  return "step,wgan_loss,mse_loss,gen_total,critic_loss,beta,g_ma,p_ma,"
         "wall_ms";
}

std::string to_csv(const LossRow& row) {
  std::string out = std::to_string(row.step);
  for (double v : {row.wgan_loss, row.mse_loss, row.gen_total, row.critic_loss,
                   row.beta, row.g_ma, row.p_ma, row.wall_ms}) {
    out += ',';
    out += fmt_g17(v);
  }
  return out;
}

double mse_loss(const mri::ComplexImage& a, const mri::ComplexImage& ref) {
  if (a.height() != ref.height() || a.width() != ref.width()) {
    throw DimensionError("mse_loss image shapes disagree");
  }
  double acc = 0.0;
  const mri::Cplx* pa = a.data();
  const mri::Cplx* pr = ref.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += std::norm(pa[i] - pr[i]);
  }
  return acc / static_cast<double>(a.size());
}

double sd(const std::vector<double>& values) {
  if (values.empty()) {
    throw DimensionError("sd of an empty sequence");
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var);
}

WganLosses wgan_losses(const std::vector<double>& scores_real,
                       const std::vector<double>& scores_fake, double beta) {
  if (scores_real.empty() || scores_real.size() != scores_fake.size()) {
    throw DimensionError("wgan_losses needs equal, nonempty score batches");
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidStateError("wgan_losses requires beta > 0");
  }
  double sum_real = 0.0, sum_fake = 0.0;
  for (double v : scores_real) sum_real += v;
  for (double v : scores_fake) sum_fake += v;
  const double inv = 1.0 / (static_cast<double>(scores_real.size()) * beta);
  return {(sum_real - sum_fake) * inv, -sum_fake * inv};
}

bool update_balance(AGBState& state, const AGBConfig& cfg) {
  // The epsilon keeps the comparison meaningful while p_ma is still zero.
  if (!(state.g_ma > cfg.ratio * (state.p_ma + 1e-12))) {
    return false;
  }
  state.beta *= 1.0 + cfg.rate;
  state.g_ma *= 1.0 - cfg.rate;
  return true;
}

EvalResult evaluate_split(const data::DatasetReader& reader,
                          const std::string& split,
                          const gen::DCIParams& params,
                          const gen::DCIConfig& cfg,
                          const metrics::FeatureExtractor* extractor,
                          int max_samples) {
  int n = reader.split_count(split);
  if (max_samples > 0) n = std::min(n, max_samples);
  if (n == 0) {
    throw InvalidStateError("cannot evaluate empty split '" + split + "'");
  }
  std::vector<mri::ComplexImage> recons, refs;
  recons.reserve(n);
  refs.reserve(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    data::KSpaceSample s = reader.load(split, i);
    mri::ComplexImage recon =
        gen::dci_forward(s.undersampled(), s.maps, s.mask, params, cfg);
    acc += metrics::nmse(recon, s.m_f);
    recons.push_back(std::move(recon));
    refs.push_back(std::move(s.m_f));
  }
  EvalResult r;
  r.n = n;
  r.nmse_mean = acc / n;
  r.fid = (extractor != nullptr && n >= 2)
              ? metrics::fid_between_image_sets(recons, refs, *extractor)
              : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void save_checkpoint(const std::string& path, const gen::DCIParams& gen_params,
                     const gan::CriticParams* critic, const nn::Adam* gen_opt,
                     const nn::Adam* critic_opt, const AGBState& state,
                     std::int64_t completed_epochs, bool at_epoch_boundary,
                     TrainMode mode, std::uint64_t config_hash) {
  const std::string tmp = path + ".tmp";
  try {
    h5::File f = h5::File::create(tmp);
    f.set_attr_u64("/", "format_version", kCheckpointVersion);
    f.set_attr_u64("/", "config_hash", config_hash);
    f.ensure_group("state");
    f.set_attr_i64("state", "completed_epochs", completed_epochs);
    f.set_attr_i64("state", "global_step", state.step);
    f.set_attr_u64("state", "at_epoch_boundary", at_epoch_boundary ? 1 : 0);
    f.set_attr_str("state", "mode", mode_name(mode));
    f.set_attr_f64("state", "beta", state.beta);
    f.set_attr_f64("state", "g_ma", state.g_ma);
    f.set_attr_f64("state", "p_ma", state.p_ma);
    f.set_attr_u64("state", "has_critic", critic != nullptr ? 1 : 0);

    for (const auto& [name, var] : gen_params.named_entries()) {
      write_tensor(f, "params/" + name, var->value);
    }
    if (gen_opt != nullptr) {
      f.ensure_group("opt/gen");
      save_optimizer(f, "opt/gen", gen_params.named_entries(), *gen_opt);
    }
    if (critic != nullptr) {
      for (const auto& [name, var] : critic->named_entries()) {
        write_tensor(f, "params/" + name, var->value);
      }
      // named_buffers is non-const (exposes mutable pointers); checkpointing
      // only reads them.
      auto& mutable_critic = const_cast<gan::CriticParams&>(*critic);
      for (const auto& [name, buf] : mutable_critic.named_buffers()) {
        write_tensor(f, "buffers/" + name, *buf);
      }
      if (critic_opt != nullptr) {
        f.ensure_group("opt/critic");
        save_optimizer(f, "opt/critic", critic->named_entries(), *critic_opt);
      }
    }
    f.flush();
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  h5::File f = h5::File::open_readonly(path);
  if (!f.has_attr("/", "format_version") ||
      f.attr_u64("/", "format_version") != kCheckpointVersion) {
    throw ConfigError("'" + path + "' is not a version-" +
                      std::to_string(kCheckpointVersion) + " checkpoint");
  }
  CheckpointInfo info;
  info.config_hash = f.attr_u64("/", "config_hash");
  info.completed_epochs = f.attr_i64("state", "completed_epochs");
  info.global_step = f.attr_i64("state", "global_step");
  info.at_epoch_boundary = f.attr_u64("state", "at_epoch_boundary") != 0;
  info.mode = f.attr_str("state", "mode");
  info.agb.beta = f.attr_f64("state", "beta");
  info.agb.g_ma = f.attr_f64("state", "g_ma");
  info.agb.p_ma = f.attr_f64("state", "p_ma");
  info.agb.step = info.global_step;
  return info;
}

CheckpointInfo load_checkpoint(const std::string& path,
                               gen::DCIParams& gen_params,
                               gan::CriticParams* critic, nn::Adam* gen_opt,
                               nn::Adam* critic_opt) {
  CheckpointInfo info = read_checkpoint_info(path);
  h5::File f = h5::File::open_readonly(path);
  for (const auto& [name, var] : gen_params.named_entries()) {
    read_tensor_into(f, "params/" + name, var->value);
  }
  if (gen_opt != nullptr) {
    restore_optimizer(f, "opt/gen", gen_params.named_entries(), *gen_opt);
  }
  if (critic != nullptr) {
    if (f.attr_u64("state", "has_critic") == 0) {
      throw ConfigError("checkpoint '" + path + "' stores no critic");
    }
    for (const auto& [name, var] : critic->named_entries()) {
      read_tensor_into(f, "params/" + name, var->value);
    }
    for (const auto& [name, buf] : critic->named_buffers()) {
      read_tensor_into(f, "buffers/" + name, *buf);
    }
    if (critic_opt != nullptr) {
      restore_optimizer(f, "opt/critic", critic->named_entries(), *critic_opt);
    }
  }
  return info;
}

struct Trainer::BatchGraphs {
  std::vector<mri::CoilKSpace> k_us;  // owned masked k-space, one per sample
  std::vector<gen::SamplePhysics> physics;
  nn::Tensor m_z;  // [N, 2, H, W]
  nn::Tensor m_f;  // [N, 2, H, W]
};

Trainer::Trainer(const data::DatasetReader& reader, gen::DCIConfig gen_cfg,
                 gan::CriticConfig critic_cfg, AGBConfig agb,
                 TrainOptions options)
    : reader_(reader),
      gen_cfg_(gen_cfg),
      critic_cfg_(critic_cfg),
      agb_(agb),
      options_(std::move(options)) {
  agb_.validate();
  gen_cfg_.validate();
  if (options_.mode == TrainMode::kCWganFixed &&
      (!(options_.fixed_beta > 0.0) || !std::isfinite(options_.fixed_beta))) {
    throw ConfigError("fixed_beta must be positive", "training.fixed_beta");
  }
  if (options_.n_workers < 1) {
    throw ConfigError("n_workers must be >= 1", "training.n_workers");
  }

  gen_params_ =
      gen::init_params(gen_cfg_, derive_seed(agb_.seed, "gen-init"));
  nn::AdamConfig adam{agb_.learning_rate, agb_.adam_beta1, agb_.adam_beta2,
                      1e-8};
  gen_opt_ = std::make_unique<nn::Adam>(gen_params_.trainables(), adam);

  if (has_critic()) {
    // The mode decides what the critic sees: conditional modes score
    // (zero-fill, candidate) pairs, plain wgan scores the candidate alone.
    critic_cfg_.conditional = options_.mode != TrainMode::kWgan;
    critic_cfg_.clip_value = agb_.clip;
    critic_cfg_.validate();
    const auto& man = reader_.manifest();
    critic_params_ = std::make_unique<gan::CriticParams>(gan::init_critic(
        critic_cfg_, man.h, man.w, derive_seed(agb_.seed, "critic-init")));
    critic_opt_ =
        std::make_unique<nn::Adam>(critic_params_->trainables(), adam);
  }

  state_.beta = options_.mode == TrainMode::kCWganFixed ? options_.fixed_beta
                                                        : agb_.beta_init;

  const int batches_per_step =
      has_critic() ? agb_.n_discriminator + 1 : 1;
  const int full_batches =
      reader_.split_count("train") / agb_.batch_size;  // partial tail dropped
  steps_per_epoch_ = full_batches / batches_per_step;
  if (steps_per_epoch_ == 0) {
    throw ConfigError(
        "training split holds " +
            std::to_string(reader_.split_count("train")) +
            " samples; not enough for one optimizer step per epoch at "
            "batch_size " +
            std::to_string(agb_.batch_size) + " with " +
            std::to_string(batches_per_step) + " batches per step",
        "training.batch_size");
  }
}

Trainer::~Trainer() = default;

gan::CriticParams& Trainer::critic_params() {
  if (!critic_params_) {
    throw InvalidStateError("mse-only training has no critic");
  }
  return *critic_params_;
}

Trainer::BatchGraphs Trainer::build_batch(
    const std::vector<data::KSpaceSample>& batch) const {
  if (batch.empty()) {
    throw DimensionError("empty training batch");
  }
  BatchGraphs g;
  g.k_us.reserve(batch.size());
  for (const auto& s : batch) {
    g.k_us.push_back(s.undersampled());
  }
  std::vector<const mri::ComplexImage*> mzs, mfs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    g.physics.push_back({&g.k_us[i], &batch[i].maps, &batch[i].mask});
    mzs.push_back(&batch[i].m_z);
    mfs.push_back(&batch[i].m_f);
  }
  g.m_z = nn::images_to_batch(mzs);
  g.m_f = nn::images_to_batch(mfs);
  return g;
}

void Trainer::ensure_finite_scalar(double v, const char* what) {
  if (!std::isfinite(v)) {
    abort_non_finite(what);
  }
}

void Trainer::ensure_finite_grads(const std::vector<nn::Var>& params,
                                  const char* what) {
  for (const auto& p : params) {
    if (p->grad.size() != 0 && !p->grad.all_finite()) {
      abort_non_finite(what);
    }
  }
}

void Trainer::abort_non_finite(const std::string& what) {
  if (!options_.diagnostics_path.empty()) {
    std::ofstream d(options_.diagnostics_path, std::ios::trunc);
    d << "event: non-finite " << what << "\n"
      << "step: " << state_.step << "\n"
      << "mode: " << mode_name(options_.mode) << "\n"
      << "beta: " << fmt_g17(state_.beta) << "\n"
      << "g_ma: " << fmt_g17(state_.g_ma) << "\n"
      << "p_ma: " << fmt_g17(state_.p_ma) << "\n"
      << "last_critic_objective: " << fmt_g17(last_critic_objective_) << "\n";
  }
  std::string msg =
      "non-finite " + what + " at step " + std::to_string(state_.step);
  if (!options_.diagnostics_path.empty()) {
    msg += "; diagnostics written to " + options_.diagnostics_path;
  }
  throw NumericError(msg);
}

double Trainer::critic_step(const std::vector<data::KSpaceSample>& batch) {
  if (!has_critic()) {
    throw InvalidStateError("critic_step requires an adversarial mode");
  }
  BatchGraphs g = build_batch(batch);
  const double m = static_cast<double>(batch.size());

  nn::Var m_z_in = nn::constant(g.m_z);
  // The generator only supplies data here; freeze its output so no tape is
  // kept alive across the critic update.
  nn::Var fake;
  {
    nn::Var out = gen::dci_forward_graph(m_z_in, g.physics, gen_params_,
                                         gen_cfg_);
    fake = nn::constant(out->value);
  }
  nn::Var cond;
  if (critic_cfg_.conditional) {
    cond = nn::magnitude_pair(m_z_in);
  }
  nn::Var mag_real = nn::magnitude_pair(nn::constant(g.m_f));
  nn::Var mag_fake = nn::magnitude_pair(fake);
  nn::Var s_real = gan::critic_forward(cond, mag_real, *critic_params_,
                                       critic_cfg_, /*training=*/true);
  nn::Var s_fake = gan::critic_forward(cond, mag_fake, *critic_params_,
                                       critic_cfg_, /*training=*/true);
  // Ascend (sum real - sum fake) / (m beta) by descending its negation.
  nn::Var loss = nn::scale(nn::sub(nn::sum(s_fake), nn::sum(s_real)),
                           1.0 / (m * state_.beta));
  const double objective = -loss->value.scalar_value();
  ensure_finite_scalar(objective, "critic objective");

  critic_opt_->zero_grad();
  nn::backward(loss);
  ensure_finite_grads(critic_params_->trainables(), "critic gradient");
  critic_opt_->step();
  gan::clip_weights(*critic_params_, agb_.clip);
  last_critic_objective_ = objective;
  return objective;
}

LossRow Trainer::generator_step(const std::vector<data::KSpaceSample>& batch) {
  BatchGraphs g = build_batch(batch);
  const double m = static_cast<double>(batch.size());
  const double hw = static_cast<double>(g.m_z.dim(2)) * g.m_z.dim(3);

  nn::Var m_z_in = nn::constant(g.m_z);
  nn::Var target = nn::constant(g.m_f);
  nn::Var fake = gen::dci_forward_graph(m_z_in, g.physics, gen_params_,
                                        gen_cfg_);

  LossRow row;
  nn::Var total;
  nn::Var probe_gan, probe_mse;  // identity taps isolating per-term gradients
  if (has_critic()) {
    probe_gan = nn::scale(fake, 1.0);
    probe_mse = nn::scale(fake, 1.0);
    nn::Var cond;
    if (critic_cfg_.conditional) {
      cond = nn::magnitude_pair(m_z_in);
    }
    nn::Var s_fake =
        gan::critic_forward(cond, nn::magnitude_pair(probe_gan),
                            *critic_params_, critic_cfg_, /*training=*/true);
    nn::Var wgan_term =
        nn::scale(nn::sum(s_fake), -1.0 / (m * state_.beta));
    nn::Var mse_term =
        nn::scale(nn::sum_sq_diff(probe_mse, target), 1.0 / (m * hw));
    total = nn::add(wgan_term, mse_term);
    row.wgan_loss = wgan_term->value.scalar_value();
    row.mse_loss = mse_term->value.scalar_value();
  } else {
    total = nn::scale(nn::sum_sq_diff(fake, target), 1.0 / (m * hw));
    row.mse_loss = total->value.scalar_value();
  }
  row.gen_total = total->value.scalar_value();
  ensure_finite_scalar(row.gen_total, "generator loss");

  gen_opt_->zero_grad();
  nn::backward(total);
  ensure_finite_grads(gen_params_.trainables(), "generator gradient");
  gen_opt_->step();

  if (has_critic()) {
    // Batch-mean image gradient of each term: per-sample contributions carry
    // the 1/m factor already, so summing the probe's gradient over the batch
    // axis yields (1/m) sum_i d loss_i / d pixels.
    auto pooled = [](const nn::Var& probe) {
      const nn::Tensor& val = probe->value;
      const int n = val.dim(0);
      const std::size_t plane = val.size() / n;
      std::vector<double> acc(plane, 0.0);
      if (probe->grad.size() == val.size()) {
        for (int i = 0; i < n; ++i) {
          const double* src = probe->grad.data.data() + i * plane;
          for (std::size_t e = 0; e < plane; ++e) acc[e] += src[e];
        }
      }
      return acc;
    };
    const double g_sd = sd(pooled(probe_gan));
    const double p_sd = sd(pooled(probe_mse));
    state_.g_ma = agb_.lambda_ma * state_.g_ma + (1.0 - agb_.lambda_ma) * g_sd;
    state_.p_ma = agb_.lambda_ma * state_.p_ma + (1.0 - agb_.lambda_ma) * p_sd;
    if (options_.mode == TrainMode::kCWganAgb ||
        options_.mode == TrainMode::kWgan) {
      update_balance(state_, agb_);
    }
  }

  row.step = ++state_.step;
  row.critic_loss = last_critic_objective_;
  row.beta = state_.beta;
  row.g_ma = state_.g_ma;
  row.p_ma = state_.p_ma;
  return row;
}

void Trainer::write_eval_row(std::ostream& out, int epoch,
                             const EvalResult& r) const {
  out << epoch << ",val," << fmt_g17(r.nmse_mean) << ',' << fmt_g17(r.fid)
      << '\n';
  out.flush();
}

void Trainer::run() {
  data::BatchConfig bc;
  bc.split = "train";
  bc.batch_size = agb_.batch_size;
  bc.shuffle_seed = derive_seed(agb_.seed, "data");
  bc.augment = options_.augment;
  bc.n_workers = options_.n_workers;
  data::BatchStream stream(reader_, bc);

  std::int64_t start_epoch = 0;
  if (!options_.resume_from.empty()) {
    CheckpointInfo info =
        load_checkpoint(options_.resume_from, gen_params_,
                        critic_params_.get(), gen_opt_.get(),
                        critic_opt_.get());
    if (info.config_hash != options_.config_hash) {
      throw ConfigError(
          "refusing to resume: checkpoint config hash " +
          std::to_string(info.config_hash) + " does not match this run's " +
          std::to_string(options_.config_hash));
    }
    if (info.mode != mode_name(options_.mode)) {
      throw ConfigError("refusing to resume: checkpoint was trained in mode " +
                        info.mode + ", this run uses " +
                        mode_name(options_.mode));
    }
    if (!info.at_epoch_boundary) {
      throw ConfigError(
          "refusing to resume: checkpoint was written mid-epoch and cannot "
          "seed a deterministic continuation");
    }
    state_ = info.agb;
    start_epoch = info.completed_epochs;
  }

  std::ofstream loss_out;
  if (!options_.loss_csv_path.empty()) {
    loss_out.open(options_.loss_csv_path, std::ios::trunc);
    if (!loss_out) {
      throw IoError("cannot open loss log '" + options_.loss_csv_path + "'");
    }
    loss_out << loss_csv_header() << '\n';
    loss_out.flush();
  }
  std::ofstream metrics_out;
  if (!options_.metrics_csv_path.empty()) {
    metrics_out.open(options_.metrics_csv_path, std::ios::trunc);
    if (!metrics_out) {
      throw IoError("cannot open metrics log '" + options_.metrics_csv_path +
                    "'");
    }
    metrics_out << "epoch,split,nmse_mean,fid" << '\n';
    metrics_out.flush();
  }
  std::unique_ptr<metrics::FeatureExtractor> extractor;
  if (options_.eval_every > 0 && reader_.split_count("val") >= 2) {
    extractor = metrics::make_extractor("desk");
  }

  std::vector<data::KSpaceSample> batch;
  auto take = [&](std::vector<data::KSpaceSample>& out) {
    if (!stream.next(out)) {
      throw InvalidStateError("batch stream exhausted mid-epoch");
    }
  };

  std::int64_t done_epochs = start_epoch;
  std::int64_t last_saved_epoch = -1;
  bool mid_epoch_stop = false;
  for (std::int64_t epoch = start_epoch;
       epoch < agb_.max_epochs && !mid_epoch_stop; ++epoch) {
    if (options_.max_steps > 0 && state_.step >= options_.max_steps) {
      break;
    }
    stream.start_epoch(static_cast<std::uint64_t>(epoch));
    for (int s = 0; s < steps_per_epoch_; ++s) {
      if (options_.max_steps > 0 && state_.step >= options_.max_steps) {
        mid_epoch_stop = s > 0;
        break;
      }
      auto t0 = std::chrono::steady_clock::now();
      if (has_critic()) {
        for (int t = 0; t < agb_.n_discriminator; ++t) {
          take(batch);
          critic_step(batch);
        }
      }
      take(batch);
      LossRow row = generator_step(batch);
      row.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      if (loss_out.is_open()) {
        loss_out << to_csv(row) << '\n';
        loss_out.flush();
      }
      if (options_.on_step) {
        options_.on_step(row);
      }
      if (s + 1 == steps_per_epoch_) {
        done_epochs = epoch + 1;
      }
    }
    if (done_epochs != epoch + 1) {
      break;  // step budget ran out inside this epoch
    }
    if (extractor && options_.eval_every > 0 &&
        done_epochs % options_.eval_every == 0) {
      EvalResult r = evaluate_split(reader_, "val", gen_params_, gen_cfg_,
                                    extractor.get());
      if (metrics_out.is_open()) {
        write_eval_row(metrics_out, static_cast<int>(done_epochs), r);
      }
      if (options_.on_eval) {
        options_.on_eval(static_cast<int>(done_epochs), r);
      }
    }
    if (!options_.checkpoint_path.empty() && options_.checkpoint_every > 0 &&
        done_epochs % options_.checkpoint_every == 0) {
      save_checkpoint(options_.checkpoint_path, gen_params_,
                      critic_params_.get(), gen_opt_.get(), critic_opt_.get(),
                      state_, done_epochs, /*at_epoch_boundary=*/true,
                      options_.mode, options_.config_hash);
      last_saved_epoch = done_epochs;
    }
  }

  if (!options_.checkpoint_path.empty() &&
      (last_saved_epoch != done_epochs || mid_epoch_stop)) {
    save_checkpoint(options_.checkpoint_path, gen_params_,
                    critic_params_.get(), gen_opt_.get(), critic_opt_.get(),
                    state_, done_epochs,
                    /*at_epoch_boundary=*/!mid_epoch_stop, options_.mode,
                    options_.config_hash);
  }
}

}  // namespace recon::train
