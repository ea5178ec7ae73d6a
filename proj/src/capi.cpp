#include "recon/recon.h"

#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "recon/agb.hpp"
#include "recon/dataset.hpp"
#include "recon/dci.hpp"
#include "recon/errors.hpp"
#include "recon/h5.hpp"
#include "recon/metrics.hpp"
#include "recon/mri_ops.hpp"
#include "recon/png_io.hpp"
#include "recon/rng.hpp"
#include "recon/run_config.hpp"

namespace fs = std::filesystem;

struct recon_ctx {
  recon::cfg::RunConfig config;
  bool has_config = false;
  std::uint64_t hash = 0;
  std::string last_error;
  std::string last_error_key;
};

namespace {

// Runs the body under the exception-to-status translation every entry point
// shares. The context's error fields always describe the most recent call.
template <typename Fn>
recon_status guarded(recon_ctx* ctx, Fn&& body) {
  if (ctx == nullptr) return RECON_ERR_STATE;
  ctx->last_error.clear();
  ctx->last_error_key.clear();
  try {
    body();
    return RECON_OK;
  } catch (const recon::ConfigError& e) {
    ctx->last_error = e.what();
    ctx->last_error_key = e.key();
    return RECON_ERR_CONFIG;
  } catch (const recon::DimensionError& e) {
    ctx->last_error = e.what();
    return RECON_ERR_DIMENSION;
  } catch (const recon::InvalidStateError& e) {
    ctx->last_error = e.what();
    return RECON_ERR_STATE;
  } catch (const recon::NotFoundError& e) {
    ctx->last_error = e.what();
    return RECON_ERR_NOT_FOUND;
  } catch (const recon::IoError& e) {
    ctx->last_error = e.what();
    return RECON_ERR_IO;
  } catch (const recon::NumericError& e) {
    ctx->last_error = e.what();
    return RECON_ERR_NUMERIC;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return RECON_ERR_UNKNOWN;
  } catch (...) {
    ctx->last_error = "unknown failure";
    return RECON_ERR_UNKNOWN;
  }
}

const recon::cfg::RunConfig& require_config(const recon_ctx& ctx) {
  if (!ctx.has_config) {
    throw recon::InvalidStateError("no config loaded; call recon_load_config_* first");
  }
  return ctx.config;
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr) {
    throw recon::InvalidStateError(std::string(name) + " must not be null");
  }
}

void ensure_parent_dir(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Frozen copy of the resolved config, named after the command that produced
// its sibling outputs.
void freeze_config(const recon::cfg::RunConfig& config, const char* command) {
  fs::create_directories(config.paths.report_dir);
  fs::path out = fs::path(config.paths.report_dir) /
                 (std::string("config_") + command + ".json");
  recon::cfg::write_frozen_config(config, out.string());
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Loads generator weights from a checkpoint, shaped by the context's config.
recon::gen::DCIParams load_generator(const recon::cfg::RunConfig& config,
                                     const std::string& checkpoint) {
  recon::gen::DCIParams params = recon::gen::init_params(
      config.generator,
      recon::derive_seed(config.training.seed, "gen-init"));
  recon::train::load_checkpoint(checkpoint, params, nullptr, nullptr, nullptr);
  return params;
}

void write_image_h5(const std::string& path, const recon::mri::ComplexImage& img,
                    const std::string& split, int index, const std::string& id) {
  ensure_parent_dir(path);
  const int h = img.height(), w = img.width();
  std::vector<float> inter(static_cast<std::size_t>(h) * w * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    inter[2 * i] = static_cast<float>(img.data()[i].real());
    inter[2 * i + 1] = static_cast<float>(img.data()[i].imag());
  }
  recon::h5::File f = recon::h5::File::create(path);
  f.write_f32("image", inter.data(),
              {static_cast<std::size_t>(h), static_cast<std::size_t>(w), 2});
  f.set_attr_str("/", "split", split);
  f.set_attr_i64("/", "index", index);
  f.set_attr_str("/", "sample_id", id);
}

}  // namespace

extern "C" {

recon_ctx* recon_ctx_create(void) { return new (std::nothrow) recon_ctx(); }

void recon_ctx_destroy(recon_ctx* ctx) { delete ctx; }

const char* recon_last_error(const recon_ctx* ctx) {
  return ctx != nullptr ? ctx->last_error.c_str() : "";
}

const char* recon_last_error_key(const recon_ctx* ctx) {
  return ctx != nullptr ? ctx->last_error_key.c_str() : "";
}

recon_status recon_load_config_text(recon_ctx* ctx, const char* json_text) {
  return guarded(ctx, [&] {
    require_arg(json_text, "json_text");
    recon::cfg::RunConfig parsed = recon::cfg::parse_run_config(json_text);
    ctx->config = std::move(parsed);
    ctx->has_config = true;
    ctx->hash = recon::cfg::config_hash(ctx->config);
  });
}

recon_status recon_load_config_file(recon_ctx* ctx, const char* path) {
  return guarded(ctx, [&] {
    require_arg(path, "path");
    recon::cfg::RunConfig parsed = recon::cfg::load_run_config(path);
    ctx->config = std::move(parsed);
    ctx->has_config = true;
    ctx->hash = recon::cfg::config_hash(ctx->config);
  });
}

uint64_t recon_config_hash(const recon_ctx* ctx) {
  return (ctx != nullptr && ctx->has_config) ? ctx->hash : 0;
}

recon_status recon_gen_data(recon_ctx* ctx) {
  return guarded(ctx, [&] {
    const auto& config = require_config(*ctx);
    ensure_parent_dir(config.paths.dataset);
    recon::data::build_dataset(config.dataset, config.paths.dataset);
    freeze_config(config, "gen_data");
  });
}

recon_status recon_train(recon_ctx* ctx, int64_t max_steps,
                         const char* resume_from, int n_workers,
                         recon_step_callback cb, void* user) {
  return guarded(ctx, [&] {
    const auto& config = require_config(*ctx);
    if (n_workers < 1) {
      throw recon::ConfigError("n_workers must be >= 1", "n_workers");
    }
    recon::data::DatasetReader reader(config.paths.dataset);
    recon::train::TrainOptions opts = recon::cfg::make_train_options(config);
    if (max_steps > 0) opts.max_steps = max_steps;
    if (resume_from != nullptr) opts.resume_from = resume_from;
    opts.n_workers = n_workers;
    if (cb != nullptr) {
      opts.on_step = [cb, user](const recon::train::LossRow& row) {
        cb(row.step, row.gen_total, row.beta, user);
      };
    }
    for (const std::string* p :
         {&opts.loss_csv_path, &opts.metrics_csv_path, &opts.checkpoint_path,
          &opts.diagnostics_path}) {
      if (!p->empty()) ensure_parent_dir(*p);
    }
    freeze_config(config, "train");
    recon::train::Trainer trainer(reader, config.generator, config.critic,
                                  config.training, std::move(opts));
    trainer.run();
  });
}

recon_status recon_evaluate(recon_ctx* ctx, const char* checkpoint,
                            const char* split, double* out_nmse,
                            double* out_fid) {
  return guarded(ctx, [&] {
    const auto& config = require_config(*ctx);
    require_arg(checkpoint, "checkpoint");
    require_arg(split, "split");
    recon::data::DatasetReader reader(config.paths.dataset);
    recon::gen::DCIParams params = load_generator(config, checkpoint);
    std::unique_ptr<recon::metrics::FeatureExtractor> extractor =
        recon::metrics::make_extractor(config.extractor);
    recon::train::EvalResult r = recon::train::evaluate_split(
        reader, split, params, config.generator, extractor.get());

    fs::create_directories(config.paths.report_dir);
    fs::path csv = fs::path(config.paths.report_dir) /
                   (std::string("evaluate_") + split + ".csv");
    {
      std::string text = "split,n_samples,nmse_mean,fid\n";
      text += std::string(split) + "," + std::to_string(r.n) + "," +
              fmt_g17(r.nmse_mean) + "," + fmt_g17(r.fid) + "\n";
      FILE* f = std::fopen(csv.string().c_str(), "wb");
      if (f == nullptr) {
        throw recon::IoError("cannot write " + csv.string());
      }
      std::fwrite(text.data(), 1, text.size(), f);
      std::fclose(f);
    }

    recon::data::KSpaceSample first = reader.load(split, 0);
    recon::mri::ComplexImage recon_img = recon::gen::dci_forward(
        first.undersampled(), first.maps, first.mask, params, config.generator);
    fs::path png = fs::path(config.paths.report_dir) /
                   (std::string("evaluate_") + split + ".png");
    recon::pngio::write_comparison_grid(png.string(), first.m_f, recon_img,
                                        first.m_z);
    freeze_config(config, "evaluate");

    if (out_nmse != nullptr) *out_nmse = r.nmse_mean;
    if (out_fid != nullptr) *out_fid = r.fid;
  });
}

recon_status recon_reconstruct(recon_ctx* ctx, const char* checkpoint,
                               const char* split, int index,
                               const char* out_h5, const char* out_png) {
  return guarded(ctx, [&] {
    const auto& config = require_config(*ctx);
    require_arg(checkpoint, "checkpoint");
    require_arg(split, "split");
    require_arg(out_h5, "out_h5");
    recon::data::DatasetReader reader(config.paths.dataset);
    recon::gen::DCIParams params = load_generator(config, checkpoint);
    recon::data::KSpaceSample sample = reader.load(split, index);
    recon::mri::ComplexImage recon_img = recon::gen::dci_forward(
        sample.undersampled(), sample.maps, sample.mask, params,
        config.generator);
    write_image_h5(out_h5, recon_img, split, index, sample.id);
    if (out_png != nullptr) {
      ensure_parent_dir(out_png);
      recon::pngio::write_comparison_grid(out_png, sample.m_f, recon_img,
                                          sample.m_z);
    }
  });
}

recon_status recon_make_mask(recon_ctx* ctx, int width, double accel,
                             int n_center, double density_exponent,
                             uint64_t seed, const char* out_h5,
                             int* out_lines) {
  return guarded(ctx, [&] {
    require_arg(out_h5, "out_h5");
    recon::mri::SamplingMask mask =
        recon::mri::make_mask(width, accel, n_center, density_exponent, seed);
    ensure_parent_dir(out_h5);
    recon::h5::File f = recon::h5::File::create(out_h5);
    f.write_u8("mask", mask.columns.data(), {mask.columns.size()});
    f.set_attr_i64("/", "width", width);
    f.set_attr_f64("/", "accel", accel);
    f.set_attr_i64("/", "n_center", n_center);
    f.set_attr_f64("/", "density_exponent", density_exponent);
    f.set_attr_u64("/", "seed", seed);
    f.set_attr_i64("/", "lines_acquired", mask.lines_acquired());
    if (out_lines != nullptr) *out_lines = mask.lines_acquired();
  });
}

}  // extern "C"
