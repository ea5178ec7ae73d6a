#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "recon/errors.hpp"
#include "recon/run_config.hpp"

using namespace recon;

namespace {

std::string expect_key(const std::string& json_text) {
  try {
    cfg::parse_run_config(json_text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  FAIL("expected ConfigError");
  return {};
}

}  // namespace

TEST_CASE("an empty document resolves to the documented defaults") {
  auto c = cfg::parse_run_config("{}");
  CHECK(c.mode == train::TrainMode::kCWganAgb);
  CHECK(c.dataset.n_train == 8);
  CHECK(c.dataset.h == 64);
  CHECK(c.generator.n_iterations == 20);
  CHECK(c.critic.base_channels == 64);
  CHECK(c.training.beta_init == 10.0);
  CHECK(c.training.learning_rate == 5e-4);
  CHECK(c.fixed_beta == 100.0);
  CHECK(c.paths.dataset == "dataset.h5");
  CHECK(c.extractor == "desk");
}

TEST_CASE("explicit values land in the right fields") {
  auto c = cfg::parse_run_config(R"({
    "mode": "cwgan-fixed",
    "dataset": {"n_train": 16, "height": 32, "width": 32, "n_coils": 2,
                 "accel": 2.0, "n_center": 8, "seed": 5},
    "generator": {"n_iterations": 3, "growth": 2, "kernels_per_conv": 12},
    "critic": {"base_channels": 8, "kernel_size": 6},
    "training": {"learning_rate": 1e-3, "batch_size": 2, "max_epochs": 7,
                  "fixed_beta": 1.0, "seed": 11, "augment": true},
    "paths": {"dataset": "d.h5", "loss_csv": "l.csv"},
    "metrics": {"extractor": "desk"}
  })");
  CHECK(c.mode == train::TrainMode::kCWganFixed);
  CHECK(c.dataset.n_train == 16);
  CHECK(c.dataset.seed == 5);
  CHECK(c.generator.kernels_per_conv == 12);
  CHECK(c.critic.kernel_size == 6);
  CHECK(c.training.learning_rate == 1e-3);
  CHECK(c.training.max_epochs == 7);
  CHECK(c.fixed_beta == 1.0);
  CHECK(c.augment);
  CHECK(c.paths.dataset == "d.h5");
  CHECK(c.paths.loss_csv == "l.csv");
  CHECK(c.paths.checkpoint == "checkpoint.h5");  // untouched default
}

TEST_CASE("unknown keys are rejected with their full path") {
  CHECK(expect_key(R"({"verbose": true})") == "verbose");
  CHECK(expect_key(R"({"training": {"learnin_rate": 1.0}})") ==
        "training.learnin_rate");
  CHECK(expect_key(R"({"dataset": {"slices": 5}})") == "dataset.slices");
  CHECK(expect_key(R"({"metrics": {"extractor": "desk", "cache": 1}})") ==
        "metrics.cache");
}

TEST_CASE("type and range violations name the offending key") {
  CHECK(expect_key(R"({"mode": "gan"})") == "mode");
  CHECK(expect_key(R"({"mode": 5})") == "mode");
  CHECK(expect_key(R"({"training": {"batch_size": "four"}})") ==
        "training.batch_size");
  CHECK(expect_key(R"({"training": {"learning_rate": -0.1}})") ==
        "training.learning_rate");
  CHECK(expect_key(R"({"training": {"lambda_ma": 1.5}})") ==
        "training.lambda_ma");
  CHECK(expect_key(R"({"training": {"fixed_beta": 0}})") ==
        "training.fixed_beta");
  CHECK(expect_key(R"({"dataset": {"height": 63}})") == "dataset.height");
  CHECK(expect_key(R"({"dataset": {"accel": 0.5}})") == "dataset.accel");
  CHECK(expect_key(R"({"dataset": {"seed": -4}})") == "dataset.seed");
  CHECK(expect_key(R"({"generator": {"growth": -1}})") == "generator");
  CHECK(expect_key(R"({"critic": {"kernel_size": 5}})") == "critic");
  CHECK(expect_key(R"({"metrics": {"extractor": "vgg"}})") ==
        "metrics.extractor");
  CHECK_THROWS_AS(cfg::parse_run_config("not json"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_run_config("[1,2]"), ConfigError);
}

TEST_CASE("hash ignores key order but tracks values") {
  auto a = cfg::parse_run_config(
      R"({"training": {"beta_init": 10.0, "batch_size": 4}, "mode": "wgan"})");
  auto b = cfg::parse_run_config(
      R"({"mode": "wgan", "training": {"batch_size": 4, "beta_init": 10.0}})");
  CHECK(cfg::config_hash(a) == cfg::config_hash(b));
  CHECK(cfg::canonical_json(a) == cfg::canonical_json(b));

  auto c = cfg::parse_run_config(
      R"({"training": {"beta_init": 11.0, "batch_size": 4}, "mode": "wgan"})");
  CHECK(cfg::config_hash(a) != cfg::config_hash(c));
}

TEST_CASE("canonical form is a fixed point of parsing") {
  auto c = cfg::parse_run_config(R"({"training": {"rate": 0.02}})");
  const std::string canon = cfg::canonical_json(c);
  auto reparsed = cfg::parse_run_config(canon);
  CHECK(cfg::canonical_json(reparsed) == canon);
  CHECK(cfg::config_hash(reparsed) == cfg::config_hash(c));
}

TEST_CASE("frozen configs reproduce the hash exactly") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "frozen_cfg.json").string();
  auto c = cfg::parse_run_config(
      R"({"mode": "mse-only", "training": {"seed": 123}})");
  cfg::write_frozen_config(c, path);
  auto loaded = cfg::load_run_config(path);
  CHECK(cfg::config_hash(loaded) == cfg::config_hash(c));
  CHECK(loaded.mode == train::TrainMode::kMseOnly);
  CHECK(loaded.training.seed == 123);
  std::filesystem::remove(path);
}

TEST_CASE("missing config files raise NotFoundError") {
  CHECK_THROWS_AS(cfg::load_run_config("/nonexistent/cfg.json"),
                  NotFoundError);
}

TEST_CASE("train options inherit mode, paths, and the config hash") {
  auto c = cfg::parse_run_config(R"({
    "mode": "cwgan-fixed",
    "training": {"fixed_beta": 2.5, "eval_every": 3, "checkpoint_every": 0,
                  "augment": true},
    "paths": {"loss_csv": "a.csv", "metrics_csv": "b.csv",
               "checkpoint": "c.h5", "diagnostics": "d.txt"}
  })");
  auto o = cfg::make_train_options(c);
  CHECK(o.mode == train::TrainMode::kCWganFixed);
  CHECK(o.fixed_beta == 2.5);
  CHECK(o.eval_every == 3);
  CHECK(o.checkpoint_every == 0);
  CHECK(o.augment);
  CHECK(o.loss_csv_path == "a.csv");
  CHECK(o.metrics_csv_path == "b.csv");
  CHECK(o.checkpoint_path == "c.h5");
  CHECK(o.diagnostics_path == "d.txt");
  CHECK(o.config_hash == cfg::config_hash(c));
}
