#pragma once

#include <cstdint>
#include <string>

#include "recon/agb.hpp"
#include "recon/critic.hpp"
#include "recon/dataset.hpp"
#include "recon/dci.hpp"

namespace recon::cfg {

// Fully resolved run description. Every field has a default, so an empty
// document is a valid config; parsing materializes the defaults, and the
// canonical form (sorted keys, shortest-round-trip numbers) is what gets
// hashed and frozen next to run outputs.
struct RunConfig {
  train::TrainMode mode = train::TrainMode::kCWganAgb;
  data::DatasetManifest dataset;
  gen::DCIConfig generator;
  gan::CriticConfig critic;    // conditionality and clip follow mode/training
  train::AGBConfig training;

  double fixed_beta = 100.0;   // cwgan-fixed weight on the WGAN term
  int eval_every = 1;          // epochs; 0 disables validation passes
  int checkpoint_every = 1;    // epochs; 0 keeps only the final checkpoint
  bool augment = false;

  struct Paths {
    std::string dataset = "dataset.h5";
    std::string checkpoint = "checkpoint.h5";
    std::string loss_csv = "loss.csv";
    std::string metrics_csv = "metrics.csv";
    std::string diagnostics = "diagnostics.txt";
    std::string report_dir = "reports";
  } paths;

  std::string extractor = "desk";  // feature extractor for FID
};

// Parses and validates a JSON document. Unknown keys anywhere are rejected;
// the thrown ConfigError names the first offending key as "section.key".
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical resolved form: every field present, object keys sorted. Two
// configs with equal canonical text behave identically.
std::string canonical_json(const RunConfig& config);

// FNV-1a over the canonical text.
std::uint64_t config_hash(const RunConfig& config);

void write_frozen_config(const RunConfig& config, const std::string& path);

// TrainOptions assembled from the config (paths included verbatim).
train::TrainOptions make_train_options(const RunConfig& config);

}  // namespace recon::cfg
