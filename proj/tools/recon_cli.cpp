// Command-line front end. Talks to the toolkit exclusively through the C API;
// the only work done here is flag parsing, config-override patching, and
// exit-code mapping (0 success, 1 runtime failure, 2 usage, 3 config schema).

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "recon/recon.h"

namespace {

using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;

struct CtxGuard {
  recon_ctx* ctx = nullptr;
  ~CtxGuard() { recon_ctx_destroy(ctx); }
};

int report_status(const recon_ctx* ctx, recon_status status) {
  if (status == RECON_OK) return 0;
  const char* msg = recon_last_error(ctx);
  const char* key = recon_last_error_key(ctx);
  if (status == RECON_ERR_CONFIG) {
    if (key != nullptr && key[0] != '\0') {
      std::cerr << "config error at '" << key << "': " << msg << "\n";
    } else {
      std::cerr << "config error: " << msg << "\n";
    }
    return kExitConfig;
  }
  std::cerr << "error: " << msg << "\n";
  return kExitRuntime;
}

int env_workers() {
  const char* s = std::getenv("RECON_NUM_WORKERS");
  if (s == nullptr || *s == '\0') return 1;
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || v < 1 || v > 4096) {
    std::cerr << "warning: ignoring invalid RECON_NUM_WORKERS='" << s
              << "'; using 1 worker\n";
    return 1;
  }
  return static_cast<int>(v);
}

// Sets doc[a][b]... = value for a dotted path, creating objects on the way.
void set_dotted(json& doc, const std::string& dotted, json value) {
  json* cur = &doc;
  std::size_t start = 0;
  for (;;) {
    std::size_t dot = dotted.find('.', start);
    if (dot == std::string::npos) {
      (*cur)[dotted.substr(start)] = std::move(value);
      return;
    }
    cur = &(*cur)[dotted.substr(start, dot - start)];
    start = dot + 1;
  }
}

// Reads the config file (or synthesizes an all-defaults document), applies the
// flag overrides, and loads the result into the context. Returns 0 or an exit
// code.
int load_patched_config(recon_ctx* ctx, const std::string& config_path,
                        const std::vector<std::pair<std::string, json>>& overrides,
                        json* resolved_out) {
  std::string text = "{}";
  if (!config_path.empty()) {
    std::ifstream f(config_path, std::ios::binary);
    if (!f) {
      std::cerr << "error: cannot read config file '" << config_path << "'\n";
      return kExitRuntime;
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    text = ss.str();
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::cerr << "config error: '" << config_path
              << "' is not valid JSON: " << e.what() << "\n";
    return kExitConfig;
  }
  if (!doc.is_object()) {
    std::cerr << "config error: top level of '" << config_path
              << "' must be a JSON object\n";
    return kExitConfig;
  }
  for (const auto& [path, value] : overrides) {
    set_dotted(doc, path, value);
  }
  recon_status st = recon_load_config_text(ctx, doc.dump().c_str());
  if (st != RECON_OK) return report_status(ctx, st);
  if (resolved_out != nullptr) *resolved_out = std::move(doc);
  return 0;
}

std::string path_from(const json& doc, const char* key,
                      const std::string& fallback) {
  auto it = doc.find("paths");
  if (it == doc.end() || !it->is_object()) return fallback;
  auto jt = it->find(key);
  return (jt != it->end() && jt->is_string()) ? jt->get<std::string>()
                                              : fallback;
}

void print_step(int64_t step, double gen_total, double beta, void*) {
  if (step == 1 || step % 100 == 0) {
    std::fprintf(stderr, "step %lld  gen_total=%.6g  beta=%.6g\n",
                 static_cast<long long>(step), gen_total, beta);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Undersampled multi-coil MRI reconstruction toolkit"};
  app.require_subcommand(1);

  // gen-data ----------------------------------------------------------------
  auto* gen = app.add_subcommand(
      "gen-data", "Generate the synthetic phantom dataset from the config");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config,-c", gen_config, "Run config (JSON)");
  gen->add_option("--out", gen_out, "Dataset output path (overrides paths.dataset)");
  auto* gen_seed_opt =
      gen->add_option("--seed", gen_seed, "Dataset seed (overrides dataset.seed)");

  // train -------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a reconstruction model");
  std::string tr_config, tr_mode, tr_resume, tr_dataset, tr_checkpoint;
  std::string tr_loss_csv, tr_metrics_csv, tr_report_dir;
  std::int64_t tr_max_steps = 0;
  std::uint64_t tr_seed = 0;
  double tr_fixed_beta = 0.0;
  train->add_option("--config,-c", tr_config, "Run config (JSON)");
  train->add_option("--max-steps", tr_max_steps,
                    "Stop after this many generator steps (0 = epoch budget)");
  auto* tr_mode_opt = train->add_option(
      "--mode", tr_mode, "cwgan-agb | cwgan-fixed | wgan | mse-only");
  auto* tr_seed_opt =
      train->add_option("--seed", tr_seed, "Training seed (overrides training.seed)");
  auto* tr_beta_opt = train->add_option(
      "--fixed-beta", tr_fixed_beta, "Adversarial weight for cwgan-fixed");
  train->add_option("--resume", tr_resume, "Checkpoint to resume from");
  auto* tr_data_opt =
      train->add_option("--dataset", tr_dataset, "Dataset path override");
  auto* tr_ckpt_opt = train->add_option("--checkpoint", tr_checkpoint,
                                        "Checkpoint output path override");
  auto* tr_loss_opt =
      train->add_option("--loss-csv", tr_loss_csv, "Loss log path override");
  auto* tr_metrics_opt = train->add_option("--metrics-csv", tr_metrics_csv,
                                           "Metric report path override");
  auto* tr_report_opt = train->add_option("--report-dir", tr_report_dir,
                                          "Report directory override");

  // evaluate ----------------------------------------------------------------
  auto* eval = app.add_subcommand(
      "evaluate", "Score a checkpoint on a dataset split (NMSE + FID)");
  std::string ev_config, ev_checkpoint, ev_split = "test", ev_dataset,
              ev_report_dir;
  eval->add_option("--config,-c", ev_config, "Run config (JSON)");
  eval->add_option("--checkpoint", ev_checkpoint, "Checkpoint to evaluate")
      ->required();
  eval->add_option("--split", ev_split, "train | val | test (default test)");
  auto* ev_data_opt =
      eval->add_option("--dataset", ev_dataset, "Dataset path override");
  auto* ev_report_opt = eval->add_option("--report-dir", ev_report_dir,
                                         "Report directory override");

  // reconstruct -------------------------------------------------------------
  auto* rec = app.add_subcommand(
      "reconstruct", "Reconstruct one stored sample through a checkpoint");
  std::string rc_config, rc_checkpoint, rc_split = "test", rc_out, rc_png,
              rc_dataset;
  int rc_index = 0;
  rec->add_option("--config,-c", rc_config, "Run config (JSON)");
  rec->add_option("--checkpoint", rc_checkpoint, "Checkpoint to load")
      ->required();
  rec->add_option("--split", rc_split, "train | val | test (default test)");
  rec->add_option("--index", rc_index, "Sample index within the split");
  rec->add_option("--out", rc_out, "Output image (HDF5)")->required();
  rec->add_option("--png", rc_png, "Optional comparison grid PNG");
  auto* rc_data_opt =
      rec->add_option("--dataset", rc_dataset, "Dataset path override");

  // make-mask ---------------------------------------------------------------
  auto* mask = app.add_subcommand(
      "make-mask", "Sample a variable-density undersampling mask");
  int mk_width = 0, mk_center = 0;
  double mk_accel = 0.0, mk_density = 1.0;
  std::uint64_t mk_seed = 0;
  std::string mk_out;
  mask->add_option("--width", mk_width, "Number of phase-encode columns")
      ->required();
  mask->add_option("--accel", mk_accel, "Acceleration factor R")->required();
  mask->add_option("--n-center", mk_center, "Fully sampled central columns")
      ->required();
  mask->add_option("--density-exponent", mk_density,
                   "Variable-density decay exponent (default 1)");
  mask->add_option("--seed", mk_seed, "Mask RNG seed");
  mask->add_option("--out", mk_out, "Output mask file (HDF5)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return kExitUsage;
  }

  CtxGuard guard{recon_ctx_create()};
  recon_ctx* ctx = guard.ctx;
  if (ctx == nullptr) {
    std::cerr << "error: failed to allocate context\n";
    return kExitRuntime;
  }
  const int n_workers = env_workers();

  if (app.got_subcommand(gen)) {
    std::vector<std::pair<std::string, json>> overrides;
    if (!gen_out.empty()) overrides.emplace_back("paths.dataset", gen_out);
    if (gen_seed_opt->count() > 0) overrides.emplace_back("dataset.seed", gen_seed);
    json doc;
    if (int rc = load_patched_config(ctx, gen_config, overrides, &doc)) return rc;
    if (int rc = report_status(ctx, recon_gen_data(ctx))) return rc;
    std::cout << "dataset written to "
              << path_from(doc, "dataset", "dataset.h5") << "\n";
    return 0;
  }

  if (app.got_subcommand(train)) {
    std::vector<std::pair<std::string, json>> overrides;
    if (tr_mode_opt->count() > 0) overrides.emplace_back("mode", tr_mode);
    if (tr_seed_opt->count() > 0) overrides.emplace_back("training.seed", tr_seed);
    if (tr_beta_opt->count() > 0)
      overrides.emplace_back("training.fixed_beta", tr_fixed_beta);
    if (tr_data_opt->count() > 0) overrides.emplace_back("paths.dataset", tr_dataset);
    if (tr_ckpt_opt->count() > 0)
      overrides.emplace_back("paths.checkpoint", tr_checkpoint);
    if (tr_loss_opt->count() > 0)
      overrides.emplace_back("paths.loss_csv", tr_loss_csv);
    if (tr_metrics_opt->count() > 0)
      overrides.emplace_back("paths.metrics_csv", tr_metrics_csv);
    if (tr_report_opt->count() > 0)
      overrides.emplace_back("paths.report_dir", tr_report_dir);
    json doc;
    if (int rc = load_patched_config(ctx, tr_config, overrides, &doc)) return rc;
    recon_status st = recon_train(ctx, tr_max_steps,
                                  tr_resume.empty() ? nullptr : tr_resume.c_str(),
                                  n_workers, print_step, nullptr);
    if (int rc = report_status(ctx, st)) return rc;
    std::cout << "training complete; checkpoint at "
              << path_from(doc, "checkpoint", "checkpoint.h5") << "\n";
    return 0;
  }

  if (app.got_subcommand(eval)) {
    std::vector<std::pair<std::string, json>> overrides;
    if (ev_data_opt->count() > 0) overrides.emplace_back("paths.dataset", ev_dataset);
    if (ev_report_opt->count() > 0)
      overrides.emplace_back("paths.report_dir", ev_report_dir);
    json doc;
    if (int rc = load_patched_config(ctx, ev_config, overrides, &doc)) return rc;
    double nmse = 0.0, fid = 0.0;
    recon_status st =
        recon_evaluate(ctx, ev_checkpoint.c_str(), ev_split.c_str(), &nmse, &fid);
    if (int rc = report_status(ctx, st)) return rc;
    std::printf("split=%s nmse_mean=%.17g fid=%.17g\n", ev_split.c_str(), nmse,
                fid);
    std::cout << "report written under "
              << path_from(doc, "report_dir", "reports") << "\n";
    return 0;
  }

  if (app.got_subcommand(rec)) {
    std::vector<std::pair<std::string, json>> overrides;
    if (rc_data_opt->count() > 0) overrides.emplace_back("paths.dataset", rc_dataset);
    if (int rc = load_patched_config(ctx, rc_config, overrides, nullptr)) return rc;
    recon_status st = recon_reconstruct(ctx, rc_checkpoint.c_str(),
                                        rc_split.c_str(), rc_index,
                                        rc_out.c_str(),
                                        rc_png.empty() ? nullptr : rc_png.c_str());
    if (int rc = report_status(ctx, st)) return rc;
    std::cout << "reconstruction written to " << rc_out << "\n";
    return 0;
  }

  if (app.got_subcommand(mask)) {
    int lines = 0;
    recon_status st = recon_make_mask(ctx, mk_width, mk_accel, mk_center,
                                      mk_density, mk_seed, mk_out.c_str(),
                                      &lines);
    if (int rc = report_status(ctx, st)) return rc;
    std::cout << "mask written to " << mk_out << " (" << lines
              << " of " << mk_width << " lines acquired)\n";
    return 0;
  }

  std::cerr << app.help() << "\n";
  return kExitUsage;
}
