#include "recon/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "recon/errors.hpp"

namespace recon::cfg {

namespace {

using nlohmann::json;

// Pulls typed values out of one section object, tracking which keys were
// consumed so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string prefix)
      : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) {
      throw ConfigError("'" + prefix_ + "' must be an object", prefix_);
    }
  }

  std::string path(const char* key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  void take_int(const char* key, int& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (!v->is_number_integer()) {
      throw ConfigError("'" + path(key) + "' must be an integer", path(key));
    }
    out = v->get<int>();
  }

  void take_u64(const char* key, std::uint64_t& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    const bool ok = v->is_number_unsigned() ||
                    (v->is_number_integer() && v->get<std::int64_t>() >= 0);
    if (!ok) {
      throw ConfigError("'" + path(key) + "' must be a nonnegative integer",
                        path(key));
    }
    out = v->get<std::uint64_t>();
  }

  void take_double(const char* key, double& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (!v->is_number()) {
      throw ConfigError("'" + path(key) + "' must be a number", path(key));
    }
    out = v->get<double>();
  }

  void take_bool(const char* key, bool& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (!v->is_boolean()) {
      throw ConfigError("'" + path(key) + "' must be a boolean", path(key));
    }
    out = v->get<bool>();
  }

  void take_string(const char* key, std::string& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (!v->is_string()) {
      throw ConfigError("'" + path(key) + "' must be a string", path(key));
    }
    out = v->get<std::string>();
  }

  const json* take_object(const char* key) {
    const json* v = find(key);
    return v;
  }

  // Called after every expected key was consumed. nlohmann objects iterate in
  // sorted key order, so the first leftover is deterministic.
  void reject_unknown() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (used_.count(it.key()) == 0) {
        throw ConfigError("unknown config key '" + path(it.key().c_str()) + "'",
                          path(it.key().c_str()));
      }
    }
  }

 private:
  const json* find(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  const json& obj_;
  std::string prefix_;
  std::set<std::string> used_;
};

void check_positive_int(int v, const std::string& key) {
  if (v < 1) {
    throw ConfigError("'" + key + "' must be >= 1", key);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig out;
  Section root(doc, "");

  std::string mode = train::mode_name(out.mode);
  root.take_string("mode", mode);
  try {
    out.mode = train::mode_from_name(mode);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), "mode");
  }

  if (const json* d = root.take_object("dataset")) {
    Section s(*d, "dataset");
    s.take_int("n_train", out.dataset.n_train);
    s.take_int("n_val", out.dataset.n_val);
    s.take_int("n_test", out.dataset.n_test);
    s.take_int("height", out.dataset.h);
    s.take_int("width", out.dataset.w);
    s.take_int("n_coils", out.dataset.n_coils);
    s.take_double("accel", out.dataset.accel);
    s.take_int("n_center", out.dataset.n_center);
    s.take_double("density_exponent", out.dataset.density_exponent);
    s.take_u64("seed", out.dataset.seed);
    s.reject_unknown();
    check_positive_int(out.dataset.n_train, "dataset.n_train");
    if (out.dataset.n_val < 0 || out.dataset.n_test < 0) {
      throw ConfigError("'dataset.n_val' and 'dataset.n_test' must be >= 0",
                        out.dataset.n_val < 0 ? "dataset.n_val"
                                              : "dataset.n_test");
    }
    if (out.dataset.h < 8 || out.dataset.h % 2 != 0 || out.dataset.w < 8 ||
        out.dataset.w % 2 != 0) {
      throw ConfigError("image sides must be even and >= 8",
                        out.dataset.h < 8 || out.dataset.h % 2 != 0
                            ? "dataset.height"
                            : "dataset.width");
    }
    check_positive_int(out.dataset.n_coils, "dataset.n_coils");
    if (!(out.dataset.accel >= 1.0)) {
      throw ConfigError("'dataset.accel' must be >= 1", "dataset.accel");
    }
    if (out.dataset.n_center < 0 || out.dataset.n_center > out.dataset.w) {
      throw ConfigError("'dataset.n_center' must lie in [0, width]",
                        "dataset.n_center");
    }
    if (!(out.dataset.density_exponent >= 0.0)) {
      throw ConfigError("'dataset.density_exponent' must be >= 0",
                        "dataset.density_exponent");
    }
  }

  if (const json* g = root.take_object("generator")) {
    Section s(*g, "generator");
    s.take_int("n_iterations", out.generator.n_iterations);
    s.take_int("growth", out.generator.growth);
    s.take_int("kernels_per_conv", out.generator.kernels_per_conv);
    s.take_double("leaky_slope", out.generator.leaky_slope);
    s.reject_unknown();
    try {
      out.generator.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what(), "generator");
    }
  }

  if (const json* c = root.take_object("critic")) {
    Section s(*c, "critic");
    s.take_int("base_channels", out.critic.base_channels);
    s.take_int("kernel_size", out.critic.kernel_size);
    s.take_double("leaky_slope", out.critic.leaky_slope);
    s.take_bool("first_layer_batchnorm", out.critic.first_layer_batchnorm);
    s.reject_unknown();
    try {
      out.critic.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what(), "critic");
    }
  }

  if (const json* t = root.take_object("training")) {
    Section s(*t, "training");
    s.take_double("learning_rate", out.training.learning_rate);
    s.take_double("beta_init", out.training.beta_init);
    s.take_double("clip", out.training.clip);
    s.take_double("lambda_ma", out.training.lambda_ma);
    s.take_double("ratio", out.training.ratio);
    s.take_double("rate", out.training.rate);
    s.take_int("n_discriminator", out.training.n_discriminator);
    s.take_double("adam_beta1", out.training.adam_beta1);
    s.take_double("adam_beta2", out.training.adam_beta2);
    s.take_int("batch_size", out.training.batch_size);
    s.take_int("max_epochs", out.training.max_epochs);
    s.take_u64("seed", out.training.seed);
    s.take_double("fixed_beta", out.fixed_beta);
    s.take_int("eval_every", out.eval_every);
    s.take_int("checkpoint_every", out.checkpoint_every);
    s.take_bool("augment", out.augment);
    s.reject_unknown();
    out.training.validate();  // throws ConfigError with training.* keys
    if (!(out.fixed_beta > 0.0)) {
      throw ConfigError("'training.fixed_beta' must be positive",
                        "training.fixed_beta");
    }
    if (out.eval_every < 0 || out.checkpoint_every < 0) {
      throw ConfigError(
          "schedule intervals must be >= 0 (0 disables)",
          out.eval_every < 0 ? "training.eval_every"
                             : "training.checkpoint_every");
    }
  }

  if (const json* p = root.take_object("paths")) {
    Section s(*p, "paths");
    s.take_string("dataset", out.paths.dataset);
    s.take_string("checkpoint", out.paths.checkpoint);
    s.take_string("loss_csv", out.paths.loss_csv);
    s.take_string("metrics_csv", out.paths.metrics_csv);
    s.take_string("diagnostics", out.paths.diagnostics);
    s.take_string("report_dir", out.paths.report_dir);
    s.reject_unknown();
    if (out.paths.dataset.empty()) {
      throw ConfigError("'paths.dataset' must not be empty", "paths.dataset");
    }
  }

  if (const json* m = root.take_object("metrics")) {
    Section s(*m, "metrics");
    s.take_string("extractor", out.extractor);
    s.reject_unknown();
    if (out.extractor != "desk" && out.extractor != "pretrained") {
      throw ConfigError("'metrics.extractor' must be 'desk' or 'pretrained'",
                        "metrics.extractor");
    }
  }

  root.reject_unknown();
  return out;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw NotFoundError("config file '" + path + "' cannot be opened");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string canonical_json(const RunConfig& config) {
  json doc;
  doc["mode"] = train::mode_name(config.mode);
  doc["dataset"] = {{"n_train", config.dataset.n_train},
                    {"n_val", config.dataset.n_val},
                    {"n_test", config.dataset.n_test},
                    {"height", config.dataset.h},
                    {"width", config.dataset.w},
                    {"n_coils", config.dataset.n_coils},
                    {"accel", config.dataset.accel},
                    {"n_center", config.dataset.n_center},
                    {"density_exponent", config.dataset.density_exponent},
                    {"seed", config.dataset.seed}};
  doc["generator"] = {{"n_iterations", config.generator.n_iterations},
                      {"growth", config.generator.growth},
                      {"kernels_per_conv", config.generator.kernels_per_conv},
                      {"leaky_slope", config.generator.leaky_slope}};
  doc["critic"] = {
      {"base_channels", config.critic.base_channels},
      {"kernel_size", config.critic.kernel_size},
      {"leaky_slope", config.critic.leaky_slope},
      {"first_layer_batchnorm", config.critic.first_layer_batchnorm}};
  doc["training"] = {{"learning_rate", config.training.learning_rate},
                     {"beta_init", config.training.beta_init},
                     {"clip", config.training.clip},
                     {"lambda_ma", config.training.lambda_ma},
                     {"ratio", config.training.ratio},
                     {"rate", config.training.rate},
                     {"n_discriminator", config.training.n_discriminator},
                     {"adam_beta1", config.training.adam_beta1},
                     {"adam_beta2", config.training.adam_beta2},
                     {"batch_size", config.training.batch_size},
                     {"max_epochs", config.training.max_epochs},
                     {"seed", config.training.seed},
                     {"fixed_beta", config.fixed_beta},
                     {"eval_every", config.eval_every},
                     {"checkpoint_every", config.checkpoint_every},
                     {"augment", config.augment}};
  doc["paths"] = {{"dataset", config.paths.dataset},
                  {"checkpoint", config.paths.checkpoint},
                  {"loss_csv", config.paths.loss_csv},
                  {"metrics_csv", config.paths.metrics_csv},
                  {"diagnostics", config.paths.diagnostics},
                  {"report_dir", config.paths.report_dir}};
  doc["metrics"] = {{"extractor", config.extractor}};
  return doc.dump(2) + "\n";
}

std::uint64_t config_hash(const RunConfig& config) {
  const std::string text = canonical_json(config);
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64-bit
  for (unsigned char byte : text) {
    h ^= byte;
    h *= 1099511628211ull;
  }
  return h;
}

void write_frozen_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write frozen config '" + path + "'");
  }
  out << canonical_json(config);
  if (!out) {
    throw IoError("failed writing frozen config '" + path + "'");
  }
}

train::TrainOptions make_train_options(const RunConfig& config) {
  train::TrainOptions o;
  o.mode = config.mode;
  o.fixed_beta = config.fixed_beta;
  o.eval_every = config.eval_every;
  o.checkpoint_every = config.checkpoint_every;
  o.augment = config.augment;
  o.config_hash = config_hash(config);
  o.loss_csv_path = config.paths.loss_csv;
  o.metrics_csv_path = config.paths.metrics_csv;
  o.checkpoint_path = config.paths.checkpoint;
  o.diagnostics_path = config.paths.diagnostics;
  return o;
}

}  // namespace recon::cfg
