#include "recon/critic.hpp"

#include <algorithm>
#include <cmath>

#include "recon/errors.hpp"
#include "recon/nn/ops.hpp"
#include "recon/rng.hpp"

namespace recon::gan {

namespace {

constexpr double kInitStddev = 0.02;

nn::Tensor normal_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  nn::Tensor t = nn::Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

int downsample_factor() {
  int f = 1;
  for (int j = 0; j < CriticConfig::kNumLayers; ++j) f *= CriticConfig::kStride;
  return f;
}

}  // namespace

void CriticConfig::validate() const {
  if (base_channels < 1)
    throw ConfigError("base_channels must be >= 1", "critic.base_channels");
  if (kernel_size < 2 || kernel_size % 2 != 0)
    throw ConfigError("kernel_size must be even and >= 2 for exact halving",
                      "critic.kernel_size");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw ConfigError("leaky_slope must lie in [0, 1)", "critic.leaky_slope");
  if (clip_value <= 0.0)
    throw ConfigError("clip_value must be positive", "critic.clip_value");
}

std::vector<nn::Var> CriticParams::trainables() const {
  std::vector<nn::Var> out;
  for (const auto& l : layers) {
    out.push_back(l.w);
    out.push_back(l.b);
    if (l.has_bn) {
      out.push_back(l.bn_scale);
      out.push_back(l.bn_shift);
    }
  }
  out.push_back(lin_w);
  out.push_back(lin_b);
  return out;
}

std::vector<std::pair<std::string, nn::Var>> CriticParams::named_entries()
    const {
  std::vector<std::pair<std::string, nn::Var>> out;
  for (std::size_t j = 0; j < layers.size(); ++j) {
    const std::string base = "critic/layer" + std::to_string(j) + "/";
    out.emplace_back(base + "weight", layers[j].w);
    out.emplace_back(base + "bias", layers[j].b);
    if (layers[j].has_bn) {
      out.emplace_back(base + "bn_scale", layers[j].bn_scale);
      out.emplace_back(base + "bn_shift", layers[j].bn_shift);
    }
  }
  out.emplace_back("critic/linear/weight", lin_w);
  out.emplace_back("critic/linear/bias", lin_b);
  return out;
}

std::vector<std::pair<std::string, nn::Tensor*>> CriticParams::named_buffers() {
  std::vector<std::pair<std::string, nn::Tensor*>> out;
  for (std::size_t j = 0; j < layers.size(); ++j) {
    if (!layers[j].has_bn) continue;
    const std::string base = "critic/layer" + std::to_string(j) + "/";
    out.emplace_back(base + "bn_running_mean", &layers[j].bn_running_mean);
    out.emplace_back(base + "bn_running_var", &layers[j].bn_running_var);
  }
  return out;
}

CriticParams init_critic(const CriticConfig& cfg, int height, int width,
                         std::uint64_t seed) {
  cfg.validate();
  const int factor = downsample_factor();
  if (height < factor || width < factor || height % factor != 0 ||
      width % factor != 0)
    throw DimensionError("critic input sides must be positive multiples of " +
                         std::to_string(factor) + ", got " +
                         std::to_string(height) + "x" + std::to_string(width));

  CriticParams params;
  params.layers.reserve(CriticConfig::kNumLayers);
  int in_ch = cfg.in_channels();
  for (int j = 0; j < CriticConfig::kNumLayers; ++j) {
    Rng rng(derive_seed(seed, "critic-layer", static_cast<std::uint64_t>(j)));
    CriticLayerParams layer;
    const int out_ch = cfg.channels_out(j);
    layer.w = nn::leaf(
        normal_tensor({out_ch, in_ch, cfg.kernel_size, cfg.kernel_size},
                      kInitStddev, rng),
        true);
    layer.b = nn::leaf(nn::Tensor::zeros({out_ch}), true);
    layer.has_bn = j > 0 || cfg.first_layer_batchnorm;
    if (layer.has_bn) {
      layer.bn_scale = nn::leaf(nn::Tensor::full({out_ch}, 1.0), true);
      layer.bn_shift = nn::leaf(nn::Tensor::zeros({out_ch}), true);
      layer.bn_running_mean = nn::Tensor::zeros({out_ch});
      layer.bn_running_var = nn::Tensor::full({out_ch}, 1.0);
    }
    params.layers.push_back(std::move(layer));
    in_ch = out_ch;
  }
  const int d =
      cfg.channels_out(CriticConfig::kNumLayers - 1) * (height / factor) *
      (width / factor);
  Rng rng(derive_seed(seed, "critic-linear"));
  params.lin_w = nn::leaf(normal_tensor({1, d}, kInitStddev, rng), true);
  params.lin_b = nn::leaf(nn::Tensor::zeros({1}), true);
  return params;
}

nn::Var critic_forward(const nn::Var& cond, const nn::Var& x,
                       CriticParams& params, const CriticConfig& cfg,
                       bool training, CriticTrace* trace) {
  cfg.validate();
  if (params.layers.size() != static_cast<std::size_t>(CriticConfig::kNumLayers))
    throw InvalidStateError("critic parameter set has wrong layer count");
  if (!x || x->value.ndim() != 4 || x->value.dim(1) != 1)
    throw DimensionError("critic input x must be [N, 1, H, W] magnitudes");
  const int factor = downsample_factor();
  if (x->value.dim(2) % factor != 0 || x->value.dim(3) % factor != 0)
    throw DimensionError("critic input sides must divide by " +
                         std::to_string(factor) + ", got " +
                         nn::shape_str(x->value.shape));

  nn::Var h;
  if (cfg.conditional) {
    if (!cond)
      throw DimensionError("conditional critic needs a conditioning image");
    if (cond->value.shape != x->value.shape)
      throw DimensionError("conditioning image shape " +
                           nn::shape_str(cond->value.shape) +
                           " does not match candidate shape " +
                           nn::shape_str(x->value.shape));
    h = nn::concat_channels({cond, x});
  } else {
    if (cond)
      throw DimensionError("unconditional critic must not receive a condition");
    h = x;
  }

  for (auto& layer : params.layers) {
    h = nn::conv2d(h, layer.w, layer.b, CriticConfig::kStride, cfg.pad());
    if (layer.has_bn)
      h = nn::batchnorm2d(h, layer.bn_scale, layer.bn_shift,
                          layer.bn_running_mean, layer.bn_running_var,
                          /*use_batch_stats=*/training,
                          /*update_running=*/training);
    h = nn::leaky_relu(h, cfg.leaky_slope);
  }
  if (trace) trace->features = h;
  return nn::linear(nn::flatten(h), params.lin_w, params.lin_b);
}

void clip_weights(CriticParams& params, double c) {
  if (c <= 0.0)
    throw ConfigError("clip value must be positive", "critic.clip_value");
  for (const auto& p : params.trainables()) {
    for (double& v : p->value.data) v = std::clamp(v, -c, c);
  }
}

ReceptiveWindow receptive_window(const CriticConfig& cfg, int out_r,
                                 int out_c) {
  cfg.validate();
  // Walk the index interval back through the layers: an output run [a, b]
  // needs inputs [s*a - pad, s*b - pad + k - 1].
  int r0 = out_r, r1 = out_r, c0 = out_c, c1 = out_c;
  for (int j = 0; j < CriticConfig::kNumLayers; ++j) {
    const int s = CriticConfig::kStride;
    const int p = cfg.pad();
    const int k = cfg.kernel_size;
    r0 = s * r0 - p;
    r1 = s * r1 - p + k - 1;
    c0 = s * c0 - p;
    c1 = s * c1 - p + k - 1;
  }
  return {r0, r1, c0, c1};
}

int receptive_field(const CriticConfig& cfg) {
  const ReceptiveWindow w = receptive_window(cfg, 0, 0);
  return w.r1 - w.r0 + 1;
}

}  // namespace recon::gan
