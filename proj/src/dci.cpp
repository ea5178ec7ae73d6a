#include "recon/dci.hpp"

#include <cmath>
#include <utility>

#include "recon/errors.hpp"
#include "recon/mri_ops.hpp"
#include "recon/nn/ops.hpp"
#include "recon/rng.hpp"

namespace recon::gen {

namespace {

// Keeps the initial regularizer output small relative to the image so a
// freshly initialized network behaves like plain data-consistency descent
// (output NMSE stays within +-50% of the zero-fill NMSE).
constexpr double kLastConvGain = 0.02;

nn::Tensor normal_tensor(std::vector<int> shape, double stddev, Rng& rng) {
  nn::Tensor t = nn::Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

}  // namespace

void DCIConfig::validate() const {
  if (n_iterations < 1)
    throw ConfigError("n_iterations must be >= 1", "generator.n_iterations");
  if (growth < 0) throw ConfigError("growth must be >= 0", "generator.growth");
  if (kernels_per_conv < 1)
    throw ConfigError("kernels_per_conv must be >= 1",
                      "generator.kernels_per_conv");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw ConfigError("leaky_slope must lie in [0, 1)", "generator.leaky_slope");
}

std::vector<nn::Var> DCIParams::trainables() const {
  std::vector<nn::Var> out;
  out.reserve(iters.size() * 7);
  for (const auto& it : iters) {
    for (int j = 0; j < 3; ++j) {
      out.push_back(it.conv_w[j]);
      out.push_back(it.conv_b[j]);
    }
    out.push_back(it.lambda);
  }
  return out;
}

std::vector<std::pair<std::string, nn::Var>> DCIParams::named_entries() const {
  std::vector<std::pair<std::string, nn::Var>> out;
  for (std::size_t k = 0; k < iters.size(); ++k) {
    const std::string base = "iter" + std::to_string(k) + "/";
    for (int j = 0; j < 3; ++j) {
      const std::string conv = base + "conv" + std::to_string(j + 1) + "/";
      out.emplace_back(conv + "weight", iters[k].conv_w[j]);
      out.emplace_back(conv + "bias", iters[k].conv_b[j]);
    }
    out.emplace_back(base + "lambda", iters[k].lambda);
  }
  return out;
}

DCIParams init_params(const DCIConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int k = DCIConfig::kKernelSize;
  const int c = cfg.kernels_per_conv;
  const int in_ch = 2 * (cfg.growth + 1);
  DCIParams params;
  params.iters.reserve(static_cast<std::size_t>(cfg.n_iterations));
  for (int it = 0; it < cfg.n_iterations; ++it) {
    Rng rng(derive_seed(seed, "dci-iter", static_cast<std::uint64_t>(it)));
    DCIIterParams p;
    const int cins[3] = {in_ch, c, c};
    const int couts[3] = {c, c, 2};
    for (int j = 0; j < 3; ++j) {
      const double fan_in = static_cast<double>(cins[j]) * k * k;
      double stddev = std::sqrt(2.0 / fan_in);
      if (j == 2) stddev *= kLastConvGain;
      p.conv_w[j] =
          nn::leaf(normal_tensor({couts[j], cins[j], k, k}, stddev, rng), true);
      p.conv_b[j] = nn::leaf(nn::Tensor::zeros({couts[j]}), true);
    }
    p.lambda = nn::leaf(nn::Tensor::scalar(1.0), true);
    params.iters.push_back(std::move(p));
  }
  return params;
}

std::int64_t param_count(const DCIConfig& cfg) {
  const std::int64_t c = cfg.kernels_per_conv;
  const std::int64_t in_ch = 2 * (static_cast<std::int64_t>(cfg.growth) + 1);
  const std::int64_t per_iter = 25 * c * in_ch + c  // conv1
                                + 25 * c * c + c    // conv2
                                + 25 * 2 * c + 2    // conv3
                                + 1;                // lambda
  return cfg.n_iterations * per_iter;
}

nn::Var regularization_unit(const nn::Var& connections,
                            const DCIIterParams& params, const DCIConfig& cfg) {
  const int expected = 2 * (cfg.growth + 1);
  if (connections->value.ndim() != 4 || connections->value.dim(1) != expected)
    throw DimensionError(
        "regularization_unit: expected " + std::to_string(cfg.growth + 1) +
        " complex connections (" + std::to_string(expected) + " planes), got " +
        nn::shape_str(connections->value.shape));
  const int pad = DCIConfig::kKernelSize / 2;
  nn::Var h1 = nn::leaky_relu(
      nn::conv2d(connections, params.conv_w[0], params.conv_b[0], 1, pad),
      cfg.leaky_slope);
  nn::Var h2 = nn::leaky_relu(
      nn::conv2d(h1, params.conv_w[1], params.conv_b[1], 1, pad),
      cfg.leaky_slope);
  // No trailing activation: the unit emits a signed complex residual.
  return nn::conv2d(h2, params.conv_w[2], params.conv_b[2], 1, pad);
}

nn::Var dci_forward_graph(const nn::Var& m_z,
                          const std::vector<SamplePhysics>& physics,
                          const DCIParams& params, const DCIConfig& cfg,
                          DCITrace* trace) {
  cfg.validate();
  if (params.iters.size() != static_cast<std::size_t>(cfg.n_iterations))
    throw ConfigError("parameter set holds " +
                          std::to_string(params.iters.size()) +
                          " iterations, config wants " +
                          std::to_string(cfg.n_iterations),
                      "generator.n_iterations");
  if (m_z->value.ndim() != 4 || m_z->value.dim(1) != 2)
    throw DimensionError("dci_forward_graph: m_z must be [N, 2, H, W]");
  if (physics.size() != static_cast<std::size_t>(m_z->value.dim(0)))
    throw DimensionError("dci_forward_graph: physics size != batch size");

  std::vector<const mri::CoilKSpace*> k_u;
  std::vector<const mri::SensitivityMaps*> maps;
  std::vector<const mri::SamplingMask*> masks;
  for (const auto& p : physics) {
    k_u.push_back(p.k_u);
    maps.push_back(p.maps);
    masks.push_back(p.mask);
  }

  std::vector<nn::Var> outputs;  // out_0 .. out_{k-1}
  nn::Var direct = m_z;
  for (int it = 0; it < cfg.n_iterations; ++it) {
    // Newest output first, padded with the zero-filled image.
    std::vector<nn::Var> connections;
    connections.reserve(static_cast<std::size_t>(cfg.growth) + 1);
    for (int back = 0; back < cfg.growth + 1; ++back) {
      const int idx = it - 1 - back;
      connections.push_back(idx >= 0 ? outputs[static_cast<std::size_t>(idx)]
                                     : m_z);
    }
    nn::Var stack = nn::concat_channels(connections);
    nn::Var reg = regularization_unit(
        stack, params.iters[static_cast<std::size_t>(it)], cfg);
    nn::Var dc = nn::dc_residual(
        direct, params.iters[static_cast<std::size_t>(it)].lambda, k_u, maps,
        masks);
    nn::Var out = nn::add(direct, nn::sub(reg, dc));
    outputs.push_back(out);
    if (trace) trace->stacks.push_back(stack);
    direct = out;
  }
  if (trace) trace->outputs = outputs;
  return direct;
}

mri::ComplexImage dci_forward(const mri::CoilKSpace& k_u,
                              const mri::SensitivityMaps& maps,
                              const mri::SamplingMask& mask,
                              const DCIParams& params, const DCIConfig& cfg) {
  mri::ComplexImage m_z = mri::zero_fill(k_u, maps);
  nn::Var m_z_var = nn::constant(nn::images_to_batch({&m_z}));
  SamplePhysics phys{&k_u, &maps, &mask};
  nn::Var out = dci_forward_graph(m_z_var, {phys}, params, cfg);
  return nn::tensor_to_image(out->value, 0);
}

}  // namespace recon::gen
