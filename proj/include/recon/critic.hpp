#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recon/nn/graph.hpp"
#include "recon/nn/tensor.hpp"

namespace recon::gan {

// PatchGAN-style Wasserstein critic: four stride-2 convolutions with channel
// doubling, batch normalization on all but the first layer, LeakyReLU, then a
// single linear readout over the flattened feature map.
struct CriticConfig {
  int base_channels = 64;
  int kernel_size = 4;  // must be even so stride-2 layers halve exactly
  double leaky_slope = 0.2;
  double clip_value = 0.01;
  bool conditional = true;  // score (zero-fill, candidate) pairs vs x alone
  bool first_layer_batchnorm = false;

  static constexpr int kNumLayers = 4;
  static constexpr int kStride = 2;

  int in_channels() const { return conditional ? 2 : 1; }
  int pad() const { return (kernel_size - 2) / 2; }
  int channels_out(int layer) const { return base_channels << layer; }
  void validate() const;
};

struct CriticLayerParams {
  nn::Var w;  // [Cout, Cin, k, k]
  nn::Var b;  // [Cout]
  // Batch-norm state; only meaningful when has_bn.
  bool has_bn = false;
  nn::Var bn_scale;
  nn::Var bn_shift;
  nn::Tensor bn_running_mean;
  nn::Tensor bn_running_var;
};

struct CriticParams {
  std::vector<CriticLayerParams> layers;
  nn::Var lin_w;  // [1, D]
  nn::Var lin_b;  // [1]

  // Every parameter touched by the optimizer; weight clipping applies to the
  // same set (batch-norm running statistics are buffers, not parameters).
  std::vector<nn::Var> trainables() const;
  std::vector<std::pair<std::string, nn::Var>> named_entries() const;
  std::vector<std::pair<std::string, nn::Tensor*>> named_buffers();
};

// Input spatial size must divide by 2^kNumLayers; the linear layer's width
// depends on it, so the critic is built for a fixed image size.
CriticParams init_critic(const CriticConfig& cfg, int height, int width,
                         std::uint64_t seed);

struct CriticTrace {
  nn::Var features;  // last post-activation map, [N, 8*base, H/16, W/16]
};

// Scores a batch of magnitude images. x (and cond when conditional) are
// [N, 1, H, W] nonnegative planes; the result is [N, 1], one real score per
// element. `training` selects batch statistics (and updates the running
// buffers); otherwise the stored running statistics act as constants.
// cond must be a null Var for an unconditional critic.
nn::Var critic_forward(const nn::Var& cond, const nn::Var& x,
                       CriticParams& params, const CriticConfig& cfg,
                       bool training, CriticTrace* trace = nullptr);

// Clamps every trainable parameter to [-c, c] in place.
void clip_weights(CriticParams& params, double c);

// Inclusive input-pixel window feeding the final-layer activation at
// (out_r, out_c), from the stride/kernel arithmetic alone (no clipping to the
// image bounds).
struct ReceptiveWindow {
  int r0, r1, c0, c1;
};
ReceptiveWindow receptive_window(const CriticConfig& cfg, int out_r, int out_c);

// Side length of that window (it is square and shift-invariant).
int receptive_field(const CriticConfig& cfg);

}  // namespace recon::gan
