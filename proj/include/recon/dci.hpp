#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/mri_types.hpp"
#include "recon/nn/graph.hpp"

namespace recon::gen {

struct DCIConfig {
  int n_iterations = 20;     // N unrolled blocks
  int growth = 5;            // G: skip connections reaching each block
  int kernels_per_conv = 40; // feature channels inside a regularization unit
  double leaky_slope = 0.1;
  // Fixed by architecture: 3 convs per regularization unit, 5x5 kernels.
  static constexpr int kConvsPerUnit = 3;
  static constexpr int kKernelSize = 5;

  void validate() const;
};

// Per-iteration trainable state. Conv weights follow [Cout, Cin, 5, 5].
struct DCIIterParams {
  nn::Var conv_w[3];
  nn::Var conv_b[3];
  nn::Var lambda;  // data-consistency step weight, scalar
};

struct DCIParams {
  std::vector<DCIIterParams> iters;

  // All trainable leaves in a stable order matching named_entries().
  std::vector<nn::Var> trainables() const;
  // Stable checkpoint keys: "iter{k}/conv{j}/weight|bias", "iter{k}/lambda".
  std::vector<std::pair<std::string, nn::Var>> named_entries() const;
};

// Fan-in-scaled normal init for conv weights, zero biases, lambda = 1. The
// final conv of each unit uses a reduced gain so the freshly initialized
// regularizer perturbs the image only mildly.
DCIParams init_params(const DCIConfig& cfg, std::uint64_t seed);

// Closed-form trainable scalar count for a config.
std::int64_t param_count(const DCIConfig& cfg);

// Per-sample physics context for the data-consistency units.
struct SamplePhysics {
  const mri::CoilKSpace* k_u;
  const mri::SensitivityMaps* maps;
  const mri::SamplingMask* mask;
};

// One regularization unit applied to a [N, 2(G+1), H, W] connection stack.
nn::Var regularization_unit(const nn::Var& connections,
                            const DCIIterParams& params, const DCIConfig& cfg);

// Wiring introspection: per-iteration block outputs and connection stacks.
struct DCITrace {
  std::vector<nn::Var> outputs;
  std::vector<nn::Var> stacks;
};

// Full unrolled network on a batch. m_z: [N, 2, H, W] zero-filled images
// (graph input; typically a constant leaf). Physics pointers must outlive the
// returned tape. Returns the final iterate, shape [N, 2, H, W].
nn::Var dci_forward_graph(const nn::Var& m_z,
                          const std::vector<SamplePhysics>& physics,
                          const DCIParams& params, const DCIConfig& cfg,
                          DCITrace* trace = nullptr);

// Convenience single-sample reconstruction (no gradients kept).
mri::ComplexImage dci_forward(const mri::CoilKSpace& k_u,
                              const mri::SensitivityMaps& maps,
                              const mri::SamplingMask& mask,
                              const DCIParams& params, const DCIConfig& cfg);

}  // namespace recon::gen
