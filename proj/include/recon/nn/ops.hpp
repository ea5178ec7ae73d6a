#pragma once

#include <vector>

#include "recon/mri_types.hpp"
#include "recon/nn/graph.hpp"

namespace recon::nn {

// Elementwise arithmetic (matching shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);

Var leaky_relu(const Var& x, double negative_slope);

// x: [N, Cin, H, W], w: [Cout, Cin, kh, kw], b: [Cout].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// x: [N, D], w: [Out, D], b: [Out] -> [N, Out].
Var linear(const Var& x, const Var& w, const Var& b);

Var flatten(const Var& x);  // [N, ...] -> [N, prod(rest)]

Var concat_channels(const std::vector<Var>& xs);  // along axis 1

// [N, 2, H, W] complex-as-channels -> [N, 1, H, W] magnitude. A tiny epsilon
// keeps the gradient defined at exact zeros.
Var magnitude_pair(const Var& x);

Var sum(const Var& x);                         // -> [1]
Var mean(const Var& x);                        // -> [1]
Var sum_sq_diff(const Var& a, const Var& b);   // -> [1], sum (a-b)^2

// Batch normalization over [N, C, H, W] with per-channel affine parameters.
// With use_batch_stats the batch mean/variance normalize the activations and
// gradients flow through them; otherwise running_mean/running_var are used as
// constants. update_running folds the batch statistics into the running
// buffers (owned by the caller) with the given momentum.
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta,
                Tensor& running_mean, Tensor& running_var, bool use_batch_stats,
                bool update_running, double momentum = 0.1, double eps = 1e-5);

// Data-consistency residual for a batch of complex images held as [N, 2, H, W]:
// out_n = lambda * R(F(m_n (*) S_n) (*) M_n - K_u_n, S_n).
// The per-sample physics arrays are captured as constants by pointer and must
// outlive the tape; gradients flow to m (through the self-adjoint acquisition
// normal operator) and to lambda.
// Preconditions: every k_u must already be masked by its mask.
Var dc_residual(const Var& m, const Var& lambda,
                const std::vector<const mri::CoilKSpace*>& k_u,
                const std::vector<const mri::SensitivityMaps*>& maps,
                const std::vector<const mri::SamplingMask*>& masks);

// Conversions between the physics types and network tensors.
Tensor image_to_tensor(const mri::ComplexImage& img);            // [2, H, W]
Tensor images_to_batch(const std::vector<const mri::ComplexImage*>& imgs);
mri::ComplexImage tensor_to_image(const Tensor& t, int n = 0);   // from [N,2,H,W] or [2,H,W]

}  // namespace recon::nn
