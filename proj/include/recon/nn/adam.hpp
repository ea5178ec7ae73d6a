#pragma once

#include <cstdint>
#include <vector>

#include "recon/nn/graph.hpp"

namespace recon::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Parameters are leaf nodes whose grads
// are filled by backward(); step() consumes them, zero_grad() clears them.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig cfg);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return t_; }
  const std::vector<Var>& params() const { return params_; }

  // Flat state access for checkpointing.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore_state(std::vector<Tensor> m, std::vector<Tensor> v,
                     std::int64_t steps);

 private:
  std::vector<Var> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace recon::nn
