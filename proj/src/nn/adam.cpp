#include "recon/nn/adam.hpp"

#include <cmath>

#include "recon/errors.hpp"

namespace recon::nn {

Adam::Adam(std::vector<Var> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p || !p->requires_grad)
      throw InvalidStateError("Adam: every parameter must be a trainable leaf");
    m_.push_back(Tensor::zeros(p->value.shape));
    v_.push_back(Tensor::zeros(p->value.shape));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Node& p = *params_[i];
    if (p.grad.data.empty()) continue;  // parameter untouched this step
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * g;
      v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m.data[j] / bc1;
      const double vhat = v.data[j] / bc2;
      p.value.data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_)
    if (!p->grad.data.empty())
      std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void Adam::restore_state(std::vector<Tensor> m, std::vector<Tensor> v,
                         std::int64_t steps) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw InvalidStateError("Adam: restored state tensor count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!m[i].same_shape(params_[i]->value) || !v[i].same_shape(params_[i]->value))
      throw InvalidStateError("Adam: restored state shape mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

}  // namespace recon::nn
