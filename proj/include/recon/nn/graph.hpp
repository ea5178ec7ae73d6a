#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "recon/nn/tensor.hpp"

namespace recon::nn {

// One value in a dynamically built computation tape. Interior nodes hold a
// closure that routes the node's gradient to its parents; the tape is rebuilt
// every step and freed when the root goes out of scope. A node's backward_fn
// may capture its own raw pointer (it owns the closure), but must hold
// parents only through the `parents` vector to avoid reference cycles.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated on first use during backward
  bool requires_grad = false;
  bool needs_grad = false;  // this or some ancestor requires a gradient
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  Tensor& ensure_grad();
};

using Var = std::shared_ptr<Node>;

// Trainable or otherwise grad-carrying input.
Var leaf(Tensor value, bool requires_grad);
// Fixed input; gradients do not flow into it.
Var constant(Tensor value);

// Creates an interior node whose needs_grad is inherited from parents.
Var make_op(Tensor value, std::vector<Var> parents);

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// reachable node with needs_grad set; leaf gradients persist until cleared by
// the caller (typically the optimizer).
void backward(const Var& root);

}  // namespace recon::nn
