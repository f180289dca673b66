#ifndef CVC_AUTOGRAD_HPP
#define CVC_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <vector>

#include "cvc/tensor.hpp"

namespace cvc {

// Reverse-mode autodiff over Tensor. Each op builds a Node whose backprop
// closure scatters the node's grad into its parents. Graphs are built per
// forward pass and freed when the root Var goes out of scope; Parameters keep
// their leaf Nodes alive across passes so gradients accumulate in place.
struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (!grad_ready) {
      grad = Tensor::zeros(val.shape);
      grad_ready = true;
    }
    return grad;
  }

  void zero_grad() {
    grad_ready = false;
    grad = Tensor();
  }
};

using Var = std::shared_ptr<Node>;

// Graph construction is suppressed inside a NoGradGuard: ops compute values
// only, keep no parents, and intermediates are freed as soon as their Vars
// go out of scope.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

Var make_leaf(Tensor value, bool requires_grad = false);
Var make_leaf(Shape s, double fill = 0.0, bool requires_grad = false);

// Generic node factory. `parents` that don't require grad are still recorded
// (backprop closures may read their values) unless grad is globally disabled.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Runs backprop from `root` (a scalar loss, usually) in reverse topological
// order. Seeds root's grad with ones unless it was pre-seeded.
void backward(const Var& root);

inline const Tensor& value(const Var& v) { return v->val; }

}  // namespace cvc

#endif
