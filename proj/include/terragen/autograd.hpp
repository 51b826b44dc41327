#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "terragen/tensor.hpp"

namespace terragen {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in a define-by-run graph. The backward closure reads this
// node's grad and accumulates into its parents' grads.
struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    std::string op = "leaf";

    Tensor& ensure_grad() {
        if (grad.data.empty()) grad = Tensor::zeros(value.shape);
        return grad;
    }
    bool has_grad() const { return !grad.data.empty(); }
};

Var make_leaf(Tensor value, bool requires_grad = false);
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn,
              const std::string& op);

// Reverse-mode accumulation from a scalar loss into every reachable
// grad-requiring node. Existing grads are accumulated into, not reset;
// call ParamStore::zero_grad between steps.
void backward(const Var& loss);

}  // namespace terragen
