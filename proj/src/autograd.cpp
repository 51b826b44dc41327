#include "terragen/autograd.hpp"

#include <stdexcept>
#include <unordered_map>

namespace terragen {

Var make_leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn,
              const std::string& op) {
    value.check_finite(op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
    n->op = op;
    for (const auto& p : n->parents) {
        if (p && p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    return n;
}

namespace {

enum class Mark : uint8_t { White, Grey, Black };

// Iterative post-order DFS; a grey node reached again means a cycle.
void topo_sort(const Var& root, std::vector<Node*>& order) {
    std::unordered_map<Node*, Mark> marks;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    marks[root.get()] = Mark::Grey;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (!parent) continue;
            Mark& m = marks[parent];
            if (m == Mark::Grey) throw std::runtime_error("backward: cycle detected in computation graph");
            if (m == Mark::White) {
                m = Mark::Grey;
                stack.push_back({parent, 0});
            }
        } else {
            marks[node] = Mark::Black;
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Var& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss");
    if (loss->value.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss->value.shape));
    }
    std::vector<Node*> order;
    topo_sort(loss, order);

    loss->ensure_grad();
    loss->grad.data[0] += 1.0;

    // order is post-order (parents before children); walk children-first.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->requires_grad || !n->backward_fn) continue;
        if (!n->has_grad()) continue;  // not on any path from the loss
        n->backward_fn(*n);
    }
}

}  // namespace terragen
