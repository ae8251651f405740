#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gacnet/params.hpp"
#include "gacnet/tensor.hpp"

namespace gacnet {

using VarId = int;

// Reverse-mode tape. One tape is built per forward pass; backward() walks
// the node list in reverse and accumulates into Node::grad, then parameter
// gradients are flushed into the registry.
class Tape {
public:
    struct Node {
        Tensor val;
        Tensor grad;  // allocated on demand during backward
        std::function<void(Tape&)> back;
        bool requires_grad = false;
        std::string param_name;  // nonempty for parameter leaves
    };

    VarId constant(Tensor t) { return push(std::move(t), false, nullptr, {}); }
    VarId leaf(Tensor t, bool requires_grad) {
        return push(std::move(t), requires_grad, nullptr, {});
    }
    VarId param(const std::string& name, ParamRegistry& reg, const std::vector<int>& shape,
                Init init) {
        VarId v = push(Tensor(reg.get_or_init(name, shape, init)), true, nullptr, name);
        return v;
    }

    VarId push(Tensor val, bool requires_grad, std::function<void(Tape&)> back,
               std::string param_name = {}) {
        nodes_.push_back(Node{std::move(val), Tensor{}, std::move(back), requires_grad,
                              std::move(param_name)});
        return static_cast<VarId>(nodes_.size()) - 1;
    }

    void set_back(VarId v, std::function<void(Tape&)> f) {
        nodes_[static_cast<size_t>(v)].back = std::move(f);
    }

    const Tensor& val(VarId v) const { return nodes_[static_cast<size_t>(v)].val; }
    bool requires_grad(VarId v) const { return nodes_[static_cast<size_t>(v)].requires_grad; }

    Tensor& grad(VarId v) {
        Node& n = nodes_[static_cast<size_t>(v)];
        if (n.grad.data.empty()) n.grad = Tensor::zeros(n.val.shape);
        return n.grad;
    }
    bool has_grad(VarId v) const { return !nodes_[static_cast<size_t>(v)].grad.data.empty(); }

    // Seeds d(root)/d(root) = 1 (root must be scalar) and back-propagates.
    void backward(VarId root);

    // Flush parameter-leaf gradients into the registry (additive).
    void accumulate_param_grads(ParamRegistry& reg);

    size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

}  // namespace gacnet
