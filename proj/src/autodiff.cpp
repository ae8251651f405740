#include "gacnet/autodiff.hpp"

#include <random>
#include <stdexcept>

namespace gacnet {

void Tape::backward(VarId root) {
    Node& r = nodes_[static_cast<size_t>(root)];
    if (r.val.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    grad(root)[0] = 1.0;
    for (int i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.back || n.grad.data.empty()) continue;
        n.back(*this);
    }
}

void Tape::accumulate_param_grads(ParamRegistry& reg) {
    for (auto& n : nodes_) {
        if (!n.param_name.empty() && !n.grad.data.empty()) reg.add_grad(n.param_name, n.grad);
    }
}

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

Tensor& ParamRegistry::get_or_init(const std::string& name, const std::vector<int>& shape,
                                   Init init) {
    auto it = values_.find(name);
    if (it != values_.end()) return it->second;
    Tensor t(shape);
    std::mt19937_64 rng(seed_ ^ fnv1a(name));
    switch (init) {
        case Init::Zero:
            break;
        case Init::One:
            std::fill(t.data.begin(), t.data.end(), 1.0);
            break;
        case Init::HeFanIn: {
            long long fan_in = t.rank() >= 2 ? t.numel() / t.dim(t.rank() == 4 ? 0 : 1) : t.numel();
            if (t.rank() == 4) fan_in = static_cast<long long>(t.dim(1)) * t.dim(2) * t.dim(3);
            if (t.rank() == 2) fan_in = t.dim(0);
            double s = std::sqrt(2.0 / static_cast<double>(std::max<long long>(fan_in, 1)));
            std::normal_distribution<double> nd(0.0, s);
            for (auto& v : t.data) v = nd(rng);
            break;
        }
        case Init::Uniform: {
            std::uniform_real_distribution<double> ud(-0.05, 0.05);
            for (auto& v : t.data) v = ud(rng);
            break;
        }
    }
    grads_.emplace(name, Tensor::zeros(shape));
    return values_.emplace(name, std::move(t)).first->second;
}

void ParamRegistry::zero_grads() {
    // materialize a zero gradient for every parameter so optimizers can rely
    // on an entry even when a branch contributed nothing this step
    for (auto& [k, v] : values_) {
        auto it = grads_.find(k);
        if (it == grads_.end())
            grads_.emplace(k, Tensor::zeros(v.shape));
        else
            std::fill(it->second.data.begin(), it->second.data.end(), 0.0);
    }
}

void ParamRegistry::add_grad(const std::string& name, const Tensor& g) {
    auto it = grads_.find(name);
    if (it == grads_.end()) it = grads_.emplace(name, Tensor::zeros(g.shape)).first;
    for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
}

}  // namespace gacnet
