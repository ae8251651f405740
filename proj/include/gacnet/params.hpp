#pragma once

#include <map>
#include <string>

#include "gacnet/tensor.hpp"

namespace gacnet {

enum class Init { Zero, One, HeFanIn, Uniform };

// Flat name -> array registry for all learnable parameters.
// Initialization is seeded from (global seed, name) so the values do not
// depend on the order in which modules first touch their parameters.
class ParamRegistry {
public:
    explicit ParamRegistry(uint64_t seed = 0) : seed_(seed) {}

    Tensor& get_or_init(const std::string& name, const std::vector<int>& shape, Init init);
    bool has(const std::string& name) const { return values_.count(name) > 0; }
    Tensor& value(const std::string& name) { return values_.at(name); }
    const Tensor& value(const std::string& name) const { return values_.at(name); }
    Tensor& grad(const std::string& name) { return grads_.at(name); }

    void zero_grads();
    void add_grad(const std::string& name, const Tensor& g);

    const std::map<std::string, Tensor>& values() const { return values_; }
    std::map<std::string, Tensor>& values_mutable() { return values_; }

    uint64_t seed() const { return seed_; }

    // Binary checkpoint, bit-exact round trip.
    void save(const std::string& path) const;
    static ParamRegistry load(const std::string& path);

private:
    uint64_t seed_ = 0;
    std::map<std::string, Tensor> values_;
    std::map<std::string, Tensor> grads_;
};

}  // namespace gacnet
