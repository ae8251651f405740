#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gacnet/params.hpp"

namespace gacnet {

namespace {
constexpr char kMagic[8] = {'G', 'A', 'C', 'C', 'K', 'P', 'T', '1'};
}

void ParamRegistry::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint save: cannot open " + path);
    f.write(kMagic, 8);
    uint64_t seed = seed_;
    f.write(reinterpret_cast<const char*>(&seed), 8);
    uint64_t count = values_.size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, t] : values_) {
        uint32_t nlen = static_cast<uint32_t>(name.size());
        f.write(reinterpret_cast<const char*>(&nlen), 4);
        f.write(name.data(), nlen);
        uint32_t rank = static_cast<uint32_t>(t.shape.size());
        f.write(reinterpret_cast<const char*>(&rank), 4);
        for (int d : t.shape) {
            int64_t dd = d;
            f.write(reinterpret_cast<const char*>(&dd), 8);
        }
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint save: write failed for " + path);
}

ParamRegistry ParamRegistry::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint load: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint load: bad magic in " + path);
    uint64_t seed = 0, count = 0;
    f.read(reinterpret_cast<char*>(&seed), 8);
    f.read(reinterpret_cast<char*>(&count), 8);
    ParamRegistry reg(seed);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t nlen = 0;
        f.read(reinterpret_cast<char*>(&nlen), 4);
        std::string name(nlen, '\0');
        f.read(name.data(), nlen);
        uint32_t rank = 0;
        f.read(reinterpret_cast<char*>(&rank), 4);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            int64_t dd = 0;
            f.read(reinterpret_cast<char*>(&dd), 8);
            shape[d] = static_cast<int>(dd);
        }
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!f) throw std::runtime_error("checkpoint load: truncated file " + path);
        reg.values_.emplace(name, std::move(t));
        reg.grads_.emplace(name, Tensor::zeros(shape));
    }
    return reg;
}

}  // namespace gacnet
