#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace gacnet {

// Dense row-major double tensor. Rank is 1..4 in practice.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        assert(static_cast<long long>(data.size()) == numel_of(shape));
    }

    static long long numel_of(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) n *= d;
        return n;
    }

    long long numel() const { return static_cast<long long>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    double& operator[](long long i) { return data[static_cast<size_t>(i)]; }
    double operator[](long long i) const { return data[static_cast<size_t>(i)]; }

    // 2-D accessors (rows, cols)
    double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

    // 3-D accessors (c, h, w)
    double& at(int c, int h, int w) {
        return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    double at(int c, int h, int w) const {
        return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace gacnet
