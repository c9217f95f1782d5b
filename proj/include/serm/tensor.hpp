#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace serm::nn {

/// Row-major n-dimensional array of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape) {
        Tensor t;
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        t.shape = std::move(shape);
        t.data.assign(n, 0.0);
        return t;
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Named handle to a parameter and its gradient accumulator.
struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

}  // namespace serm::nn
