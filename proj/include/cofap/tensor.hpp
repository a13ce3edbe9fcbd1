// Dense row-major tensor used by the differentiation kernel. 64-bit values
// everywhere in memory; 32-bit only in on-disk parameter blobs.
#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "cofap/io.hpp"
#include "cofap/rng.hpp"

namespace cofap {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape))
            throw ShapeError("tensor: value count does not match shape " + shape_string());
    }

    static size_t count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor: non-positive dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor randn(std::vector<int> s, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = rng.normal() * stddev;
        return t;
    }
    static Tensor uniform(std::vector<int> s, Rng& rng, double lo, double hi) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = rng.uniform(lo, hi);
        return t;
    }

    size_t numel() const { return data.size(); }
    int dim(size_t axis) const { return shape[axis]; }
    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static std::string shape_string(const std::vector<int>& shape) {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + ")";
    }
    std::string shape_string() const { return shape_string(shape); }
};

inline void require_shape(const Tensor& t, const std::vector<int>& shape, const char* op) {
    if (t.shape != shape)
        throw ShapeError(std::string(op) + ": expected shape " + Tensor::shape_string(shape) +
                         ", got " + t.shape_string());
}

}  // namespace cofap
