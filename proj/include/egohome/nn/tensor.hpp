#pragma once

#include <numeric>
#include <vector>

#include "egohome/core/common.hpp"
#include "egohome/core/rng.hpp"

namespace egohome::nn {

struct Tensor {
    std::vector<int> shape;
    std::vector<real> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, real fill = 0) : shape(std::move(s)) {
        data.assign(size_t(numel_of(shape)), fill);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, real v) { return Tensor(std::move(s), v); }
    static Tensor randn(Rng& rng, std::vector<int> s, real stddev = 1.0) {
        Tensor t(std::move(s));
        for (auto& v : t.data) v = stddev * rng.normal();
        return t;
    }

    int64_t numel() const { return int64_t(data.size()); }
    int dim(int i) const { return shape[size_t(i)]; }
    int ndim() const { return int(shape.size()); }

    real& operator[](size_t i) { return data[i]; }
    real operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool operator==(const Tensor&) const = default;
};

}  // namespace egohome::nn
