// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "matmvp/core/error.hpp"

namespace matmvp::nn {

// Dense row-major array with an explicit shape. Scalar type S is float for
// training/inference and double for finite-difference verification.
template <class S>
struct Arr {
    std::vector<int> shape;
    std::vector<S> v;

    Arr() = default;
    explicit Arr(std::vector<int> shp) : shape(std::move(shp)), v(static_cast<size_t>(numel(shape)), S(0)) {}

    static int64_t numel(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    template <class T>
    Arr<T> cast() const {
        Arr<T> out;
        out.shape = shape;
        out.v.assign(v.begin(), v.end());
        return out;
    }
};

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

}  // namespace matmvp::nn
