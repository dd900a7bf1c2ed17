#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vismpc/rng.h"

namespace vismpc {

// Dense row-major tensor. Images are H x W x C, flow fields H x W x 2
// (channel 0 = dx along columns, channel 1 = dy along rows), pixel belief
// maps H x W. Single precision at runtime, double precision for the
// finite-difference verification mode.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    // 3d accessors (H, W, C)
    T& at(int r, int c, int ch) {
        return data[(static_cast<size_t>(r) * shape[1] + c) * shape[2] + ch];
    }
    const T& at(int r, int c, int ch) const {
        return data[(static_cast<size_t>(r) * shape[1] + c) * shape[2] + ch];
    }
    // 2d accessors (H, W)
    T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (T& v : data) v = static_cast<T>(rng.uniform(lo, hi));
    }
    void fill_normal(Rng& rng, double stddev) {
        for (T& v : data) v = static_cast<T>(rng.normal() * stddev);
    }

    T sum() const {
        T s = T(0);
        for (const T& v : data) s += v;
        return s;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Integer pixel coordinate, (row, col) like the frame layout.
struct Pixel {
    int row = 0;
    int col = 0;
    bool operator==(const Pixel&) const = default;
};

// Sub-pixel coordinate for expectations and projections.
struct PixelF {
    double row = 0.0;
    double col = 0.0;
};

inline double pixel_distance(const PixelF& a, const PixelF& b) {
    const double dr = a.row - b.row, dc = a.col - b.col;
    return std::sqrt(dr * dr + dc * dc);
}
inline double pixel_distance(const Pixel& a, const Pixel& b) {
    return pixel_distance(PixelF{double(a.row), double(a.col)}, PixelF{double(b.row), double(b.col)});
}

} // namespace vismpc
