#pragma once

// Brute-force reference implementations used only by tests. These stay
// independent of the library's GEMM/warp code paths on purpose: they are the
// oracles the kernels are checked against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "vismpc/kernels.h"
#include "vismpc/tensor.h"

namespace oracle {

// nested-loop same-padding stride-1 convolution with optional leaky rectifier
template <typename T>
vismpc::TensorT<T> conv2d(const vismpc::TensorT<T>& in, const vismpc::TensorT<T>& kernel,
                          const vismpc::TensorT<T>& bias, bool leaky) {
    const int h = in.dim(0), w = in.dim(1), cin = in.dim(2);
    const int kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
    const int pr = kh / 2, pc = kw / 2;
    vismpc::TensorT<T> out({h, w, cout});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int co = 0; co < cout; ++co) {
                double acc = bias[static_cast<size_t>(co)];
                for (int dr = 0; dr < kh; ++dr)
                    for (int dc = 0; dc < kw; ++dc) {
                        const int rr = r + dr - pr, cc = c + dc - pc;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                        for (int ci = 0; ci < cin; ++ci)
                            acc += static_cast<double>(in.at(rr, cc, ci)) *
                                   kernel.data[((static_cast<size_t>(dr) * kw + dc) * cin + ci) * cout + co];
                    }
                if (leaky && acc < 0.0) acc *= vismpc::kLeakySlope;
                out.at(r, c, co) = static_cast<T>(acc);
            }
    return out;
}

// integer-shift warp: out(r, c) = in(r + dy, c + dx), indices clamped
template <typename T>
vismpc::TensorT<T> shift_clamped(const vismpc::TensorT<T>& in, int dx, int dy) {
    const int h = in.dim(0), w = in.dim(1), ch = in.dim(2);
    vismpc::TensorT<T> out(in.shape);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int rr = std::clamp(r + dy, 0, h - 1);
            const int cc = std::clamp(c + dx, 0, w - 1);
            for (int k = 0; k < ch; ++k) out.at(r, c, k) = in.at(rr, cc, k);
        }
    return out;
}

// elementwise Charbonnier mean
template <typename T>
double charbonnier(const vismpc::TensorT<T>& a, const vismpc::TensorT<T>& b, double eps) {
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += std::sqrt(d * d + eps * eps);
    }
    return acc / static_cast<double>(a.numel());
}

// direct-counting smoothness: mean |first difference| over both channels
template <typename T>
double smoothness(const vismpc::TensorT<T>& flow) {
    const int h = flow.dim(0), w = flow.dim(1);
    double acc = 0.0;
    size_t terms = 0;
    for (int k = 0; k < 2; ++k) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c + 1 < w; ++c) {
                acc += std::abs(static_cast<double>(flow.at(r, c + 1, k)) - flow.at(r, c, k));
                ++terms;
            }
        for (int r = 0; r + 1 < h; ++r)
            for (int c = 0; c < w; ++c) {
                acc += std::abs(static_cast<double>(flow.at(r + 1, c, k)) - flow.at(r, c, k));
                ++terms;
            }
    }
    return terms ? acc / static_cast<double>(terms) : 0.0;
}

// double-loop expected pixel position of a normalized map
template <typename T>
vismpc::PixelF expected_position(const vismpc::TensorT<T>& p) {
    double r = 0.0, c = 0.0;
    for (int rr = 0; rr < p.dim(0); ++rr)
        for (int cc = 0; cc < p.dim(1); ++cc) {
            r += static_cast<double>(p.at(rr, cc)) * rr;
            c += static_cast<double>(p.at(rr, cc)) * cc;
        }
    return {r, c};
}

// triple-loop Eq-style expected distance cost
template <typename T>
double pixel_cost(const std::vector<vismpc::TensorT<T>>& seq, int goal_row, int goal_col) {
    double total = 0.0;
    for (const auto& p : seq)
        for (int r = 0; r < p.dim(0); ++r)
            for (int c = 0; c < p.dim(1); ++c) {
                const double dr = r - goal_row, dc = c - goal_col;
                total += static_cast<double>(p.at(r, c)) * std::sqrt(dr * dr + dc * dc);
            }
    return total;
}

} // namespace oracle
