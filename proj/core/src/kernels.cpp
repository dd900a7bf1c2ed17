#include "vismpc/kernels.h"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace vismpc {

namespace {

// We run our own concurrency (episodes, candidate batches); nested BLAS
// threading would wreck both throughput and determinism.
void ensure_single_threaded_blas() {
    static std::once_flag flag;
    std::call_once(flag, [] { openblas_set_num_threads(1); });
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    ensure_single_threaded_blas();
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    ensure_single_threaded_blas();
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void check_image_flow(const TensorT<T>& image, const TensorT<T>& flow) {
    if (image.shape.size() != 3) throw std::invalid_argument("warp: image must be H x W x C");
    if (flow.shape.size() != 3 || flow.dim(2) != 2)
        throw std::invalid_argument("warp: flow must be H x W x 2");
    if (image.dim(0) != flow.dim(0) || image.dim(1) != flow.dim(1))
        throw std::invalid_argument("warp: image/flow shape mismatch");
}

template <typename T>
struct Sample {
    int r0, r1, c0, c1;
    T wr, wc; // fractional parts after clamping
};

// Clamp-to-edge sample position for target pixel (r, c) under `flow`.
template <typename T>
Sample<T> sample_at(int r, int c, int h, int w, T dx, T dy) {
    T sr = static_cast<T>(r) + dy;
    T sc = static_cast<T>(c) + dx;
    sr = std::min(std::max(sr, T(0)), static_cast<T>(h - 1));
    sc = std::min(std::max(sc, T(0)), static_cast<T>(w - 1));
    Sample<T> s;
    const T fr = std::floor(sr), fc = std::floor(sc);
    s.r0 = static_cast<int>(fr);
    s.c0 = static_cast<int>(fc);
    s.r1 = std::min(s.r0 + 1, h - 1);
    s.c1 = std::min(s.c0 + 1, w - 1);
    s.wr = sr - fr;
    s.wc = sc - fc;
    return s;
}

} // namespace

template <typename T>
TensorT<T> warp_bilinear(const TensorT<T>& image, const TensorT<T>& flow) {
    check_image_flow(image, flow);
    const int h = image.dim(0), w = image.dim(1), ch = image.dim(2);
    TensorT<T> out(image.shape);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const Sample<T> s = sample_at(r, c, h, w, flow.at(r, c, 0), flow.at(r, c, 1));
            const T w00 = (T(1) - s.wr) * (T(1) - s.wc);
            const T w01 = (T(1) - s.wr) * s.wc;
            const T w10 = s.wr * (T(1) - s.wc);
            const T w11 = s.wr * s.wc;
            for (int k = 0; k < ch; ++k) {
                out.at(r, c, k) = w00 * image.at(s.r0, s.c0, k) + w01 * image.at(s.r0, s.c1, k) +
                                  w10 * image.at(s.r1, s.c0, k) + w11 * image.at(s.r1, s.c1, k);
            }
        }
    }
    return out;
}

template <typename T>
void warp_bilinear_grad(const TensorT<T>& image, const TensorT<T>& flow,
                        const TensorT<T>& grad_out, TensorT<T>* grad_image,
                        TensorT<T>* grad_flow) {
    check_image_flow(image, flow);
    if (!grad_out.same_shape(image)) throw std::invalid_argument("warp grad: shape mismatch");
    const int h = image.dim(0), w = image.dim(1), ch = image.dim(2);
    if (grad_image) *grad_image = TensorT<T>(image.shape);
    if (grad_flow) *grad_flow = TensorT<T>(flow.shape);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const T dx = flow.at(r, c, 0), dy = flow.at(r, c, 1);
            const Sample<T> s = sample_at(r, c, h, w, dx, dy);
            // clamped coordinates stop receiving position gradient
            const T sr_raw = static_cast<T>(r) + dy;
            const T sc_raw = static_cast<T>(c) + dx;
            const bool r_clamped = sr_raw <= T(0) || sr_raw >= static_cast<T>(h - 1);
            const bool c_clamped = sc_raw <= T(0) || sc_raw >= static_cast<T>(w - 1);
            const T w00 = (T(1) - s.wr) * (T(1) - s.wc);
            const T w01 = (T(1) - s.wr) * s.wc;
            const T w10 = s.wr * (T(1) - s.wc);
            const T w11 = s.wr * s.wc;
            T gdx = T(0), gdy = T(0);
            for (int k = 0; k < ch; ++k) {
                const T g = grad_out.at(r, c, k);
                const T i00 = image.at(s.r0, s.c0, k), i01 = image.at(s.r0, s.c1, k);
                const T i10 = image.at(s.r1, s.c0, k), i11 = image.at(s.r1, s.c1, k);
                if (grad_image) {
                    grad_image->at(s.r0, s.c0, k) += g * w00;
                    grad_image->at(s.r0, s.c1, k) += g * w01;
                    grad_image->at(s.r1, s.c0, k) += g * w10;
                    grad_image->at(s.r1, s.c1, k) += g * w11;
                }
                // d(out)/d(sc) and d(out)/d(sr) of the bilinear blend
                gdx += g * ((T(1) - s.wr) * (i01 - i00) + s.wr * (i11 - i10));
                gdy += g * ((T(1) - s.wc) * (i10 - i00) + s.wc * (i11 - i01));
            }
            if (grad_flow) {
                grad_flow->at(r, c, 0) = c_clamped ? T(0) : gdx;
                grad_flow->at(r, c, 1) = r_clamped ? T(0) : gdy;
            }
        }
    }
}

template <typename T>
TensorT<T> warp_bilinear_map(const TensorT<T>& map, const TensorT<T>& flow) {
    if (map.shape.size() != 2) throw std::invalid_argument("warp map: map must be H x W");
    TensorT<T> as3 = map;
    as3.shape = {map.dim(0), map.dim(1), 1};
    TensorT<T> out = warp_bilinear(as3, flow);
    out.shape = {map.dim(0), map.dim(1)};
    return out;
}

template <typename T>
TensorT<T> resize_down2(const TensorT<T>& image) {
    if (image.shape.size() != 3) throw std::invalid_argument("resize: image must be H x W x C");
    const int h = image.dim(0), w = image.dim(1), ch = image.dim(2);
    if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("resize_down2: dims must be even");
    TensorT<T> out({h / 2, w / 2, ch});
    for (int r = 0; r < h / 2; ++r)
        for (int c = 0; c < w / 2; ++c)
            for (int k = 0; k < ch; ++k)
                out.at(r, c, k) = (image.at(2 * r, 2 * c, k) + image.at(2 * r, 2 * c + 1, k) +
                                   image.at(2 * r + 1, 2 * c, k) + image.at(2 * r + 1, 2 * c + 1, k)) /
                                  T(4);
    return out;
}

template <typename T>
TensorT<T> resize_down2_grad(const TensorT<T>& grad_out) {
    const int h = grad_out.dim(0), w = grad_out.dim(1), ch = grad_out.dim(2);
    TensorT<T> g({h * 2, w * 2, ch});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < ch; ++k) {
                const T v = grad_out.at(r, c, k) / T(4);
                g.at(2 * r, 2 * c, k) = v;
                g.at(2 * r, 2 * c + 1, k) = v;
                g.at(2 * r + 1, 2 * c, k) = v;
                g.at(2 * r + 1, 2 * c + 1, k) = v;
            }
    return g;
}

namespace {

// Half-pixel-center source coordinate and blend weights for up2.
struct UpTap {
    int lo, hi;
    double w_hi;
};
inline UpTap up_tap(int out_i, int in_n) {
    const double src = (out_i + 0.5) / 2.0 - 0.5;
    double clamped = std::min(std::max(src, 0.0), static_cast<double>(in_n - 1));
    UpTap t;
    t.lo = static_cast<int>(std::floor(clamped));
    t.hi = std::min(t.lo + 1, in_n - 1);
    t.w_hi = clamped - t.lo;
    return t;
}

} // namespace

template <typename T>
TensorT<T> resize_up2(const TensorT<T>& image) {
    if (image.shape.size() != 3) throw std::invalid_argument("resize: image must be H x W x C");
    const int h = image.dim(0), w = image.dim(1), ch = image.dim(2);
    TensorT<T> out({h * 2, w * 2, ch});
    for (int r = 0; r < 2 * h; ++r) {
        const UpTap tr = up_tap(r, h);
        for (int c = 0; c < 2 * w; ++c) {
            const UpTap tc = up_tap(c, w);
            for (int k = 0; k < ch; ++k) {
                const T top = static_cast<T>((1.0 - tc.w_hi)) * image.at(tr.lo, tc.lo, k) +
                              static_cast<T>(tc.w_hi) * image.at(tr.lo, tc.hi, k);
                const T bot = static_cast<T>((1.0 - tc.w_hi)) * image.at(tr.hi, tc.lo, k) +
                              static_cast<T>(tc.w_hi) * image.at(tr.hi, tc.hi, k);
                out.at(r, c, k) = static_cast<T>((1.0 - tr.w_hi)) * top + static_cast<T>(tr.w_hi) * bot;
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> resize_up2_grad(const TensorT<T>& grad_out) {
    const int h2 = grad_out.dim(0), w2 = grad_out.dim(1), ch = grad_out.dim(2);
    const int h = h2 / 2, w = w2 / 2;
    TensorT<T> g({h, w, ch});
    for (int r = 0; r < h2; ++r) {
        const UpTap tr = up_tap(r, h);
        for (int c = 0; c < w2; ++c) {
            const UpTap tc = up_tap(c, w);
            for (int k = 0; k < ch; ++k) {
                const T v = grad_out.at(r, c, k);
                g.at(tr.lo, tc.lo, k) += static_cast<T>((1.0 - tr.w_hi) * (1.0 - tc.w_hi)) * v;
                g.at(tr.lo, tc.hi, k) += static_cast<T>((1.0 - tr.w_hi) * tc.w_hi) * v;
                g.at(tr.hi, tc.lo, k) += static_cast<T>(tr.w_hi * (1.0 - tc.w_hi)) * v;
                g.at(tr.hi, tc.hi, k) += static_cast<T>(tr.w_hi * tc.w_hi) * v;
            }
        }
    }
    return g;
}

namespace {

template <typename T>
void check_conv(const TensorT<T>& input, const ConvLayerT<T>& layer) {
    const auto& ks = layer.kernel.shape;
    if (ks.size() != 4) throw std::invalid_argument("conv: kernel must be kh x kw x cin x cout");
    if (ks[0] % 2 == 0 || ks[1] % 2 == 0) throw std::invalid_argument("conv: kernel dims must be odd");
    const size_t rank = input.shape.size();
    if (rank != 3 && rank != 4) throw std::invalid_argument("conv: input must be HWC or BHWC");
    const int cin = input.shape[rank - 1];
    if (cin != ks[2]) throw std::invalid_argument("conv: channel mismatch");
    if (layer.bias.shape.size() != 1 || layer.bias.dim(0) != ks[3])
        throw std::invalid_argument("conv: bias must be cout");
}

// im2col for same-padding stride-1: rows = b*h*w patches, cols = kh*kw*cin
template <typename T>
void im2col(const T* in, int b, int h, int w, int cin, int kh, int kw, T* col) {
    const int pr = kh / 2, pc = kw / 2;
    const size_t k_total = static_cast<size_t>(kh) * kw * cin;
    for (int bi = 0; bi < b; ++bi) {
        const T* img = in + static_cast<size_t>(bi) * h * w * cin;
        T* dst_base = col + static_cast<size_t>(bi) * h * w * k_total;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                T* dst = dst_base + (static_cast<size_t>(r) * w + c) * k_total;
                for (int dr = 0; dr < kh; ++dr) {
                    const int rr = r + dr - pr;
                    for (int dc = 0; dc < kw; ++dc) {
                        const int cc = c + dc - pc;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w) {
                            for (int k = 0; k < cin; ++k) *dst++ = T(0);
                        } else {
                            const T* src = img + (static_cast<size_t>(rr) * w + cc) * cin;
                            for (int k = 0; k < cin; ++k) *dst++ = src[k];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int b, int h, int w, int cin, int kh, int kw, T* in_grad) {
    const int pr = kh / 2, pc = kw / 2;
    const size_t k_total = static_cast<size_t>(kh) * kw * cin;
    for (int bi = 0; bi < b; ++bi) {
        T* img = in_grad + static_cast<size_t>(bi) * h * w * cin;
        const T* src_base = col + static_cast<size_t>(bi) * h * w * k_total;
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const T* src = src_base + (static_cast<size_t>(r) * w + c) * k_total;
                for (int dr = 0; dr < kh; ++dr) {
                    const int rr = r + dr - pr;
                    for (int dc = 0; dc < kw; ++dc) {
                        const int cc = c + dc - pc;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w) {
                            src += cin;
                        } else {
                            T* dst = img + (static_cast<size_t>(rr) * w + cc) * cin;
                            for (int k = 0; k < cin; ++k) dst[k] += *src++;
                        }
                    }
                }
            }
        }
    }
}

} // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const ConvLayerT<T>& layer) {
    check_conv(input, layer);
    const bool batched = input.shape.size() == 4;
    const int b = batched ? input.dim(0) : 1;
    const int h = input.dim(batched ? 1 : 0), w = input.dim(batched ? 2 : 1);
    const int cin = layer.kernel.dim(2), cout = layer.kernel.dim(3);
    const int kh = layer.kernel.dim(0), kw = layer.kernel.dim(1);
    const int n = b * h * w, k = kh * kw * cin;

    std::vector<T> col(static_cast<size_t>(n) * k);
    im2col(input.data.data(), b, h, w, cin, kh, kw, col.data());

    TensorT<T> out(batched ? std::vector<int>{b, h, w, cout} : std::vector<int>{h, w, cout});
    gemm(false, false, n, cout, k, T(1), col.data(), k, layer.kernel.data.data(), cout, T(0),
         out.data.data(), cout);

    const T slope = static_cast<T>(kLeakySlope);
    for (int i = 0; i < n; ++i) {
        T* row = out.data.data() + static_cast<size_t>(i) * cout;
        for (int c = 0; c < cout; ++c) {
            T v = row[c] + layer.bias[static_cast<size_t>(c)];
            if (layer.act == Activation::LeakyRelu && v < T(0)) v *= slope;
            row[c] = v;
        }
    }
    return out;
}

template <typename T>
ConvGradsT<T> conv2d_grad(const TensorT<T>& input, const ConvLayerT<T>& layer,
                          const TensorT<T>& output, const TensorT<T>& grad_out) {
    check_conv(input, layer);
    if (!grad_out.same_shape(output)) throw std::invalid_argument("conv grad: shape mismatch");
    const bool batched = input.shape.size() == 4;
    const int b = batched ? input.dim(0) : 1;
    const int h = input.dim(batched ? 1 : 0), w = input.dim(batched ? 2 : 1);
    const int cin = layer.kernel.dim(2), cout = layer.kernel.dim(3);
    const int kh = layer.kernel.dim(0), kw = layer.kernel.dim(1);
    const int n = b * h * w, k = kh * kw * cin;

    // chain through the rectifier; mask recovered from output sign
    std::vector<T> dpre(grad_out.data.begin(), grad_out.data.end());
    if (layer.act == Activation::LeakyRelu) {
        const T slope = static_cast<T>(kLeakySlope);
        for (size_t i = 0; i < dpre.size(); ++i)
            if (output.data[i] <= T(0)) dpre[i] *= slope;
    }

    ConvGradsT<T> g;
    g.bias = TensorT<T>({cout});
    for (int i = 0; i < n; ++i) {
        const T* row = dpre.data() + static_cast<size_t>(i) * cout;
        for (int c = 0; c < cout; ++c) g.bias[static_cast<size_t>(c)] += row[c];
    }

    std::vector<T> col(static_cast<size_t>(n) * k);
    im2col(input.data.data(), b, h, w, cin, kh, kw, col.data());

    g.kernel = TensorT<T>(layer.kernel.shape);
    gemm(true, false, k, cout, n, T(1), col.data(), k, dpre.data(), cout, T(0),
         g.kernel.data.data(), cout);

    std::vector<T> dcol(static_cast<size_t>(n) * k);
    gemm(false, true, n, k, cout, T(1), dpre.data(), cout, layer.kernel.data.data(), cout, T(0),
         dcol.data(), k);
    g.input = TensorT<T>(input.shape);
    col2im(dcol.data(), b, h, w, cin, kh, kw, g.input.data.data());
    return g;
}

template <typename T>
LossT<T> charbonnier_loss(const TensorT<T>& a, const TensorT<T>& b, double eps) {
    if (!a.same_shape(b)) throw std::invalid_argument("photometric loss: shape mismatch");
    LossT<T> out;
    out.grad = TensorT<T>(a.shape);
    const double n = static_cast<double>(a.numel());
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        const double s = std::sqrt(d * d + eps * eps);
        acc += s;
        out.grad[i] = static_cast<T>(s > 0.0 ? d / (s * n) : 0.0);
    }
    out.value = acc / n;
    return out;
}

template <typename T>
LossT<T> flow_smoothness(const TensorT<T>& flow) {
    if (flow.shape.size() != 3 || flow.dim(2) != 2)
        throw std::invalid_argument("smoothness: flow must be H x W x 2");
    const int h = flow.dim(0), w = flow.dim(1);
    LossT<T> out;
    out.grad = TensorT<T>(flow.shape);
    const size_t terms = 2ull * (static_cast<size_t>(h) * (w - 1) + static_cast<size_t>(h - 1) * w);
    if (terms == 0) return out;
    double acc = 0.0;
    const double inv = 1.0 / static_cast<double>(terms);
    for (int k = 0; k < 2; ++k) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c + 1 < w; ++c) {
                const double d = static_cast<double>(flow.at(r, c + 1, k)) - flow.at(r, c, k);
                acc += std::abs(d);
                const T s = static_cast<T>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv);
                out.grad.at(r, c + 1, k) += s;
                out.grad.at(r, c, k) -= s;
            }
        for (int r = 0; r + 1 < h; ++r)
            for (int c = 0; c < w; ++c) {
                const double d = static_cast<double>(flow.at(r + 1, c, k)) - flow.at(r, c, k);
                acc += std::abs(d);
                const T s = static_cast<T>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv);
                out.grad.at(r + 1, c, k) += s;
                out.grad.at(r, c, k) -= s;
            }
    }
    out.value = acc * inv;
    return out;
}

GradCheckReport grad_check(const std::string& kernel_name, TensorD& param,
                           const TensorD& analytic, const std::function<double()>& eval,
                           double step) {
    if (!param.same_shape(analytic)) throw std::invalid_argument("grad_check: shape mismatch");
    GradCheckReport report;
    report.kernel = kernel_name;
    for (size_t i = 0; i < param.numel(); ++i) {
        const double keep = param[i];
        param[i] = keep + step;
        const double up = eval();
        param[i] = keep - step;
        const double down = eval();
        param[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double an = analytic[i];
        const double scale = std::max(std::abs(fd), std::abs(an));
        const double rel = scale < 1e-7 ? 0.0 : std::abs(fd - an) / scale;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    return report;
}

#define VISMPC_INSTANTIATE(T)                                                                  \
    template TensorT<T> warp_bilinear<T>(const TensorT<T>&, const TensorT<T>&);                \
    template void warp_bilinear_grad<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                        TensorT<T>*, TensorT<T>*);                             \
    template TensorT<T> warp_bilinear_map<T>(const TensorT<T>&, const TensorT<T>&);            \
    template TensorT<T> resize_down2<T>(const TensorT<T>&);                                    \
    template TensorT<T> resize_down2_grad<T>(const TensorT<T>&);                               \
    template TensorT<T> resize_up2<T>(const TensorT<T>&);                                      \
    template TensorT<T> resize_up2_grad<T>(const TensorT<T>&);                                 \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const ConvLayerT<T>&);                    \
    template ConvGradsT<T> conv2d_grad<T>(const TensorT<T>&, const ConvLayerT<T>&,             \
                                          const TensorT<T>&, const TensorT<T>&);               \
    template LossT<T> charbonnier_loss<T>(const TensorT<T>&, const TensorT<T>&, double);       \
    template LossT<T> flow_smoothness<T>(const TensorT<T>&);

VISMPC_INSTANTIATE(float)
VISMPC_INSTANTIATE(double)
#undef VISMPC_INSTANTIATE

} // namespace vismpc
