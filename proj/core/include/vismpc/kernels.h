#pragma once

#include <functional>
#include <string>

#include "vismpc/tensor.h"

// Differentiable numeric kernels: bilinear warping/resizing, same-padding
// stride-1 convolution, Charbonnier photometric loss, flow smoothness.
// Every kernel has a hand-written backward pass; correctness is pinned by
// nested-loop oracles and finite-difference checks in the test suite.
namespace vismpc {

enum class Activation { None, LeakyRelu };

// slope of the leaky rectifier fused into conv layers
inline constexpr double kLeakySlope = 0.1;

// ---- bilinear warp (backward-warp convention) ------------------------------
// out(p) = image sampled at p + flow(p), samples clamped to the border.
// image: H x W x C, flow: H x W x 2 with channel 0 = dx (columns),
// channel 1 = dy (rows). Differentiable w.r.t. both image and flow.
template <typename T>
TensorT<T> warp_bilinear(const TensorT<T>& image, const TensorT<T>& flow);

template <typename T>
void warp_bilinear_grad(const TensorT<T>& image, const TensorT<T>& flow,
                        const TensorT<T>& grad_out, TensorT<T>* grad_image,
                        TensorT<T>* grad_flow);

// single-channel variant for H x W belief maps
template <typename T>
TensorT<T> warp_bilinear_map(const TensorT<T>& map, const TensorT<T>& flow);

// ---- bilinear resize by a factor of 2 --------------------------------------
// Half-pixel-center sampling; down2 of an H x W x C image averages each
// 2x2 block, up2 doubles both spatial dims.
template <typename T>
TensorT<T> resize_down2(const TensorT<T>& image);
template <typename T>
TensorT<T> resize_down2_grad(const TensorT<T>& grad_out);
template <typename T>
TensorT<T> resize_up2(const TensorT<T>& image);
template <typename T>
TensorT<T> resize_up2_grad(const TensorT<T>& grad_out);

// ---- convolution ------------------------------------------------------------
// Kernel layout kh x kw x cin x cout, odd spatial size, same padding,
// stride 1, optional fused leaky rectifier.
template <typename T>
struct ConvLayerT {
    TensorT<T> kernel;
    TensorT<T> bias; // cout
    Activation act = Activation::LeakyRelu;
};
using ConvLayer = ConvLayerT<float>;

// input: H x W x Cin or B x H x W x Cin; output matches with Cout channels.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const ConvLayerT<T>& layer);

template <typename T>
struct ConvGradsT {
    TensorT<T> input;
    TensorT<T> kernel;
    TensorT<T> bias;
};

// output must be the tensor produced by conv2d for (input, layer); the
// rectifier mask is recovered from its sign.
template <typename T>
ConvGradsT<T> conv2d_grad(const TensorT<T>& input, const ConvLayerT<T>& layer,
                          const TensorT<T>& output, const TensorT<T>& grad_out);

// ---- losses -----------------------------------------------------------------
// Generalized Charbonnier photometric penalty, mean over all elements:
//   mean sqrt((a - b)^2 + eps^2)
// grad w.r.t. b is the negative of grad_a.
inline constexpr double kCharbonnierEps = 1e-3;

template <typename T>
struct LossT {
    double value = 0.0;
    TensorT<T> grad;
};

template <typename T>
LossT<T> charbonnier_loss(const TensorT<T>& a, const TensorT<T>& b,
                          double eps = kCharbonnierEps);

// Mean L1 norm of first spatial differences of both flow channels in x and y.
template <typename T>
LossT<T> flow_smoothness(const TensorT<T>& flow);

// ---- gradient verification ---------------------------------------------------
// Central finite differences (default step 1e-5) against an analytic gradient.
// `eval` must recompute the scalar objective after `param` is perturbed.
// Meant to run with TensorD; single precision is too noisy for this.
struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t worst_index = 0;
    std::string kernel;
    bool pass(double tol) const { return max_rel_error < tol; }
};

GradCheckReport grad_check(const std::string& kernel_name, TensorD& param,
                           const TensorD& analytic,
                           const std::function<double()>& eval,
                           double step = 1e-5);

} // namespace vismpc
