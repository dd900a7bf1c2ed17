#pragma once

#include <string>
#include <vector>

#include "vismpc/checkpoint.h"
#include "vismpc/kernels.h"
#include "vismpc/rng.h"

namespace vismpc {

// Fully convolutional encoder-decoder shared by the registration network and
// the video predictor: three stride-1 conv layers each followed by bilinear
// downsampling, three more each followed by bilinear upsampling, and a linear
// 1x1 head. Spatial dims must be divisible by 8.
struct ConvNetConfig {
    int in_channels = 6;
    std::vector<int> encoder_widths = {16, 32, 64};
    std::vector<int> decoder_widths = {32, 16, 16};
    int out_channels = 2;

    bool operator==(const ConvNetConfig&) const = default;
};

template <typename T>
class ConvNetT {
public:
    static ConvNetT create(const ConvNetConfig& cfg, Rng& rng);

    // input: H x W x Cin or B x H x W x Cin; output has out_channels.
    TensorT<T> forward(const TensorT<T>& input) const;

    struct Trace {
        std::vector<TensorT<T>> inputs;   // what each conv consumed
        std::vector<TensorT<T>> outputs;  // what each conv produced (pre-resize)
        bool batched = false;
    };
    TensorT<T> forward(const TensorT<T>& input, Trace* trace) const;

    struct Grads {
        std::vector<TensorT<T>> kernels;
        std::vector<TensorT<T>> biases;
        TensorT<T> input;
    };
    Grads backward(const Trace& trace, const TensorT<T>& grad_out,
                   bool need_input_grad = false) const;

    size_t layer_count() const { return layers_.size(); }
    std::vector<TensorT<T>*> parameters();
    std::vector<NamedTensor> named_parameters() const;
    void load_named(const std::vector<NamedTensor>& tensors);

    const ConvNetConfig& config() const { return cfg_; }

private:
    ConvNetConfig cfg_;
    std::vector<ConvLayerT<T>> layers_;  // enc0..2, dec0..2, head
    std::vector<std::string> names_;
};

using ConvNet = ConvNetT<float>;

// checkpoint helpers shared by both models
void save_convnet(const std::string& path, const ConvNet& net);
ConvNet load_convnet(const std::string& path, const ConvNetConfig& expected);

} // namespace vismpc
