#include "vismpc/convnet.h"

#include <cmath>
#include <stdexcept>

namespace vismpc {

namespace {

// apply a rank-3 spatial op across an optional batch dimension
template <typename T, typename Fn>
TensorT<T> batch_apply(const TensorT<T>& x, Fn&& fn) {
    if (x.shape.size() == 3) return fn(x);
    const int b = x.dim(0);
    TensorT<T> slice({x.dim(1), x.dim(2), x.dim(3)});
    TensorT<T> out;
    for (int i = 0; i < b; ++i) {
        std::copy_n(x.data.begin() + static_cast<size_t>(i) * slice.numel(), slice.numel(),
                    slice.data.begin());
        TensorT<T> y = fn(slice);
        if (i == 0) out = TensorT<T>({b, y.dim(0), y.dim(1), y.dim(2)});
        std::copy_n(y.data.begin(), y.numel(), out.data.begin() + static_cast<size_t>(i) * y.numel());
    }
    return out;
}

} // namespace

template <typename T>
ConvNetT<T> ConvNetT<T>::create(const ConvNetConfig& cfg, Rng& rng) {
    if (cfg.encoder_widths.size() != 3 || cfg.decoder_widths.size() != 3)
        throw std::invalid_argument("convnet: expects exactly three encoder and decoder layers");
    ConvNetT net;
    net.cfg_ = cfg;
    int cin = cfg.in_channels;
    auto add = [&](const std::string& name, int kh, int kw, int cout, Activation act,
                   double init_scale) {
        ConvLayerT<T> layer;
        layer.kernel = TensorT<T>({kh, kw, cin, cout});
        const double stddev = init_scale * std::sqrt(2.0 / (kh * kw * cin));
        layer.kernel.fill_normal(rng, stddev);
        layer.bias = TensorT<T>({cout});
        layer.act = act;
        net.layers_.push_back(std::move(layer));
        net.names_.push_back(name);
        cin = cout;
    };
    for (int i = 0; i < 3; ++i)
        add("enc" + std::to_string(i), 3, 3, cfg.encoder_widths[static_cast<size_t>(i)],
            Activation::LeakyRelu, 1.0);
    for (int i = 0; i < 3; ++i)
        add("dec" + std::to_string(i), 3, 3, cfg.decoder_widths[static_cast<size_t>(i)],
            Activation::LeakyRelu, 1.0);
    add("head", 1, 1, cfg.out_channels, Activation::None, 1.0);
    return net;
}

template <typename T>
TensorT<T> ConvNetT<T>::forward(const TensorT<T>& input) const {
    return forward(input, nullptr);
}

template <typename T>
TensorT<T> ConvNetT<T>::forward(const TensorT<T>& input, Trace* trace) const {
    const bool batched = input.shape.size() == 4;
    const int h = input.dim(batched ? 1 : 0), w = input.dim(batched ? 2 : 1);
    if (h % 8 != 0 || w % 8 != 0)
        throw std::invalid_argument("convnet: spatial dims must be divisible by 8");
    if (trace) {
        trace->inputs.clear();
        trace->outputs.clear();
        trace->batched = batched;
    }
    TensorT<T> x = input;
    for (size_t i = 0; i < layers_.size(); ++i) {
        if (trace) trace->inputs.push_back(x);
        TensorT<T> y = conv2d(x, layers_[i]);
        if (trace) trace->outputs.push_back(y);
        if (i < 3) {
            x = batch_apply(y, [](const TensorT<T>& t) { return resize_down2(t); });
        } else if (i < 6) {
            x = batch_apply(y, [](const TensorT<T>& t) { return resize_up2(t); });
        } else {
            x = std::move(y);
        }
    }
    return x;
}

template <typename T>
typename ConvNetT<T>::Grads ConvNetT<T>::backward(const Trace& trace, const TensorT<T>& grad_out,
                                                  bool need_input_grad) const {
    if (trace.inputs.size() != layers_.size())
        throw std::invalid_argument("convnet backward: trace does not match network");
    Grads grads;
    grads.kernels.resize(layers_.size());
    grads.biases.resize(layers_.size());
    TensorT<T> g = grad_out;
    for (size_t idx = layers_.size(); idx-- > 0;) {
        if (idx >= 3 && idx < 6) {
            // undo the upsample that followed this conv
            g = batch_apply(g, [](const TensorT<T>& t) { return resize_up2_grad(t); });
        }
        const auto layer_grads = conv2d_grad(trace.inputs[idx], layers_[idx], trace.outputs[idx], g);
        grads.kernels[idx] = layer_grads.kernel;
        grads.biases[idx] = layer_grads.bias;
        g = layer_grads.input;
        if (idx > 0 && idx <= 3) {
            // undo the downsample that preceded this conv
            g = batch_apply(g, [](const TensorT<T>& t) { return resize_down2_grad(t); });
        }
        if (idx == 0 && need_input_grad) grads.input = std::move(g);
    }
    return grads;
}

template <typename T>
std::vector<TensorT<T>*> ConvNetT<T>::parameters() {
    std::vector<TensorT<T>*> out;
    for (auto& layer : layers_) {
        out.push_back(&layer.kernel);
        out.push_back(&layer.bias);
    }
    return out;
}

template <typename T>
std::vector<NamedTensor> ConvNetT<T>::named_parameters() const {
    std::vector<NamedTensor> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
        out.push_back({names_[i] + ".kernel", layers_[i].kernel.template cast<float>()});
        out.push_back({names_[i] + ".bias", layers_[i].bias.template cast<float>()});
    }
    return out;
}

template <typename T>
void ConvNetT<T>::load_named(const std::vector<NamedTensor>& tensors) {
    if (tensors.size() != layers_.size() * 2)
        throw std::runtime_error("convnet: checkpoint layer count mismatch");
    for (size_t i = 0; i < layers_.size(); ++i) {
        const NamedTensor& k = tensors[2 * i];
        const NamedTensor& b = tensors[2 * i + 1];
        if (k.name != names_[i] + ".kernel" || b.name != names_[i] + ".bias")
            throw std::runtime_error("convnet: unexpected tensor name " + k.name);
        if (k.tensor.shape != layers_[i].kernel.shape || b.tensor.shape != layers_[i].bias.shape)
            throw std::runtime_error("convnet: checkpoint shape mismatch at " + k.name);
        layers_[i].kernel = k.tensor.template cast<T>();
        layers_[i].bias = b.tensor.template cast<T>();
    }
}

template class ConvNetT<float>;
template class ConvNetT<double>;

void save_convnet(const std::string& path, const ConvNet& net) {
    save_checkpoint(path, net.named_parameters());
}

ConvNet load_convnet(const std::string& path, const ConvNetConfig& expected) {
    Rng rng(0);
    ConvNet net = ConvNet::create(expected, rng);
    net.load_named(load_checkpoint(path));
    return net;
}

} // namespace vismpc
