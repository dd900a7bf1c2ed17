#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "vismpc/convnet.h"
#include "vismpc/kernels.h"
#include "vismpc/rng.h"

using namespace vismpc;

namespace {

ConvNetConfig tiny_config() {
    ConvNetConfig cfg;
    cfg.in_channels = 6;
    cfg.encoder_widths = {2, 3, 4};
    cfg.decoder_widths = {3, 2, 2};
    cfg.out_channels = 2;
    return cfg;
}

} // namespace

TEST_CASE("convnet: output shape and finiteness") {
    Rng rng(1);
    auto net = ConvNet::create(tiny_config(), rng);
    Tensor x({8, 16, 6});
    x.fill_uniform(rng, 0.0, 1.0);
    const Tensor y = net.forward(x);
    CHECK(y.shape == std::vector<int>{8, 16, 2});
    CHECK(y.all_finite());
}

TEST_CASE("convnet: batched forward equals per-sample forward") {
    Rng rng(2);
    auto net = ConvNet::create(tiny_config(), rng);
    Tensor batch({3, 8, 8, 6});
    batch.fill_uniform(rng, 0.0, 1.0);
    const Tensor y = net.forward(batch);
    for (int b = 0; b < 3; ++b) {
        Tensor one({8, 8, 6});
        std::copy_n(batch.data.begin() + b * one.numel(), one.numel(), one.data.begin());
        const Tensor expect = net.forward(one);
        // GEMM blocking differs with batch size, so agreement is to rounding
        for (size_t i = 0; i < expect.numel(); ++i)
            CHECK(y[b * expect.numel() + i] == doctest::Approx(expect[i]).epsilon(1e-5));
    }
}

TEST_CASE("convnet: full training objective passes a finite-difference check") {
    // the composed gradient path used by registration training:
    //   loss = charbonnier(warp(I_a, net(x)), I_b) + 0.1 * smoothness(net(x))
    Rng rng(3);
    auto net = ConvNetT<double>::create(tiny_config(), rng);
    {
        // keep the check away from the rectifier and bilinear-sampling kinks:
        // bias activations off zero and flows off integer sample positions
        auto params = net.parameters();
        for (size_t i = 1; i < params.size(); i += 2)
            for (size_t j = 0; j < params[i]->numel(); ++j)
                (*params[i])[j] = 0.05 + 0.01 * static_cast<double>(j);
        TensorD& head_bias = *params.back();
        head_bias[0] = 0.37;
        head_bias[1] = -0.23;
    }
    TensorD img_a({8, 8, 3}), img_b({8, 8, 3});
    img_a.fill_uniform(rng, 0.0, 1.0);
    img_b.fill_uniform(rng, 0.0, 1.0);
    TensorD x({8, 8, 6});
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            for (int k = 0; k < 3; ++k) {
                x.at(r, c, k) = img_a.at(r, c, k);
                x.at(r, c, k + 3) = img_b.at(r, c, k);
            }

    auto eval = [&] {
        const TensorD flow = net.forward(x);
        const TensorD warped = warp_bilinear(img_a, flow);
        return charbonnier_loss(warped, img_b).value + 0.1 * flow_smoothness(flow).value;
    };

    ConvNetT<double>::Trace trace;
    const TensorD flow = net.forward(x, &trace);
    const TensorD warped = warp_bilinear(img_a, flow);
    const auto photo = charbonnier_loss(warped, img_b);
    TensorD dflow;
    warp_bilinear_grad(img_a, flow, photo.grad, static_cast<TensorD*>(nullptr), &dflow);
    const auto smooth = flow_smoothness(flow);
    for (size_t i = 0; i < dflow.numel(); ++i) dflow[i] += 0.1 * smooth.grad[i];
    const auto grads = net.backward(trace, dflow);

    auto params = net.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        const TensorD& analytic = (i % 2 == 0) ? grads.kernels[i / 2] : grads.biases[i / 2];
        const auto report = grad_check("convnet/param" + std::to_string(i), *params[i], analytic, eval);
        CAPTURE(i);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("convnet: checkpoint round-trips through the shared format") {
    Rng rng(4);
    auto net = ConvNet::create(tiny_config(), rng);
    const std::string path = "convnet_roundtrip.bin";
    save_convnet(path, net);
    const ConvNet loaded = load_convnet(path, tiny_config());
    Tensor x({8, 8, 6});
    x.fill_uniform(rng, 0.0, 1.0);
    const Tensor y1 = net.forward(x);
    const Tensor y2 = loaded.forward(x);
    CHECK(y1.data == y2.data);
    std::remove(path.c_str());
}

TEST_CASE("convnet: seeded creation is deterministic") {
    Rng rng_a(7), rng_b(7);
    auto a = ConvNet::create(tiny_config(), rng_a);
    auto b = ConvNet::create(tiny_config(), rng_b);
    const auto na = a.named_parameters();
    const auto nb = b.named_parameters();
    REQUIRE(na.size() == nb.size());
    for (size_t i = 0; i < na.size(); ++i) CHECK(na[i].tensor.data == nb[i].tensor.data);
}
