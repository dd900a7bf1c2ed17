#pragma once

#include <string>
#include <vector>

#include "vismpc/convnet.h"
#include "vismpc/optim.h"
#include "vismpc/image_io.h"
#include "vismpc/tensor.h"
#include "vismpc/trajstore.h"

// Self-supervised image registration: the network consumes two frames stacked
// on channels and emits a flow field that warps the first onto the second.
// Training warps random frame pairs onto each other in both directions under
// a photometric + smoothness objective, with the temporal gap between the
// pair ramped up as a curriculum.
namespace vismpc::reg {

struct CurriculumSchedule {
    int h_start = 1;
    int h_end = 8;
    long ramp_steps = 2000;
    long total_steps = 6000;

    // round(linear ramp), clamped to [h_start, h_end]
    int gap_at(long step) const;
};

struct RegConfig {
    ConvNetConfig net{.in_channels = 6,
                      .encoder_widths = {16, 32, 64},
                      .decoder_widths = {32, 16, 16},
                      .out_channels = 2};
    int neighborhood = 5;  // median window for point transport
};

class Registration {
public:
    Registration(RegConfig cfg, ConvNet net) : cfg_(cfg), net_(std::move(net)) {}
    static Registration create(const RegConfig& cfg, uint64_t seed);

    // flow F such that warp(current, F) approximates target; evaluating the
    // flow at a pixel of `target` transports it into `current`
    Tensor flow_to(const Frame& current, const Frame& target) const;

    Frame warp_to(const Frame& current, const Tensor& flow) const;

    const RegConfig& config() const { return cfg_; }
    const ConvNet& net() const { return net_; }

    void save(const std::string& path) const;
    static Registration load(const std::string& path, const RegConfig& cfg);

private:
    RegConfig cfg_;
    ConvNet net_;
};

// d + per-axis median of the flow over an odd neighborhood window around d,
// rounded and clamped in-bounds.
Pixel transport_point(const Tensor& flow, Pixel d, int neighborhood = 5);

// L2 norm over color channels of target(d) - warped(d); the raw registration
// confidence input.
double point_photometric_error(const Frame& target, const Frame& warped, Pixel d);

struct RegTrainConfig {
    CurriculumSchedule schedule;
    RegConfig reg;
    int batch = 8;
    double smoothness_weight = 0.1;
    // photometric terms evaluated at full, half, ... resolution; the coarse
    // scales keep a loss gradient alive for displacements beyond the bilinear
    // sampling radius
    int photometric_scales = 3;
    OptimConfig optim = OptimConfig::adam(1e-3);
    uint64_t seed = 0;
    std::string loss_csv;  // per-iteration loss curve, empty to skip
};

struct TrainStats {
    std::vector<float> losses;
    double final_loss_window = 0.0;  // mean over the last 100 iterations
};

Registration train_registration(const data::DatasetIndex& dataset, const RegTrainConfig& cfg,
                                TrainStats* stats = nullptr);

} // namespace vismpc::reg
