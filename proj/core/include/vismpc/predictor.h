#pragma once

#include <string>
#include <vector>

#include "vismpc/convnet.h"
#include "vismpc/optim.h"
#include "vismpc/image_io.h"
#include "vismpc/sim.h"
#include "vismpc/trajstore.h"

// Action-conditioned flow-transformation video predictor. Each planned action
// group maps (current frame, action tiled over space) to one flow field; the
// frame and every designated-pixel belief map are advanced by that same flow,
// the beliefs renormalized after each warp.
namespace vismpc::pred {

// belief over a designated pixel's location: H x W, nonnegative, sums to 1
using PixelDist = Tensor;

PixelDist make_delta(Pixel p, int h, int w);
PixelDist renormalize(PixelDist p);
bool is_normalized(const PixelDist& p, double tol = 1e-6);
PixelF expected_position(const PixelDist& p);

struct PredictorConfig {
    ConvNetConfig net{.in_channels = 7,  // 3 frame + 4 action channels
                      .encoder_widths = {6, 12, 24},
                      .decoder_widths = {12, 6, 6},
                      .out_channels = 2};
    int horizon = 15;
    int action_repeat = 3;
};

class Predictor {
public:
    Predictor(PredictorConfig cfg, ConvNet net) : cfg_(cfg), net_(std::move(net)) {}
    static Predictor create(const PredictorConfig& cfg, uint64_t seed);

    // Incremental rollout state. The flow is re-evaluated whenever the phase
    // wraps around the action repeat, and reused within a group.
    struct RollState {
        Frame frame;
        std::vector<PixelDist> dists;
        Tensor group_flow;
        int phase = 0;
    };
    RollState begin(const Frame& start, const std::vector<PixelDist>& dists) const;
    void step(RollState& state, const sim::Action& action) const;

    struct Rollout {
        std::vector<Frame> frames;                  // horizon entries
        std::vector<std::vector<PixelDist>> dists;  // [step][entry]
    };
    Rollout predict(const Frame& start, const std::vector<PixelDist>& dists,
                    const std::vector<sim::Action>& actions) const;

    // one flow per batch row for (frame, action); input B x H x W x 3
    Tensor eval_flows(const Tensor& frames, const std::vector<sim::Action>& actions) const;

    const PredictorConfig& config() const { return cfg_; }
    const ConvNet& net() const { return net_; }
    ConvNet& net_mut() { return net_; }

    void save(const std::string& path) const;
    static Predictor load(const std::string& path, const PredictorConfig& cfg);

private:
    Tensor stack_input(const Tensor& frames, const std::vector<sim::Action>& actions) const;

    PredictorConfig cfg_;
    ConvNet net_;
};

struct PredTrainConfig {
    PredictorConfig predictor;
    long steps = 4000;
    int batch = 8;
    int train_horizon = 5;  // rollout length per training window
    OptimConfig optim = OptimConfig::adam(1e-3);
    uint64_t seed = 0;
    std::string loss_csv;
};

struct PredTrainStats {
    std::vector<float> losses;
    double final_loss_window = 0.0;
};

Predictor train_predictor(const data::DatasetIndex& dataset, const PredTrainConfig& cfg,
                          PredTrainStats* stats = nullptr);

} // namespace vismpc::pred
