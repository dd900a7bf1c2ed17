#include "vismpc/predictor.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vismpc/optim.h"

namespace vismpc::pred {

namespace {

// frame channels plus the action tiled at every spatial position, scaled so
// the centimeter-range action values land in the same regime as colors
Tensor stack_pred_input(const Tensor& frames, const std::vector<sim::Action>& actions) {
    if (frames.shape.size() != 4)
        throw std::invalid_argument("predictor input: frames must be B x H x W x 3");
    const int b = frames.dim(0), h = frames.dim(1), w = frames.dim(2);
    if (static_cast<int>(actions.size()) != b)
        throw std::invalid_argument("predictor input: one action per batch row required");
    Tensor x({b, h, w, 7});
    for (int i = 0; i < b; ++i) {
        const float a[4] = {static_cast<float>(actions[static_cast<size_t>(i)].dx) * 10.0f,
                            static_cast<float>(actions[static_cast<size_t>(i)].dy) * 10.0f,
                            static_cast<float>(actions[static_cast<size_t>(i)].dz) * 10.0f,
                            static_cast<float>(actions[static_cast<size_t>(i)].dtheta)};
        const float* src = frames.data.data() + static_cast<size_t>(i) * h * w * 3;
        float* dst = x.data.data() + static_cast<size_t>(i) * h * w * 7;
        for (int p = 0; p < h * w; ++p) {
            dst[p * 7 + 0] = src[p * 3 + 0];
            dst[p * 7 + 1] = src[p * 3 + 1];
            dst[p * 7 + 2] = src[p * 3 + 2];
            dst[p * 7 + 3] = a[0];
            dst[p * 7 + 4] = a[1];
            dst[p * 7 + 5] = a[2];
            dst[p * 7 + 6] = a[3];
        }
    }
    return x;
}

} // namespace

PixelDist make_delta(Pixel p, int h, int w) {
    PixelDist d({h, w});
    d.at(std::clamp(p.row, 0, h - 1), std::clamp(p.col, 0, w - 1)) = 1.0f;
    return d;
}

PixelDist renormalize(PixelDist p) {
    double total = 0.0;
    for (size_t i = 0; i < p.numel(); ++i) {
        if (p[i] < 0.0f) p[i] = 0.0f;  // clip round-off
        total += p[i];
    }
    if (total <= 0.0) throw std::runtime_error("pixel distribution lost all mass");
    const float inv = static_cast<float>(1.0 / total);
    for (size_t i = 0; i < p.numel(); ++i) p[i] *= inv;
    return p;
}

bool is_normalized(const PixelDist& p, double tol) {
    double total = 0.0;
    for (size_t i = 0; i < p.numel(); ++i) {
        if (p[i] < -1e-7f) return false;
        total += p[i];
    }
    return std::abs(total - 1.0) <= tol;
}

PixelF expected_position(const PixelDist& p) {
    if (p.shape.size() != 2) throw std::invalid_argument("expected_position: map must be H x W");
    double total = 0.0, r_acc = 0.0, c_acc = 0.0;
    for (int r = 0; r < p.dim(0); ++r)
        for (int c = 0; c < p.dim(1); ++c) {
            const double v = p.at(r, c);
            total += v;
            r_acc += v * r;
            c_acc += v * c;
        }
    if (total <= 0.0) throw std::invalid_argument("expected_position: all-zero map");
    return {r_acc / total, c_acc / total};
}

Predictor Predictor::create(const PredictorConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    return Predictor(cfg, ConvNet::create(cfg.net, rng));
}

Tensor Predictor::stack_input(const Tensor& frames, const std::vector<sim::Action>& actions) const {
    return stack_pred_input(frames, actions);
}

Tensor Predictor::eval_flows(const Tensor& frames, const std::vector<sim::Action>& actions) const {
    return net_.forward(stack_pred_input(frames, actions));
}

Predictor::RollState Predictor::begin(const Frame& start,
                                      const std::vector<PixelDist>& dists) const {
    for (const PixelDist& p : dists)
        if (!is_normalized(p)) throw std::invalid_argument("predictor: unnormalized distribution");
    RollState s;
    s.frame = start;
    s.dists = dists;
    s.phase = 0;
    return s;
}

void Predictor::step(RollState& state, const sim::Action& action) const {
    if (state.phase % cfg_.action_repeat == 0) {
        Tensor batch({1, state.frame.dim(0), state.frame.dim(1), 3});
        std::copy_n(state.frame.data.begin(), state.frame.numel(), batch.data.begin());
        const Tensor flows = net_.forward(stack_pred_input(batch, {action}));
        state.group_flow = Tensor({state.frame.dim(0), state.frame.dim(1), 2});
        std::copy_n(flows.data.begin(), state.group_flow.numel(), state.group_flow.data.begin());
    }
    state.frame = warp_bilinear(state.frame, state.group_flow);
    for (PixelDist& p : state.dists) p = renormalize(warp_bilinear_map(p, state.group_flow));
    ++state.phase;
}

Predictor::Rollout Predictor::predict(const Frame& start, const std::vector<PixelDist>& dists,
                                      const std::vector<sim::Action>& actions) const {
    if (static_cast<int>(actions.size()) > cfg_.horizon)
        throw std::invalid_argument("predictor: action sequence exceeds the configured horizon");
    RollState s = begin(start, dists);
    Rollout out;
    out.frames.reserve(actions.size());
    out.dists.reserve(actions.size());
    for (const sim::Action& a : actions) {
        step(s, a);
        out.frames.push_back(s.frame);
        out.dists.push_back(s.dists);
    }
    return out;
}

void Predictor::save(const std::string& path) const { save_convnet(path, net_); }

Predictor Predictor::load(const std::string& path, const PredictorConfig& cfg) {
    return Predictor(cfg, load_convnet(path, cfg.net));
}

Predictor train_predictor(const data::DatasetIndex& dataset, const PredTrainConfig& cfg,
                          PredTrainStats* stats) {
    if (dataset.train.empty()) throw std::invalid_argument("train_predictor: empty dataset");
    Rng rng(cfg.seed);
    Rng init_rng(rng.next_u64());
    ConvNet net = ConvNet::create(cfg.predictor.net, init_rng);
    Optimizer opt(cfg.optim);

    std::vector<std::pair<size_t, data::TrajectoryRecord>> cache;
    const size_t cache_cap = 64;
    auto get_record = [&](size_t idx) -> const data::TrajectoryRecord& {
        for (auto& [k, r] : cache)
            if (k == idx) return r;
        if (cache.size() >= cache_cap) cache.erase(cache.begin());
        cache.emplace_back(idx, data::read_record_for_training(dataset.train_path(idx)));
        return cache.back().second;
    };

    std::ofstream loss_csv;
    if (!cfg.loss_csv.empty()) {
        loss_csv.open(cfg.loss_csv, std::ios::trunc);
        loss_csv << "step,loss\n";
    }

    const int h = kFrameH, w = kFrameW;
    const int b = cfg.batch;
    const size_t frame_sz = static_cast<size_t>(h) * w * 3;
    const size_t flow_sz = static_cast<size_t>(h) * w * 2;
    if (stats) stats->losses.reserve(static_cast<size_t>(cfg.steps));

    for (long step = 0; step < cfg.steps; ++step) {
        std::vector<data::Subsequence> windows;
        windows.reserve(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i) {
            const auto& record = get_record(rng.uniform_index(dataset.train.size()));
            const int view = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(record.views)));
            windows.push_back(data::sample_subsequence(record, cfg.train_horizon, view, rng));
        }

        Tensor frames({b, h, w, 3});
        for (int i = 0; i < b; ++i)
            std::copy_n(windows[static_cast<size_t>(i)].frames[0].data.begin(), frame_sz,
                        frames.data.begin() + static_cast<size_t>(i) * frame_sz);

        // rolled-out photometric loss; gradients are truncated at each step
        // boundary (the fed-back frame is treated as a constant input)
        double loss = 0.0;
        std::vector<Tensor> acc_k(net.layer_count()), acc_b(net.layer_count());
        const float norm = 1.0f / static_cast<float>(b * cfg.train_horizon);

        for (int t = 0; t < cfg.train_horizon; ++t) {
            std::vector<sim::Action> actions;
            actions.reserve(static_cast<size_t>(b));
            for (int i = 0; i < b; ++i)
                actions.push_back(windows[static_cast<size_t>(i)].actions[static_cast<size_t>(t)]);

            ConvNet::Trace trace;
            const Tensor flows = net.forward(stack_pred_input(frames, actions), &trace);

            Tensor dflows(flows.shape);
            Tensor next_frames({b, h, w, 3});
            for (int i = 0; i < b; ++i) {
                Frame frame({h, w, 3});
                std::copy_n(frames.data.begin() + static_cast<size_t>(i) * frame_sz, frame_sz,
                            frame.data.begin());
                Tensor flow({h, w, 2});
                std::copy_n(flows.data.begin() + static_cast<size_t>(i) * flow_sz, flow_sz,
                            flow.data.begin());
                const Frame predicted = warp_bilinear(frame, flow);
                const Frame& target = windows[static_cast<size_t>(i)].frames[static_cast<size_t>(t + 1)];
                const auto photo = charbonnier_loss(predicted, target);
                loss += photo.value;
                Tensor dflow;
                warp_bilinear_grad(frame, flow, photo.grad, static_cast<Tensor*>(nullptr), &dflow);
                for (size_t j = 0; j < flow_sz; ++j)
                    dflows[static_cast<size_t>(i) * flow_sz + j] = dflow[j] * norm;
                std::copy_n(predicted.data.begin(), frame_sz,
                            next_frames.data.begin() + static_cast<size_t>(i) * frame_sz);
            }

            const auto grads = net.backward(trace, dflows);
            for (size_t l = 0; l < net.layer_count(); ++l) {
                if (acc_k[l].numel() == 0) {
                    acc_k[l] = grads.kernels[l];
                    acc_b[l] = grads.biases[l];
                } else {
                    for (size_t j = 0; j < acc_k[l].numel(); ++j) acc_k[l][j] += grads.kernels[l][j];
                    for (size_t j = 0; j < acc_b[l].numel(); ++j) acc_b[l][j] += grads.biases[l][j];
                }
            }
            frames = std::move(next_frames);
        }
        loss /= static_cast<double>(b * cfg.train_horizon);
        if (!std::isfinite(loss)) throw std::runtime_error("train_predictor: loss diverged");

        std::vector<Tensor*> params = net.parameters();
        std::vector<const Tensor*> grad_ptrs;
        for (size_t l = 0; l < net.layer_count(); ++l) {
            grad_ptrs.push_back(&acc_k[l]);
            grad_ptrs.push_back(&acc_b[l]);
        }
        opt.step(params, grad_ptrs);

        if (stats) stats->losses.push_back(static_cast<float>(loss));
        if (loss_csv.is_open()) loss_csv << step << "," << loss << "\n";
    }

    if (stats) {
        const size_t n = stats->losses.size();
        const size_t tail = std::min<size_t>(100, n);
        double acc = 0.0;
        for (size_t i = n >= tail ? n - tail : 0; i < n; ++i) acc += stats->losses[i];
        stats->final_loss_window = tail ? acc / tail : 0.0;
    }
    return Predictor(cfg.predictor, std::move(net));
}

} // namespace vismpc::pred
