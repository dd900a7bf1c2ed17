#include "vismpc/regnet.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vismpc/optim.h"

namespace vismpc::reg {

namespace {

Tensor stack_pair(const Frame& current, const Frame& target) {
    const int h = current.dim(0), w = current.dim(1);
    Tensor x({h, w, 6});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < 3; ++k) {
                x.at(r, c, k) = current.at(r, c, k);
                x.at(r, c, k + 3) = target.at(r, c, k);
            }
    return x;
}

void check_frame(const Frame& f) {
    if (f.shape.size() != 3 || f.dim(2) != 3)
        throw std::invalid_argument("registration: frames must be H x W x 3");
}

} // namespace

int CurriculumSchedule::gap_at(long step) const {
    if (ramp_steps <= 0) return h_end;
    const double frac = static_cast<double>(step) / static_cast<double>(ramp_steps);
    const double h = h_start + (h_end - h_start) * frac;
    const int rounded = static_cast<int>(std::lround(h));
    return std::clamp(rounded, h_start, h_end);
}

Registration Registration::create(const RegConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    return Registration(cfg, ConvNet::create(cfg.net, rng));
}

Tensor Registration::flow_to(const Frame& current, const Frame& target) const {
    check_frame(current);
    check_frame(target);
    if (current.shape != target.shape)
        throw std::invalid_argument("registration: frame shape mismatch");
    Tensor flow = net_.forward(stack_pair(current, target));
    if (!flow.all_finite()) throw std::runtime_error("registration: non-finite flow");
    return flow;
}

Frame Registration::warp_to(const Frame& current, const Tensor& flow) const {
    return warp_bilinear(current, flow);
}

void Registration::save(const std::string& path) const { save_convnet(path, net_); }

Registration Registration::load(const std::string& path, const RegConfig& cfg) {
    return Registration(cfg, load_convnet(path, cfg.net));
}

Pixel transport_point(const Tensor& flow, Pixel d, int neighborhood) {
    if (flow.shape.size() != 3 || flow.dim(2) != 2)
        throw std::invalid_argument("transport_point: flow must be H x W x 2");
    if (neighborhood < 1 || neighborhood % 2 == 0)
        throw std::invalid_argument("transport_point: neighborhood must be odd");
    const int h = flow.dim(0), w = flow.dim(1);
    const int r0 = std::clamp(d.row, 0, h - 1);
    const int c0 = std::clamp(d.col, 0, w - 1);
    const int half = neighborhood / 2;
    std::vector<float> xs, ys;
    xs.reserve(static_cast<size_t>(neighborhood) * neighborhood);
    ys.reserve(xs.capacity());
    for (int r = std::max(0, r0 - half); r <= std::min(h - 1, r0 + half); ++r)
        for (int c = std::max(0, c0 - half); c <= std::min(w - 1, c0 + half); ++c) {
            xs.push_back(flow.at(r, c, 0));
            ys.push_back(flow.at(r, c, 1));
        }
    auto median = [](std::vector<float>& v) {
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 ? static_cast<double>(v[n / 2])
                     : 0.5 * (static_cast<double>(v[n / 2 - 1]) + v[n / 2]);
    };
    const double dx = median(xs);
    const double dy = median(ys);
    Pixel out;
    out.row = std::clamp(static_cast<int>(std::lround(r0 + dy)), 0, h - 1);
    out.col = std::clamp(static_cast<int>(std::lround(c0 + dx)), 0, w - 1);
    return out;
}

double point_photometric_error(const Frame& target, const Frame& warped, Pixel d) {
    const int r = std::clamp(d.row, 0, target.dim(0) - 1);
    const int c = std::clamp(d.col, 0, target.dim(1) - 1);
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double diff = static_cast<double>(target.at(r, c, k)) - warped.at(r, c, k);
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

Registration train_registration(const data::DatasetIndex& dataset, const RegTrainConfig& cfg,
                                TrainStats* stats) {
    if (dataset.train.empty()) throw std::invalid_argument("train_registration: empty dataset");
    Rng rng(cfg.seed);
    Rng init_rng(rng.next_u64());
    ConvNet net = ConvNet::create(cfg.reg.net, init_rng);
    Optimizer opt(cfg.optim);

    // small FIFO record cache; draws stay deterministic regardless of hits
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
        loss_csv << "step,gap,loss\n";
    }

    const int h = kFrameH, w = kFrameW;
    const size_t batch2 = static_cast<size_t>(cfg.batch) * 2;  // both directions
    if (stats) stats->losses.reserve(static_cast<size_t>(cfg.schedule.total_steps));

    for (long step = 0; step < cfg.schedule.total_steps; ++step) {
        const int gap = cfg.schedule.gap_at(step);
        Tensor batch_in({static_cast<int>(batch2), h, w, 6});
        std::vector<Frame> sources(batch2), targets(batch2);
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& record = get_record(rng.uniform_index(dataset.train.size()));
            const int view = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(record.views)));
            const data::FramePair pair = data::sample_pair(record, gap, view, rng);
            // row 2b warps b -> a, row 2b+1 warps a -> b
            sources[2 * b] = pair.b;
            targets[2 * b] = pair.a;
            sources[2 * b + 1] = pair.a;
            targets[2 * b + 1] = pair.b;
        }
        for (size_t i = 0; i < batch2; ++i) {
            const Tensor x = stack_pair(sources[i], targets[i]);
            std::copy_n(x.data.begin(), x.numel(), batch_in.data.begin() + i * x.numel());
        }

        ConvNet::Trace trace;
        const Tensor flows = net.forward(batch_in, &trace);
        Tensor dflows(flows.shape);
        double loss = 0.0;
        const size_t flow_sz = static_cast<size_t>(h) * w * 2;
        const int scales = std::max(1, cfg.photometric_scales);
        for (size_t i = 0; i < batch2; ++i) {
            Tensor flow({h, w, 2});
            std::copy_n(flows.data.begin() + i * flow_sz, flow_sz, flow.data.begin());

            Tensor dflow({h, w, 2});
            Tensor src = sources[i];
            Tensor tgt = targets[i];
            Tensor level_flow = flow;
            const double level_weight = 1.0 / scales;
            std::vector<Tensor> level_dflows;
            for (int s = 0; s < scales; ++s) {
                const Frame warped = warp_bilinear(src, level_flow);
                auto photo = charbonnier_loss(warped, tgt);
                loss += level_weight * photo.value;
                for (size_t j = 0; j < photo.grad.numel(); ++j)
                    photo.grad[j] *= static_cast<float>(level_weight);
                Tensor d;
                warp_bilinear_grad(src, level_flow, photo.grad, static_cast<Tensor*>(nullptr), &d);
                level_dflows.push_back(std::move(d));
                if (s + 1 < scales) {
                    src = resize_down2(src);
                    tgt = resize_down2(tgt);
                    level_flow = resize_down2(level_flow);
                    for (float& v : level_flow.data) v *= 0.5f;  // vectors shrink with the grid
                }
            }
            // push coarse-scale gradients back to the full-resolution flow
            for (int s = scales - 1; s >= 0; --s) {
                Tensor g = std::move(level_dflows[static_cast<size_t>(s)]);
                for (int up = 0; up < s; ++up) {
                    for (float& v : g.data) v *= 0.5f;
                    g = resize_down2_grad(g);
                }
                for (size_t j = 0; j < flow_sz; ++j) dflow[j] += g[j];
            }

            const auto smooth = flow_smoothness(flow);
            loss += photoless_smooth_weight(cfg) * smooth.value;
            const float bscale = 1.0f / static_cast<float>(batch2);
            for (size_t j = 0; j < flow_sz; ++j)
                dflows[i * flow_sz + j] =
                    (dflow[j] + static_cast<float>(cfg.smoothness_weight) * smooth.grad[j]) * bscale;
        }
        loss /= static_cast<double>(batch2);

        const auto grads = net.backward(trace, dflows);
        std::vector<Tensor*> params = net.parameters();
        std::vector<const Tensor*> grad_ptrs;
        for (size_t i = 0; i < grads.kernels.size(); ++i) {
            grad_ptrs.push_back(&grads.kernels[i]);
            grad_ptrs.push_back(&grads.biases[i]);
        }
        opt.step(params, grad_ptrs);

        if (!std::isfinite(loss)) throw std::runtime_error("train_registration: loss diverged");
        if (stats) stats->losses.push_back(static_cast<float>(loss));
        if (loss_csv.is_open()) loss_csv << step << "," << gap << "," << loss << "\n";
    }
    if (stats) {
        const size_t n = stats->losses.size();
        const size_t tail = std::min<size_t>(100, n);
        double acc = 0.0;
        for (size_t i = n - tail; i < n; ++i) acc += stats->losses[i];
        stats->final_loss_window = tail ? acc / tail : 0.0;
    }
    return Registration(cfg.reg, std::move(net));
}

} // namespace vismpc::reg
