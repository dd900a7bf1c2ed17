#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vismpc/tensor.h"

namespace vismpc {

// Optimizer over a flat list of parameter tensors. State is lazily sized to
// the parameter list and owned by the optimizer (single writer). A NaN or Inf
// gradient aborts with a diagnostic naming the offending tensor.
struct OptimConfig {
    enum class Rule { SgdMomentum, Adam };
    Rule rule = Rule::SgdMomentum;
    double lr = 0.01;
    double momentum = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    static OptimConfig sgd(double lr, double momentum = 0.9) {
        OptimConfig c;
        c.rule = Rule::SgdMomentum;
        c.lr = lr;
        c.momentum = momentum;
        return c;
    }
    static OptimConfig adam(double lr) {
        OptimConfig c;
        c.rule = Rule::Adam;
        c.lr = lr;
        return c;
    }
};

class Optimizer {
public:
    explicit Optimizer(OptimConfig config) : config_(config) {}

    void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("optimizer: params/grads count mismatch");
        resize_state(params);
        ++t_;
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            if (!p.same_shape(g)) throw std::invalid_argument("optimizer: grad shape mismatch");
            if (!g.all_finite())
                throw std::runtime_error("optimizer: non-finite gradient in tensor #" +
                                         std::to_string(i));
            switch (config_.rule) {
                case OptimConfig::Rule::SgdMomentum: {
                    Tensor& v = velocity_[i];
                    for (size_t j = 0; j < p.numel(); ++j) {
                        v[j] = static_cast<float>(config_.momentum * v[j] - config_.lr * g[j]);
                        p[j] += v[j];
                    }
                    break;
                }
                case OptimConfig::Rule::Adam: {
                    Tensor& m = velocity_[i];
                    Tensor& v = second_[i];
                    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
                    const double corr1 = 1.0 - std::pow(b1, t_);
                    const double corr2 = 1.0 - std::pow(b2, t_);
                    for (size_t j = 0; j < p.numel(); ++j) {
                        m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g[j]);
                        v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * double(g[j]) * g[j]);
                        const double mh = m[j] / corr1;
                        const double vh = v[j] / corr2;
                        p[j] -= static_cast<float>(config_.lr * mh / (std::sqrt(vh) + config_.adam_eps));
                    }
                    break;
                }
            }
        }
    }

    const OptimConfig& config() const { return config_; }

private:
    void resize_state(const std::vector<Tensor*>& params) {
        if (velocity_.size() == params.size()) return;
        velocity_.clear();
        second_.clear();
        for (const Tensor* p : params) {
            velocity_.emplace_back(p->shape);
            second_.emplace_back(p->shape);
        }
    }

    OptimConfig config_;
    std::vector<Tensor> velocity_;
    std::vector<Tensor> second_;
    long t_ = 0;
};

} // namespace vismpc
