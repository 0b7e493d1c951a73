#pragma once

// Mini-batch SGD with Nesterov momentum and decoupled-from-batchnorm weight
// decay, plus the step learning-rate schedule.

#include <vector>

#include "trg/tensor.hpp"

namespace trg {

struct Schedule {
    double initial_lr = 0.001;
    double drop_factor = 10.0;
    int drop_epoch = 50;
    int total_epochs = 100;

    void validate() const {
        if (initial_lr <= 0) throw ConfigError("schedule: initial lr must be > 0");
        if (drop_factor <= 0) throw ConfigError("schedule: drop factor must be > 0");
        if (total_epochs < 1) throw ConfigError("schedule: total epochs must be >= 1");
        if (drop_epoch >= total_epochs)
            throw ConfigError("schedule: drop epoch " + std::to_string(drop_epoch) +
                              " must be < total epochs " + std::to_string(total_epochs));
    }

    double lr_at(int epoch) const {
        if (epoch < 0 || epoch >= total_epochs)
            throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(total_epochs) + ")");
        return epoch < drop_epoch ? initial_lr : initial_lr / drop_factor;
    }
};

template <typename S>
class SgdNesterov {
  public:
    struct Options {
        double momentum = 0.9;
        double weight_decay = 5e-4;
        bool nesterov = true;
    };

    SgdNesterov(std::vector<Parameter<S>*> params, Options opt = {})
        : params_(std::move(params)), opt_(opt) {
        velocity_.reserve(params_.size());
        for (const auto* p : params_) velocity_.emplace_back(p->numel(), S(0));
    }

    // Per parameter: g' = g + lambda*p; v <- mu*v + g';
    // update = g' + mu*v (lookahead form) or plain v without Nesterov;
    // p <- p - lr*update. Batchnorm scale/shift skip the decay term.
    void step(double lr) {
        const S mu = static_cast<S>(opt_.momentum);
        const S eta = static_cast<S>(lr);
        for (size_t i = 0; i < params_.size(); ++i) {
            Parameter<S>& p = *params_[i];
            if (!p.trainable) continue;
            if (p.grad.size() != p.value.size())
                throw DimensionError("sgd: gradient/parameter size mismatch for " + p.name);
            const S lambda = p.decay_exempt ? S(0) : static_cast<S>(opt_.weight_decay);
            auto& v = velocity_[i];
            for (size_t j = 0; j < p.value.size(); ++j) {
                const S g = p.grad[j] + lambda * p.value[j];
                v[j] = mu * v[j] + g;
                const S update = opt_.nesterov ? g + mu * v[j] : v[j];
                p.value[j] -= eta * update;
            }
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

  private:
    std::vector<Parameter<S>*> params_;
    std::vector<std::vector<S>> velocity_;
    typename SgdNesterov::Options opt_;
};

}  // namespace trg
