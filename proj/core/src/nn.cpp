#include "softworld/nn.hpp"

#include <cmath>

#include "softworld/errors.hpp"

namespace softworld::nn {

Tensor normal_init(std::vector<int64_t> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

Tensor scaled_normal(std::vector<int64_t> shape, Rng& rng) {
    const double fan_in = static_cast<double>(shape.front());
    return normal_init(std::move(shape), rng, 1.0 / std::sqrt(fan_in));
}

Adam::Adam(std::vector<Parameter*> params, Config config)
    : params_(std::move(params)), config_(config) {
    if (config_.lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step() {
    for (const Parameter* p : params_) {
        if (!p->grad.all_finite()) {
            throw TrainingError("non-finite gradient for parameter '" + p->name + "'");
        }
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad[k];
            m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g;
            v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.value[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

std::vector<Parameter> Adam::export_state() const {
    std::vector<Parameter> out;
    out.reserve(2 * params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back("adam.m/" + params_[i]->name, m_[i]);
        out.emplace_back("adam.v/" + params_[i]->name, v_[i]);
    }
    return out;
}

void Adam::import_state(const std::vector<Parameter>& state, int64_t step_count) {
    for (size_t i = 0; i < params_.size(); ++i) {
        const std::string mn = "adam.m/" + params_[i]->name;
        const std::string vn = "adam.v/" + params_[i]->name;
        for (const Parameter& s : state) {
            if (s.name == mn) m_[i] = s.value;
            if (s.name == vn) v_[i] = s.value;
        }
    }
    step_count_ = step_count;
}

}  // namespace softworld::nn
