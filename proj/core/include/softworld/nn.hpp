#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softworld/autograd.hpp"
#include "softworld/rng.hpp"
#include "softworld/tensor.hpp"

namespace softworld::nn {

using ag::Parameter;

/// Weight init: N(0, 1/sqrt(fan_in)), fan_in = first shape dim.
Tensor scaled_normal(std::vector<int64_t> shape, Rng& rng);
Tensor normal_init(std::vector<int64_t> shape, Rng& rng, double stddev);

/// Adam with bias correction. Moments live per parameter; step_count
/// increments by exactly one per update call.
class Adam {
public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam(std::vector<Parameter*> params, Config config);

    /// Applies one update from the accumulated gradients, then leaves the
    /// gradients untouched (call zero_grad explicitly). Throws TrainingError
    /// naming the parameter if a gradient is non-finite; the step is aborted
    /// before any parameter changes.
    void step();
    void zero_grad();

    int64_t step_count() const { return step_count_; }
    const Config& config() const { return config_; }
    const std::vector<Parameter*>& params() const { return params_; }
    const Tensor& first_moment(size_t i) const { return m_[i]; }
    const Tensor& second_moment(size_t i) const { return v_[i]; }

    /// Optimizer state as named tensors ("adam.m/<name>", "adam.v/<name>")
    /// for checkpointing.
    std::vector<Parameter> export_state() const;
    void import_state(const std::vector<Parameter>& state, int64_t step_count);

private:
    std::vector<Parameter*> params_;
    Config config_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    int64_t step_count_ = 0;
};

}  // namespace softworld::nn
