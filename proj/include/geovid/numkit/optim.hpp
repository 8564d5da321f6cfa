// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "geovid/numkit/nn.hpp"
#include "geovid/numkit/tensor.hpp"

namespace geovid::nk {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
    /// Global L2 norm cap applied to the gradients before the moment update.
    double clip_norm = 1.0;
};

struct AdamWState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

/// One AdamW update with decoupled weight decay. `lr_scale`, if non-empty,
/// multiplies the learning rate per parameter. Returns the pre-clip global
/// gradient norm.
double adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamWState& state,
                  const AdamWConfig& cfg, std::span<const double> lr_scale = {});

/// Owns the moment buffers for a fixed parameter list (single writer).
class AdamW {
public:
    AdamW(ParamList params, AdamWConfig cfg, std::vector<double> lr_scale = {});

    double step(const std::vector<std::vector<double>>& grads);
    const ParamList& params() const { return params_; }
    const AdamWState& state() const { return state_; }
    AdamWConfig& config() { return cfg_; }

private:
    ParamList params_;
    std::vector<Tensor> tensors_;
    AdamWConfig cfg_;
    std::vector<double> lr_scale_;
    AdamWState state_;
};

} // namespace geovid::nk
