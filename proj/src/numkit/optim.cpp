// SPDX-License-Identifier: Apache-2.0
#include "geovid/numkit/optim.hpp"

#include <cmath>

#include "geovid/errors.hpp"

namespace geovid::nk {

double adamw_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamWState& state,
                  const AdamWConfig& cfg, std::span<const double> lr_scale) {
    if (grads.size() != params.size()) throw ShapeError("one gradient per parameter required");
    if (!lr_scale.empty() && lr_scale.size() != params.size()) throw ShapeError("one lr scale per parameter required");
    if (state.m.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");

    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].numel() || state.m[i].size() != params[i].numel()) {
            throw ShapeError("gradient/state extent mismatch for parameter " + std::to_string(i));
        }
        for (double g : grads[i]) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
    const double clip = (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double lr = cfg.lr * (lr_scale.empty() ? 1.0 : lr_scale[i]);
        auto data = params[i].mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grads[i][j] * clip;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            data[j] -= lr * cfg.weight_decay * data[j];
            data[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    return norm;
}

AdamW::AdamW(ParamList params, AdamWConfig cfg, std::vector<double> lr_scale)
    : params_(std::move(params)), cfg_(cfg), lr_scale_(std::move(lr_scale)) {
    for (const auto& p : params_) tensors_.push_back(p.tensor);
}

double AdamW::step(const std::vector<std::vector<double>>& grads) {
    return adamw_step(tensors_, grads, state_, cfg_, lr_scale_);
}

} // namespace geovid::nk
