// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "geovid/metric_depth.hpp"
#include "geovid/numkit/optim.hpp"
#include "geovid/scale_align.hpp"
#include "json.hpp"

namespace geovid::harness {

enum class Strategy { two_stage_dual, two_stage_single_teacher, single_stage, no_sc_loss };
enum class MdMode { off, no_alignment, full };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);
std::string_view to_string(MdMode m);
MdMode md_mode_from_string(std::string_view s);

struct ModelConfig {
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t blocks = 4;
    std::size_t register_tokens = 4;
    std::size_t bridge_tokens = 16;
    std::size_t decoder_dim = 16;
    std::size_t bins = 64;
    double d_min = 0.1;
    double d_max = 10.0;
    double max_shift = 0.45;
    metric::BinNormalization bin_norm = metric::BinNormalization::ordinal;
    std::size_t height = 56;
    std::size_t width = 56;
    std::size_t patch = 14;
    double fov_deg = 60.0;
};

struct StageSchedule {
    std::size_t steps = 500;
    std::size_t scenes_per_step = 4;
    std::size_t frames_per_scene = 8;
    double lr = 1e-3;
};

struct DataConfig {
    std::size_t train_scenes = 64;
    std::size_t heldout_scenes = 8;
    std::size_t frames_per_scene = 32;
    std::size_t objects = 5;
    double descriptor_noise = 0.01;
    /// Seeded per-step jitter added to descriptors during training.
    double token_jitter = 0.01;
};

struct RunConfig {
    std::uint64_t seed = 7;
    ModelConfig model;
    DataConfig data;
    double lambda = 0.5;
    double alpha = 1.0;
    double md_eps = 1e-6;
    nk::AdamWConfig optim;
    StageSchedule stage1{500, 4, 8, 1e-3};
    StageSchedule stage2{1000, 2, 8, 1e-3};
    double stage2_encoder_lr_scale = 0.1;
    Strategy strategy = Strategy::two_stage_dual;
    MdMode md_mode = MdMode::full;
    std::size_t align_samples = 16;
    align::WeightMode align_weights = align::WeightMode::inverse_metric;
    double tau = 0.05;
    /// Wall-clock timings break byte-identical logs, so they are opt-in.
    bool log_wall_time = false;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static RunConfig from_json(const nlohmann::json& j);
    void validate() const;
};

RunConfig load_config(const std::string& path);

} // namespace geovid::harness
