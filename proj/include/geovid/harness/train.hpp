// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "geovid/harness/model.hpp"
#include "geovid/losses.hpp"

namespace geovid::harness {

struct TrainLogEntry {
    std::size_t step = 0;
    int stage = 1;
    loss::LossReport loss;
    std::optional<double> wall_ms;

    nlohmann::json to_json() const;
};

/// Frames of one scene used in one step, plus optional descriptor jitter per frame.
struct Clip {
    const synth::SceneSample* scene = nullptr;
    std::vector<std::size_t> frames;
    std::vector<nk::Tensor> jitter; ///< empty, or one [P, D] constant per frame
};

/// Consecutive frames at a random stride in {1, 2, 3} from a random start.
std::vector<std::size_t> sample_window(std::size_t total, std::size_t count, nk::Rng& rng);
/// Evaluation clip: the first `count` frames at stride 2 (or 1 if too short).
std::vector<std::size_t> eval_window(std::size_t total, std::size_t count);

struct DistillOutput {
    loss::DistillTerms terms;
    cta::CtaOutput streams;
};

DistillOutput distill_clip(const Model& m, const RunConfig& cfg, const Clip& clip);

struct JointTerms {
    nk::Tensor recon;
    nk::Tensor vl;
    nk::Tensor md; ///< undefined when the metric head is off
    nk::Tensor total;
    double scale = 1.0;
};

/// Shared forward pass of the joint model over one clip. Relative depth is
/// divided by its clip-wide mean unless the metric head is off.
struct ClipForward {
    cta::CtaOutput streams;
    std::vector<recon::CameraTensors> cams;
    std::vector<nk::Tensor> rel;
    std::vector<nk::Tensor> md_depth; ///< empty when the metric head is off
};

ClipForward forward_clip(const Model& m, const RunConfig& cfg, const Clip& clip);

JointTerms joint_clip(const Model& m, const RunConfig& cfg, const Clip& clip);

struct TrainResult {
    std::vector<TrainLogEntry> log;
};

/// Optimizes the distillation objective over encoder + adapter.
TrainResult train_stage1(const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes, Model& m,
                         const std::optional<std::filesystem::path>& diag_dir = std::nullopt);
/// Optimizes the joint objective over every parameter.
TrainResult train_stage2(const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes, Model& m,
                         const std::optional<std::filesystem::path>& diag_dir = std::nullopt);

/// Mean distillation / joint loss on held-out scenes with evaluation clips.
loss::LossReport heldout_distill(const Model& m, const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes);
loss::LossReport heldout_joint(const Model& m, const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes);

void write_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log);

} // namespace geovid::harness
