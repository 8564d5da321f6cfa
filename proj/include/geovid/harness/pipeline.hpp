// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geovid/evalmetrics.hpp"
#include "geovid/harness/train.hpp"
#include "geovid/patch3d.hpp"
#include "geovid/scale_align.hpp"

namespace geovid::harness {

struct PipelineOptions {
    /// Frame indices to run on; defaults to the evaluation window.
    std::optional<std::vector<std::size_t>> frames;
    /// Replace every head output with ground truth (oracle closure check).
    bool inject_gt = false;
};

struct PipelineOutput {
    std::vector<std::size_t> frames;
    std::vector<DepthMap> depth;          ///< final metric depth per frame
    std::vector<CameraModel> cameras;     ///< metric, relative to the first predicted camera
    std::vector<CameraModel> gt_cameras;  ///< relative to the first ground-truth camera
    p3d::PointCloud cloud;
    p3d::PointCloud gt_cloud;
    std::vector<p3d::Patch3DTokens> t3d;
    std::optional<align::ScaleEstimate> scale;
    eval::MetricsReport metrics;
    /// Set when scale alignment was degenerate; metrics are then empty.
    std::optional<std::string> error;

    nlohmann::json report_json() const;
};

PipelineOutput run_pipeline(const Model& m, const RunConfig& cfg, const synth::SceneSample& scene,
                            const PipelineOptions& opts = {});

/// Writes cloud.ply, report.json, cameras.json, anchors.json and depth/NNN.vlt.
void write_pipeline_output(const std::filesystem::path& dir, const PipelineOutput& out);

struct CompareRow {
    Strategy strategy;
    std::size_t scenes = 0;
    std::uint64_t seed = 0;
    double stage1_distill = 0.0; ///< held-out distillation loss after stage 1 (or untrained)
    double test_loss = 0.0;      ///< held-out joint loss after stage 2
};

/// Trains every (strategy, size, seed) combination from identical initial
/// weights and scene sets, and scores each on the shared held-out scenes.
std::vector<CompareRow> compare_strategies(const RunConfig& base, const std::vector<Strategy>& strategies,
                                           const std::vector<std::size_t>& sizes,
                                           const std::vector<std::uint64_t>& seeds);

std::string compare_csv(const std::vector<CompareRow>& rows);

/// Training scenes [0, count) and held-out scenes for a config.
std::vector<synth::SceneSample> make_train_scenes(const RunConfig& cfg, std::size_t count);
std::vector<synth::SceneSample> make_heldout_scenes(const RunConfig& cfg);

} // namespace geovid::harness
