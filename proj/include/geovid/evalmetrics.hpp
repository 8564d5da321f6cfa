// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "geovid/camera.hpp"
#include "geovid/patch3d.hpp"
#include "json.hpp"

namespace geovid::eval {

struct PoseBlock {
    double rra15 = 0.0; ///< percent
    double rta15 = 0.0; ///< percent
    double maa30 = 0.0; ///< percent
    std::size_t pairs = 0;    ///< ordered pairs scored
    std::size_t excluded = 0; ///< pairs dropped for a zero-length relative translation
};

struct DepthBlock {
    double abs_rel = 0.0;
    double rmse = 0.0;
    double log10 = 0.0;
    double delta1 = 0.0;
};

struct ReconBlock {
    double acc = 0.0;
    double comp = 0.0;
    double prec = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
};

struct MetricsReport {
    std::optional<PoseBlock> pose;
    std::optional<DepthBlock> depth;
    std::optional<ReconBlock> recon;

    nlohmann::json to_json() const;
};

/// Per ordered pair (i, j), i != j.
struct PairErrors {
    double rot_deg;
    double trans_deg;
};

/// Relative-pose errors for every ordered pair; pairs whose predicted or true
/// relative translation has zero length are skipped and counted.
std::vector<PairErrors> pair_errors(const std::vector<CameraModel>& pred, const std::vector<CameraModel>& gt,
                                    std::size_t* excluded = nullptr);

PoseBlock pose_metrics(const std::vector<CameraModel>& pred, const std::vector<CameraModel>& gt);

DepthBlock depth_metrics(const DepthMap& pred, const DepthMap& gt);
/// Pixel-weighted aggregate over several frames.
DepthBlock depth_metrics(const std::vector<DepthMap>& pred, const std::vector<DepthMap>& gt);

/// Nearest-neighbour distance from every query point to `ref`.
std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& query, const std::vector<Eigen::Vector3d>& ref,
                                      double cell_hint);

ReconBlock pointcloud_metrics(const p3d::PointCloud& pred, const p3d::PointCloud& gt, double tau = 0.05);

} // namespace geovid::eval
