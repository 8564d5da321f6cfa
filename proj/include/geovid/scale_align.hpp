// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "geovid/camera.hpp"
#include "json.hpp"

// Recovers one metric scale per scene: weighted least squares per image,
// then the median over a seeded sample of images.
namespace geovid::align {

enum class WeightMode { inverse_metric, uniform };

struct ScaleEstimate {
    std::vector<double> per_image_factors;
    double scene_factor = 1.0;
    std::vector<std::size_t> images_used;

    nlohmann::json to_json() const;
};

/// argmin_s sum w (s d_rel - d_metric)^2 over pixels valid in both maps.
/// Explicit `weights` (H*W) override `mode`.
double per_image_scale(const DepthMap& rel, const DepthMap& metric, std::optional<std::span<const double>> weights = {},
                       WeightMode mode = WeightMode::inverse_metric);

/// Median with the even-count convention (mean of the two central values).
double median(std::vector<double> values);

struct SceneScaleOptions {
    std::size_t sample_count = 16;
    std::uint64_t seed = 0;
    WeightMode weights = WeightMode::inverse_metric;
    /// Frames with fewer overlapping valid pixels are skipped before sampling.
    std::size_t min_valid_pixels = 32;
};

ScaleEstimate scene_scale(const std::vector<std::pair<DepthMap, DepthMap>>& frames, const SceneScaleOptions& opts = {});

/// Multiplies depth and translation by s; both inputs must be relative.
std::pair<DepthMap, CameraModel> apply_scale(double s, const DepthMap& depth, const CameraModel& cam);
CameraModel apply_scale(double s, const CameraModel& cam);

} // namespace geovid::align
