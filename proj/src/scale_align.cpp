// SPDX-License-Identifier: Apache-2.0
#include "geovid/scale_align.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "geovid/errors.hpp"

namespace geovid::align {

nlohmann::json ScaleEstimate::to_json() const {
    return {{"factors", per_image_factors}, {"scene_factor", scene_factor}, {"frames", images_used}};
}

namespace {

std::size_t overlap_count(const DepthMap& a, const DepthMap& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) n += (a.mask()[i] && b.mask()[i]) ? 1 : 0;
    return n;
}

} // namespace

double per_image_scale(const DepthMap& rel, const DepthMap& metric, std::optional<std::span<const double>> weights,
                       WeightMode mode) {
    if (rel.height() != metric.height() || rel.width() != metric.width()) throw ShapeError("depth maps differ in size");
    if (weights && weights->size() != rel.size()) throw ShapeError("weight map does not match the depth maps");
    double num = 0.0, den = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < rel.size(); ++i) {
        if (!rel.mask()[i] || !metric.mask()[i]) continue;
        const double r = rel.values()[i], m = metric.values()[i];
        const double w = weights ? (*weights)[i] : (mode == WeightMode::uniform ? 1.0 : 1.0 / m);
        num += w * r * m;
        den += w * r * r;
        ++used;
    }
    if (used == 0) throw DegenerateInputError("no pixel is valid in both depth maps");
    if (!(den > 0)) throw DegenerateInputError("weighted relative depth energy is zero");
    const double s = num / den;
    if (!(s > 0) || !std::isfinite(s)) throw DegenerateInputError("scale factor is not positive");
    return s;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DegenerateInputError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ScaleEstimate scene_scale(const std::vector<std::pair<DepthMap, DepthMap>>& frames, const SceneScaleOptions& opts) {
    if (frames.empty()) throw DegenerateInputError("scene has no frames");
    if (opts.sample_count == 0) throw ParameterError("sample count must be positive");
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (overlap_count(frames[i].first, frames[i].second) >= opts.min_valid_pixels) eligible.push_back(i);
    }
    if (eligible.empty()) throw DegenerateInputError("no frame has enough valid overlapping pixels");

    // Partial Fisher-Yates: the first k entries become the sample.
    std::mt19937_64 rng(opts.seed);
    const std::size_t k = std::min(opts.sample_count, eligible.size());
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
        std::swap(eligible[i], eligible[pick(rng)]);
    }
    std::vector<std::size_t> sample(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(sample.begin(), sample.end());

    ScaleEstimate est;
    for (std::size_t idx : sample) {
        try {
            est.per_image_factors.push_back(
                per_image_scale(frames[idx].first, frames[idx].second, std::nullopt, opts.weights));
            est.images_used.push_back(idx);
        } catch (const DegenerateInputError&) {
            // skipped; the whole scene fails only if every sampled frame does
        }
    }
    if (est.per_image_factors.empty()) throw DegenerateInputError("every sampled frame is degenerate");
    est.scene_factor = median(est.per_image_factors);
    return est;
}

CameraModel apply_scale(double s, const CameraModel& cam) {
    if (!(s > 0) || !std::isfinite(s)) throw ParameterError("scale factor must be positive");
    if (cam.scale_kind() != ScaleKind::relative) throw StateError("camera is already metric");
    return CameraModel(cam.intrinsics(), cam.rotation(), s * cam.translation(), ScaleKind::metric);
}

std::pair<DepthMap, CameraModel> apply_scale(double s, const DepthMap& depth, const CameraModel& cam) {
    if (!(s > 0) || !std::isfinite(s)) throw ParameterError("scale factor must be positive");
    if (depth.scale_kind() != ScaleKind::relative) throw StateError("depth map is already metric");
    CameraModel scaled_cam = apply_scale(s, cam);
    std::vector<double> v = depth.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (depth.mask()[i]) v[i] *= s;
    }
    return {DepthMap(depth.height(), depth.width(), std::move(v), ScaleKind::metric, depth.mask()), scaled_cam};
}

} // namespace geovid::align
