// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "geovid/errors.hpp"
#include "geovid/scale_align.hpp"

using namespace geovid;
using namespace geovid::align;

namespace {

DepthMap row(std::vector<double> v, ScaleKind kind) {
    const std::size_t n = v.size();
    return DepthMap(1, n, std::move(v), kind);
}

// An 8x8 frame whose metric map is exactly `factor` times a varied relative map.
std::pair<DepthMap, DepthMap> frame(double factor, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    std::vector<double> rel(64), met(64);
    for (std::size_t i = 0; i < 64; ++i) {
        rel[i] = u(rng);
        met[i] = factor * rel[i];
    }
    return {DepthMap(8, 8, rel, ScaleKind::relative), DepthMap(8, 8, met, ScaleKind::metric)};
}

CameraModel cam(ScaleKind kind) {
    return CameraModel(Intrinsics{50, 50, 10, 10}, Eigen::Matrix3d::Identity(), Eigen::Vector3d(1, 0, 3), kind);
}

} // namespace

TEST_CASE("per-image scale examples") {
    CHECK(per_image_scale(row({1, 2, 3}, ScaleKind::relative), row({2, 4, 6}, ScaleKind::metric), std::nullopt,
                          WeightMode::uniform) == 2.0);
    CHECK(per_image_scale(row({1, 2, 3}, ScaleKind::relative), row({2, 4, 6}, ScaleKind::metric)) == 2.0);
    CHECK(per_image_scale(row({1.5, 2.5, 0.7}, ScaleKind::relative), row({1.5, 2.5, 0.7}, ScaleKind::metric)) == 1.0);
    CHECK(per_image_scale(row({1, 2}, ScaleKind::relative), row({2, 5}, ScaleKind::metric), std::nullopt,
                          WeightMode::uniform) == doctest::Approx(2.4).epsilon(1e-15));
}

TEST_CASE("explicit weights override the weight mode") {
    const std::vector<double> w{1.0, 0.0};
    CHECK(per_image_scale(row({1, 2}, ScaleKind::relative), row({2, 5}, ScaleKind::metric),
                          std::span<const double>(w)) == 2.0);
    const std::vector<double> short_w{1.0};
    CHECK_THROWS_AS(per_image_scale(row({1, 2}, ScaleKind::relative), row({2, 5}, ScaleKind::metric),
                                    std::span<const double>(short_w)),
                    ShapeError);
}

TEST_CASE("per-image scale rejects empty overlaps") {
    const DepthMap rel(1, 2, {1.0, 2.0}, ScaleKind::relative, {1, 0});
    const DepthMap met(1, 2, {2.0, 4.0}, ScaleKind::metric, {0, 1});
    CHECK_THROWS_AS(per_image_scale(rel, met), DegenerateInputError);
    CHECK_THROWS_AS(per_image_scale(row({1, 2}, ScaleKind::relative), row({1, 2, 3}, ScaleKind::metric)), ShapeError);
}

TEST_CASE("median conventions") {
    CHECK(median({1.9, 2.0, 2.4}) == 2.0);
    CHECK(median({1.0, 3.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK_THROWS_AS(median({}), DegenerateInputError);
}

TEST_CASE("scene scale takes the median of per-frame factors") {
    const std::vector<std::pair<DepthMap, DepthMap>> frames{frame(1.9, 1), frame(2.0, 2), frame(2.4, 3)};
    const ScaleEstimate e = scene_scale(frames);
    CHECK(e.images_used == std::vector<std::size_t>{0, 1, 2});
    CHECK(e.per_image_factors.size() == 3);
    CHECK(e.scene_factor == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("scene scale sampling is seeded and bounded by the sample count") {
    std::vector<std::pair<DepthMap, DepthMap>> frames;
    for (std::size_t i = 0; i < 30; ++i) frames.push_back(frame(1.0 + 0.1 * static_cast<double>(i), 100 + i));
    SceneScaleOptions o;
    o.seed = 42;
    const ScaleEstimate a = scene_scale(frames, o);
    const ScaleEstimate b = scene_scale(frames, o);
    CHECK(a.images_used.size() == 16);
    CHECK(a.images_used == b.images_used);
    CHECK(a.scene_factor == b.scene_factor);
    o.seed = 43;
    CHECK(scene_scale(frames, o).images_used != a.images_used);
}

TEST_CASE("frames without enough valid pixels are skipped") {
    auto [rel, met] = frame(5.0, 9);
    std::vector<std::uint8_t> mask(64, 0);
    for (std::size_t i = 0; i < 10; ++i) mask[i] = 1;
    const DepthMap sparse(8, 8, met.values(), ScaleKind::metric, mask);
    const std::vector<std::pair<DepthMap, DepthMap>> frames{{rel, sparse}, frame(2.0, 4)};
    const ScaleEstimate e = scene_scale(frames);
    CHECK(e.images_used == std::vector<std::size_t>{1});
    CHECK(e.scene_factor == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(scene_scale({{rel, sparse}}), DegenerateInputError);
    CHECK_THROWS_AS(scene_scale({}), DegenerateInputError);
}

TEST_CASE("apply_scale examples and errors") {
    const CameraModel c = cam(ScaleKind::relative);
    const CameraModel same = apply_scale(1.0, c);
    CHECK(same.translation() == c.translation());
    CHECK(same.scale_kind() == ScaleKind::metric);

    const DepthMap d(1, 3, {1.0, 2.0, 0.5}, ScaleKind::relative);
    const auto [d2, c2] = apply_scale(2.0, d, c);
    CHECK(c2.translation() == Eigen::Vector3d(2, 0, 6));
    CHECK(c2.rotation() == c.rotation());
    CHECK((c2.rotation().transpose() * c2.rotation() - Eigen::Matrix3d::Identity()).norm() == 0.0);
    CHECK(d2.values() == std::vector<double>{2.0, 4.0, 1.0});
    CHECK(d2.scale_kind() == ScaleKind::metric);

    CHECK_THROWS_AS(apply_scale(0.0, c), ParameterError);
    CHECK_THROWS_AS(apply_scale(-1.0, d, c), ParameterError);
    CHECK_THROWS_AS(apply_scale(2.0, cam(ScaleKind::metric)), StateError);
    CHECK_THROWS_AS(apply_scale(2.0, d.with_kind(ScaleKind::metric), c), StateError);
}
