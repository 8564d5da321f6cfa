// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "json.hpp"

namespace geovid {

enum class ScaleKind { relative, metric, ground_truth };

std::string_view to_string(ScaleKind kind);
ScaleKind scale_kind_from_string(std::string_view s);

/// Ground truth is metric.
inline bool is_metric(ScaleKind kind) { return kind != ScaleKind::relative; }

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    bool operator==(const Intrinsics&) const = default;
};

/// Pinhole camera with world->camera pose: x_cam = R x_world + t.
/// Construction enforces R^T R = I and det R = +1 within 1e-9, fx, fy > 0.
class CameraModel {
public:
    CameraModel(Intrinsics k, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation, ScaleKind kind);

    /// Quaternion (w, x, y, z); normalized before use.
    static CameraModel from_quaternion(Intrinsics k, const Eigen::Vector4d& wxyz, const Eigen::Vector3d& translation,
                                       ScaleKind kind);

    const Intrinsics& intrinsics() const { return k_; }
    const Eigen::Matrix3d& rotation() const { return r_; }
    const Eigen::Vector3d& translation() const { return t_; }
    ScaleKind scale_kind() const { return kind_; }
    Eigen::Matrix3d k_matrix() const;
    /// Camera center in world coordinates, -R^T t.
    Eigen::Vector3d center() const { return -r_.transpose() * t_; }
    Eigen::Vector4d quaternion() const;

    CameraModel with_kind(ScaleKind kind) const { return CameraModel(k_, r_, t_, kind); }

private:
    Intrinsics k_;
    Eigen::Matrix3d r_;
    Eigen::Vector3d t_;
    ScaleKind kind_;
};

/// Pose of `cam` re-expressed in the frame whose world->camera pose is `reference`.
CameraModel relative_to(const CameraModel& cam, const CameraModel& reference);

/// {quaternion, rotation (row-major), translation, fx, fy, cx, cy, scale_kind}; the
/// rotation entry is optional on input.
nlohmann::json camera_to_json(const CameraModel& cam);
CameraModel camera_from_json(const nlohmann::json& j);

/// H x W depth values with a validity mask; every valid value is > 0.
class DepthMap {
public:
    /// An empty mask marks every finite positive value valid.
    DepthMap(std::size_t height, std::size_t width, std::vector<double> values, ScaleKind kind,
             std::vector<std::uint8_t> valid = {});

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    std::size_t size() const { return values_.size(); }
    ScaleKind scale_kind() const { return kind_; }
    double at(std::size_t row, std::size_t col) const { return values_[row * w_ + col]; }
    bool valid(std::size_t row, std::size_t col) const { return valid_[row * w_ + col] != 0; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<std::uint8_t>& mask() const { return valid_; }
    std::size_t valid_count() const;

    /// Bilinear sample at continuous pixel coordinates (x = column, y = row),
    /// clamped to the image.
    double bilinear(double x, double y) const;

    DepthMap with_kind(ScaleKind kind) const { return DepthMap(h_, w_, values_, kind, valid_); }

private:
    std::size_t h_;
    std::size_t w_;
    std::vector<double> values_;
    std::vector<std::uint8_t> valid_;
    ScaleKind kind_;
};

} // namespace geovid
