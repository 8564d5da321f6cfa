// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "geovid/camera.hpp"
#include "geovid/numkit/nn.hpp"
#include "geovid/recon_heads.hpp"

// Lifting 2D tokens into 3D: pixel back-projection, point clouds, and
// positional-embedding fusion.
namespace geovid::p3d {

using nk::MlpParams;
using nk::Tensor;
using nk::TokenSet;

struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> colors; ///< empty, or one RGB in [0,1] per point
    std::optional<int> source_frame;

    std::size_t size() const { return points.size(); }
};

struct Patch3DTokens {
    Tensor tokens; ///< [N, C]
    std::vector<Eigen::Vector3d> anchor_points;

    nlohmann::json anchors_json() const;
};

/// World point of pixel (i = column, j = row) at depth d:
/// R^-1 K^-1 [i, j, 1]^T d - R^-1 t.
Eigen::Vector3d backproject(double i, double j, double d, const CameraModel& cam);

struct Projection {
    double i; ///< column
    double j; ///< row
    double depth;
};

/// Inverse of backproject. Points with camera-frame z <= 0 raise DomainError.
Projection project(const Eigen::Vector3d& point, const CameraModel& cam);

/// Every valid pixel of a metric depth map, lifted to world space.
PointCloud depth_to_cloud(const DepthMap& depth, const CameraModel& cam);

/// MLP over raw (x, y, z): returns [1, C].
Tensor positional_embed(const Eigen::Vector3d& point, const MlpParams& p);
/// Row-wise embedding of points [N, 3] -> [N, C].
Tensor positional_embed(const Tensor& points, const MlpParams& p);

/// Depth sampled bilinearly at every patch center; tokens in row-major patch order.
Patch3DTokens fuse_tokens(const TokenSet& lang, const DepthMap& depth, const CameraModel& cam, const MlpParams& p,
                          std::size_t patch);

/// Differentiable back-projection. `pixels` is a constant [N, 2] of (i, j),
/// `depth` is [N, 1]; returns world points [N, 3].
Tensor backproject_tensor(const Tensor& pixels, const Tensor& depth, const recon::CameraTensors& cam);

/// Pixel coordinates of every pixel (row-major) as a constant [H*W, 2].
Tensor pixel_grid(recon::ImageSize size);
/// Patch-center coordinates as a constant [P, 2].
Tensor patch_center_grid(const recon::PatchGrid& grid);

struct FusedTensors {
    Tensor tokens;  ///< [P, C]
    Tensor anchors; ///< [P, 3]
};

/// Graph form of fuse_tokens: depth_pixels is [H*W, 1].
FusedTensors fuse_tokens_tensor(const Tensor& lang, const Tensor& depth_pixels, const recon::CameraTensors& cam,
                                const MlpParams& p, recon::ImageSize size, std::size_t patch);

/// ASCII PLY: "element vertex" with x y z and optional red green blue (0-255).
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

} // namespace geovid::p3d
