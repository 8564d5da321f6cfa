// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "geovid/camera.hpp"
#include "geovid/numkit/nn.hpp"
#include "geovid/recon_heads.hpp"
#include "json.hpp"

// Procedural rooms of axis-aligned boxes with exact ray-cast ground truth.
// World frame is z-up.
namespace geovid::synth {

using nk::Tensor;
using nk::TokenSet;

inline constexpr int kFloor = 0;
inline constexpr int kCeiling = 1;
inline constexpr int kWall = 2;
inline constexpr int kFirstObjectClass = 3;
inline constexpr std::size_t kNumClasses = 8;
/// mean depth, log depth, 2 slopes, normal (3), class histogram, patch coords (2)
inline constexpr std::size_t kDescriptorDim = 7 + kNumClasses + 2;

struct Box {
    Eigen::Vector3d lo;
    Eigen::Vector3d hi;
    int cls = kFirstObjectClass;
};

/// Closed room interior plus solid boxes inside it.
struct SceneGeometry {
    Eigen::Vector3d room_lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d room_hi = Eigen::Vector3d::Ones();
    std::vector<Box> objects;

    double diagonal() const { return (room_hi - room_lo).norm(); }
    nlohmann::json to_json() const;
    static SceneGeometry from_json(const nlohmann::json& j);
};

struct Hit {
    double t = 0.0; ///< ray parameter
    int cls = -1;
    Eigen::Vector3d normal = Eigen::Vector3d::Zero(); ///< world, facing the ray origin
};

/// First surface hit along origin + t dir, t > 0. The origin must be inside the room.
Hit cast_ray(const SceneGeometry& g, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

struct PixelSample {
    double depth; ///< camera-frame z
    int cls;
    Eigen::Vector3d normal_cam;
};

/// Ray through continuous pixel (i = column, j = row).
PixelSample render_pixel(const SceneGeometry& g, const CameraModel& cam, double i, double j);

struct Frame {
    CameraModel camera;                ///< ground truth, world->camera
    DepthMap depth;                    ///< ground truth, z-depth
    std::vector<int> labels;           ///< per-pixel class ids
    Tensor descriptors;                ///< [P, kDescriptorDim], noisy
    Tensor teacher_geom;               ///< [P, Ct], unit rows
    Tensor teacher_lang;               ///< [P, Ct], unit rows
    std::vector<std::size_t> patch_labels; ///< majority class per patch
};

struct SceneOptions {
    std::size_t frames = 32;
    recon::ImageSize size{56, 56};
    std::size_t patch = 14;
    std::size_t objects = 5;
    std::size_t teacher_dim = 64;
    double noise = 0.01;
    double fov_deg = 60.0;
};

struct SceneSample {
    std::uint64_t seed = 0;
    SceneOptions options;
    SceneGeometry geometry;
    std::vector<Frame> frames;
};

SceneSample gen_scene(std::uint64_t seed, const SceneOptions& opts = {});

/// Intrinsics for a horizontal field of view, principal point at the image center.
Intrinsics intrinsics_for(recon::ImageSize size, double fov_deg);

/// Exact per-patch descriptors from ground truth (no noise).
std::vector<double> patch_descriptors(const DepthMap& depth, const std::vector<int>& labels,
                                      const std::vector<Eigen::Vector3d>& normals_cam, std::size_t patch);

struct TeacherFeatures {
    Tensor geom;
    Tensor lang;
};

/// Fixed embeddings of the noise-free descriptors; shared by every scene.
TeacherFeatures teacher_features(const std::vector<double>& clean_descriptors, std::size_t patches,
                                 std::size_t teacher_dim);

/// Trainable linear encoder from descriptors to base tokens.
struct EncoderParams {
    Tensor weight; ///< [kDescriptorDim, C]
    Tensor bias;   ///< [C]

    static EncoderParams init(std::size_t dim, nk::Rng& rng);
    void collect(const std::string& prefix, nk::ParamList& out) const;
};

TokenSet render_tokens(const Frame& frame, const EncoderParams& enc, std::optional<int> frame_index = std::nullopt);
/// Same encoder applied to a descriptor matrix (used for jittered inputs).
Tensor encode(const Tensor& descriptors, const EncoderParams& enc);

void save_scene(const SceneSample& s, const std::filesystem::path& dir);
SceneSample load_scene(const std::filesystem::path& dir);

} // namespace geovid::synth
