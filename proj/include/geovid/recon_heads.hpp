// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "geovid/camera.hpp"
#include "geovid/numkit/nn.hpp"

namespace geovid::recon {

using nk::MhaParams;
using nk::MlpParams;
using nk::Tensor;
using nk::TokenSet;

struct ImageSize {
    std::size_t height = 56;
    std::size_t width = 56;
};

/// Patch grid of an image; both extents must be multiples of the patch size.
struct PatchGrid {
    std::size_t rows;
    std::size_t cols;
    std::size_t patch;

    static PatchGrid of(ImageSize size, std::size_t patch);
    std::size_t count() const { return rows * cols; }
    /// Pixel coordinate of the center of patch column `c` / row `r`.
    double center_x(std::size_t c) const { return static_cast<double>(c * patch) + 0.5 * static_cast<double>(patch - 1); }
    double center_y(std::size_t r) const { return static_cast<double>(r * patch) + 0.5 * static_cast<double>(patch - 1); }
};

/// Constant [H*W, P] matrix that bilinearly interpolates per-patch values
/// (anchored at patch centers) onto every pixel.
Tensor upsample_matrix(const PatchGrid& grid, ImageSize size);
/// Constant [P, H*W] matrix that samples a pixel map at the patch centers.
Tensor patch_center_sampler(const PatchGrid& grid, ImageSize size);

struct BackboneConfig {
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t blocks = 4;
    std::size_t camera_tokens = 1;
    std::size_t register_tokens = 4;
    std::size_t expansion = 4;
    bool qk_norm = true;
};

struct AttentionBlock {
    MhaParams attn;
    MlpParams mlp;
};

/// Even blocks attend within a frame, odd blocks across all frames.
struct BackboneParams {
    std::vector<AttentionBlock> blocks;
    Tensor camera_first; ///< camera tokens of the reference (first) frame
    Tensor camera_other; ///< camera tokens of every other frame
    Tensor registers;

    static BackboneParams init(const BackboneConfig& cfg, nk::Rng& rng);
    void collect(const std::string& prefix, nk::ParamList& out) const;
};

struct BackboneOutput {
    std::vector<TokenSet> patches;
    std::vector<TokenSet> cameras;
};

BackboneOutput gfa_backbone(const std::vector<TokenSet>& frames, const BackboneParams& p);

/// Camera as graph tensors so that losses can reach the head.
struct CameraTensors {
    Tensor rotation;    ///< [3,3] world->camera
    Tensor translation; ///< [1,3]
    Tensor focal;       ///< [1,2] (fx, fy)
    double cx = 0.0;
    double cy = 0.0;
    ScaleKind kind = ScaleKind::relative;

    static CameraTensors constant(const CameraModel& cam);
    CameraModel model() const;
    /// Translation multiplied by s (a constant); rotation and intrinsics shared.
    CameraTensors scaled(double s, ScaleKind new_kind) const;
};

struct CameraHeadParams {
    MlpParams mlp; ///< C -> hidden -> 8 (quaternion 4, translation 3, log focal 1)
    double base_focal = 1.0;

    /// The output layer starts at zero so the first prediction is the identity pose.
    static CameraHeadParams init(std::size_t dim, double base_focal, nk::Rng& rng);
    void collect(const std::string& prefix, nk::ParamList& out) const;
};

CameraTensors camera_head(const TokenSet& camera_tokens, const CameraHeadParams& p, ImageSize size);

struct DepthHeadParams {
    Tensor weight; ///< [C,1]
    Tensor bias;   ///< [1]
    std::size_t patch = 14;

    static DepthHeadParams init(std::size_t dim, std::size_t patch, nk::Rng& rng);
    void collect(const std::string& prefix, nk::ParamList& out) const;
};

/// Per-pixel relative depth, [H*W, 1] row-major, strictly positive.
Tensor depth_head(const TokenSet& patch_tokens, ImageSize size, const DepthHeadParams& p);

DepthMap to_depth_map(const Tensor& pixels, ImageSize size, ScaleKind kind);

} // namespace geovid::recon
