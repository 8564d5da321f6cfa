// SPDX-License-Identifier: Apache-2.0
#include "geovid/recon_heads.hpp"

#include <algorithm>
#include <cmath>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

namespace geovid::recon {

using nk::TokenRole;

PatchGrid PatchGrid::of(ImageSize size, std::size_t patch) {
    if (patch == 0 || size.height == 0 || size.width == 0 || size.height % patch != 0 || size.width % patch != 0) {
        throw ShapeError("image extents must be positive multiples of the patch size");
    }
    return {size.height / patch, size.width / patch, patch};
}

namespace {

struct Lerp {
    std::size_t i0, i1;
    double w1;
};

Lerp lerp_index(double pixel, std::size_t patch, std::size_t cells) {
    double g = (pixel - 0.5 * static_cast<double>(patch - 1)) / static_cast<double>(patch);
    g = std::clamp(g, 0.0, static_cast<double>(cells - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(g));
    const auto i1 = std::min(i0 + 1, cells - 1);
    return {i0, i1, g - static_cast<double>(i0)};
}

Lerp pixel_lerp(double coord, std::size_t extent) {
    coord = std::clamp(coord, 0.0, static_cast<double>(extent - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(coord));
    const auto i1 = std::min(i0 + 1, extent - 1);
    return {i0, i1, coord - static_cast<double>(i0)};
}

Tensor block_forward(const Tensor& x, const AttentionBlock& b) {
    const Tensor h = nk::layer_norm_rows(x);
    const Tensor y = nk::add(x, nk::mha_forward(h, h, h, b.attn));
    return nk::add(y, nk::mlp_forward(nk::layer_norm_rows(y), b.mlp));
}

} // namespace

Tensor upsample_matrix(const PatchGrid& grid, ImageSize size) {
    const std::size_t hw = size.height * size.width;
    std::vector<double> m(hw * grid.count(), 0.0);
    for (std::size_t y = 0; y < size.height; ++y) {
        const Lerp ly = lerp_index(static_cast<double>(y), grid.patch, grid.rows);
        for (std::size_t x = 0; x < size.width; ++x) {
            const Lerp lx = lerp_index(static_cast<double>(x), grid.patch, grid.cols);
            double* row = m.data() + (y * size.width + x) * grid.count();
            row[ly.i0 * grid.cols + lx.i0] += (1 - ly.w1) * (1 - lx.w1);
            row[ly.i0 * grid.cols + lx.i1] += (1 - ly.w1) * lx.w1;
            row[ly.i1 * grid.cols + lx.i0] += ly.w1 * (1 - lx.w1);
            row[ly.i1 * grid.cols + lx.i1] += ly.w1 * lx.w1;
        }
    }
    return Tensor::constant({hw, grid.count()}, std::move(m));
}

Tensor patch_center_sampler(const PatchGrid& grid, ImageSize size) {
    const std::size_t hw = size.height * size.width;
    std::vector<double> m(grid.count() * hw, 0.0);
    for (std::size_t r = 0; r < grid.rows; ++r) {
        const Lerp ly = pixel_lerp(grid.center_y(r), size.height);
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const Lerp lx = pixel_lerp(grid.center_x(c), size.width);
            double* row = m.data() + (r * grid.cols + c) * hw;
            row[ly.i0 * size.width + lx.i0] += (1 - ly.w1) * (1 - lx.w1);
            row[ly.i0 * size.width + lx.i1] += (1 - ly.w1) * lx.w1;
            row[ly.i1 * size.width + lx.i0] += ly.w1 * (1 - lx.w1);
            row[ly.i1 * size.width + lx.i1] += ly.w1 * lx.w1;
        }
    }
    return Tensor::constant({grid.count(), hw}, std::move(m));
}

BackboneParams BackboneParams::init(const BackboneConfig& cfg, nk::Rng& rng) {
    if (cfg.blocks < 2 || cfg.blocks % 2 != 0) throw ParameterError("backbone needs an even number (>= 2) of blocks");
    if (cfg.camera_tokens == 0 || cfg.register_tokens == 0) throw ParameterError("camera/register token counts must be >= 1");
    BackboneParams p;
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
        AttentionBlock b;
        b.attn = MhaParams::init(cfg.dim, cfg.heads, rng, cfg.qk_norm);
        b.mlp = MlpParams::init(cfg.dim, cfg.expansion * cfg.dim, cfg.dim, rng);
        p.blocks.push_back(std::move(b));
    }
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    p.camera_first = nk::random_parameter({cfg.camera_tokens, cfg.dim}, s, rng);
    p.camera_other = nk::random_parameter({cfg.camera_tokens, cfg.dim}, s, rng);
    p.registers = nk::random_parameter({cfg.register_tokens, cfg.dim}, s, rng);
    return p;
}

void BackboneParams::collect(const std::string& prefix, nk::ParamList& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string b = prefix + ".block" + std::to_string(i);
        blocks[i].attn.collect(b + ".attn", out);
        blocks[i].mlp.collect(b + ".mlp", out);
    }
    out.push_back({prefix + ".camera_first", camera_first});
    out.push_back({prefix + ".camera_other", camera_other});
    out.push_back({prefix + ".registers", registers});
}

BackboneOutput gfa_backbone(const std::vector<TokenSet>& frames, const BackboneParams& p) {
    if (frames.empty()) throw ShapeError("backbone needs at least one frame");
    const std::size_t c = frames[0].dim();
    for (const auto& f : frames) {
        if (f.dim() != c) throw ShapeError("all frames must share the token dimension");
        if (f.role() != TokenRole::geom) throw InvalidRoleError("backbone expects geometry tokens");
    }
    if (p.registers.cols() != c) throw ShapeError("backbone parameters do not match the token dimension");

    const std::size_t n_cam = p.camera_first.rows();
    const std::size_t n_reg = p.registers.rows();
    const std::size_t prefix = n_cam + n_reg;
    std::vector<Tensor> seq;
    seq.reserve(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        seq.push_back(nk::concat_rows({f == 0 ? p.camera_first : p.camera_other, p.registers, frames[f].tokens()}));
    }

    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        if (b % 2 == 0 || seq.size() == 1) {
            for (auto& s : seq) s = block_forward(s, p.blocks[b]);
        } else {
            const Tensor joint = block_forward(nk::concat_rows(seq), p.blocks[b]);
            std::size_t off = 0;
            for (auto& s : seq) {
                const std::size_t n = s.rows();
                s = nk::slice_rows(joint, off, n);
                off += n;
            }
        }
    }

    BackboneOutput out;
    for (std::size_t f = 0; f < seq.size(); ++f) {
        const Tensor normed = nk::layer_norm_rows(seq[f]);
        const auto idx = frames[f].frame_index() ? frames[f].frame_index() : std::optional<int>(static_cast<int>(f));
        out.cameras.emplace_back(nk::slice_rows(normed, 0, n_cam), TokenRole::camera, idx);
        out.patches.emplace_back(nk::slice_rows(normed, prefix, frames[f].size()), TokenRole::geom, idx);
    }
    return out;
}

CameraTensors CameraTensors::constant(const CameraModel& cam) {
    CameraTensors ct;
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r[i * 3 + j] = cam.rotation()(i, j);
    const auto& t = cam.translation();
    ct.rotation = Tensor::constant({3, 3}, std::move(r));
    ct.translation = Tensor::constant({1, 3}, {t[0], t[1], t[2]});
    ct.focal = Tensor::constant({1, 2}, {cam.intrinsics().fx, cam.intrinsics().fy});
    ct.cx = cam.intrinsics().cx;
    ct.cy = cam.intrinsics().cy;
    ct.kind = cam.scale_kind();
    return ct;
}

CameraModel CameraTensors::model() const {
    Eigen::Matrix3d r;
    const auto rd = rotation.data();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = rd[i * 3 + j];
    const auto td = translation.data();
    const auto fd = focal.data();
    return CameraModel(Intrinsics{fd[0], fd[1], cx, cy}, r, Eigen::Vector3d(td[0], td[1], td[2]), kind);
}

CameraTensors CameraTensors::scaled(double s, ScaleKind new_kind) const {
    CameraTensors out = *this;
    out.translation = nk::scale(translation, s);
    out.kind = new_kind;
    return out;
}

CameraHeadParams CameraHeadParams::init(std::size_t dim, double base_focal, nk::Rng& rng) {
    CameraHeadParams p;
    p.mlp = MlpParams::init(dim, dim, 8, rng, /*zero_output=*/true);
    p.base_focal = base_focal;
    return p;
}

void CameraHeadParams::collect(const std::string& prefix, nk::ParamList& out) const { mlp.collect(prefix + ".mlp", out); }

CameraTensors camera_head(const TokenSet& camera_tokens, const CameraHeadParams& p, ImageSize size) {
    if (camera_tokens.size() == 0) throw ShapeError("camera head needs at least one camera token");
    const Tensor raw = nk::mlp_forward(nk::slice_rows(camera_tokens.tokens(), 0, 1), p.mlp);
    const Tensor identity = Tensor::constant({1, 4}, {1.0, 0.0, 0.0, 0.0});
    const Tensor quat = nk::normalize_rows(nk::add(nk::slice_cols(raw, 0, 4), identity));
    const Tensor log_focal = nk::slice_cols(raw, 7, 1);
    const Tensor f = nk::scale(nk::exp(log_focal), p.base_focal);

    CameraTensors out;
    out.rotation = nk::quat_to_rotmat(quat);
    out.translation = nk::slice_cols(raw, 4, 3);
    out.focal = nk::concat_cols({f, f});
    out.cx = 0.5 * static_cast<double>(size.width - 1);
    out.cy = 0.5 * static_cast<double>(size.height - 1);
    out.kind = ScaleKind::relative;
    return out;
}

DepthHeadParams DepthHeadParams::init(std::size_t dim, std::size_t patch, nk::Rng& rng) {
    DepthHeadParams p;
    p.weight = nk::random_parameter({dim, 1}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    p.bias = Tensor::zeros({1}, true);
    p.patch = patch;
    return p;
}

void DepthHeadParams::collect(const std::string& prefix, nk::ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Tensor depth_head(const TokenSet& patch_tokens, ImageSize size, const DepthHeadParams& p) {
    const PatchGrid grid = PatchGrid::of(size, p.patch);
    if (patch_tokens.size() != grid.count()) {
        throw ShapeError("depth head got " + std::to_string(patch_tokens.size()) + " tokens for a " +
                         std::to_string(grid.count()) + "-patch grid");
    }
    const Tensor logits = nk::linear(patch_tokens.tokens(), p.weight, p.bias);
    return nk::softplus(nk::matmul(upsample_matrix(grid, size), logits));
}

DepthMap to_depth_map(const Tensor& pixels, ImageSize size, ScaleKind kind) {
    if (pixels.numel() != size.height * size.width) throw ShapeError("pixel tensor does not match the image size");
    return DepthMap(size.height, size.width, std::vector<double>(pixels.data().begin(), pixels.data().end()), kind);
}

} // namespace geovid::recon
