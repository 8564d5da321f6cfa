// SPDX-License-Identifier: Apache-2.0
#include "geovid/patch3d.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

namespace geovid::p3d {

nlohmann::json Patch3DTokens::anchors_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : anchor_points) arr.push_back({a.x(), a.y(), a.z()});
    return {{"count", anchor_points.size()}, {"anchors", arr}};
}

Eigen::Vector3d backproject(double i, double j, double d, const CameraModel& cam) {
    if (!(d > 0) || !std::isfinite(d)) throw DomainError("back-projection needs a positive depth");
    if (!is_metric(cam.scale_kind())) throw StateError("back-projection needs a metric camera");
    const auto& k = cam.intrinsics();
    const Eigen::Vector3d ray((i - k.cx) / k.fx, (j - k.cy) / k.fy, 1.0);
    const Eigen::Matrix3d rinv = cam.rotation().transpose();
    return rinv * (ray * d) - rinv * cam.translation();
}

Projection project(const Eigen::Vector3d& point, const CameraModel& cam) {
    const Eigen::Vector3d pc = cam.rotation() * point + cam.translation();
    if (!(pc.z() > 0)) throw DomainError("point is behind the camera");
    const auto& k = cam.intrinsics();
    return {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy, pc.z()};
}

PointCloud depth_to_cloud(const DepthMap& depth, const CameraModel& cam) {
    if (!is_metric(depth.scale_kind())) throw StateError("point clouds need metric depth");
    PointCloud cloud;
    cloud.points.reserve(depth.valid_count());
    for (std::size_t r = 0; r < depth.height(); ++r) {
        for (std::size_t c = 0; c < depth.width(); ++c) {
            if (!depth.valid(r, c)) continue;
            cloud.points.push_back(backproject(static_cast<double>(c), static_cast<double>(r), depth.at(r, c), cam));
        }
    }
    return cloud;
}

Tensor positional_embed(const Tensor& points, const MlpParams& p) {
    if (points.ndim() != 2 || points.cols() != 3) throw ShapeError("positional embedding expects [N, 3] points");
    if (p.in_dim() != 3) throw ShapeError("positional MLP must take 3 inputs");
    return nk::mlp_forward(points, p);
}

Tensor positional_embed(const Eigen::Vector3d& point, const MlpParams& p) {
    if (!point.allFinite()) throw DomainError("point has non-finite coordinates");
    return positional_embed(Tensor::constant({1, 3}, {point.x(), point.y(), point.z()}), p);
}

Patch3DTokens fuse_tokens(const TokenSet& lang, const DepthMap& depth, const CameraModel& cam, const MlpParams& p,
                          std::size_t patch) {
    const recon::PatchGrid grid = recon::PatchGrid::of({depth.height(), depth.width()}, patch);
    if (lang.size() != grid.count()) throw ShapeError("token count does not match the depth patch grid");
    if (p.out_dim() != lang.dim()) throw ShapeError("positional MLP width does not match the tokens");
    Patch3DTokens out;
    std::vector<double> flat;
    flat.reserve(3 * grid.count());
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const double x = grid.center_x(c), y = grid.center_y(r);
            const Eigen::Vector3d a = backproject(x, y, depth.bilinear(x, y), cam);
            out.anchor_points.push_back(a);
            flat.insert(flat.end(), {a.x(), a.y(), a.z()});
        }
    }
    const Tensor anchors = Tensor::constant({grid.count(), 3}, std::move(flat));
    out.tokens = nk::add(lang.tokens(), positional_embed(anchors, p));
    return out;
}

Tensor backproject_tensor(const Tensor& pixels, const Tensor& depth, const recon::CameraTensors& cam) {
    if (pixels.ndim() != 2 || pixels.cols() != 2) throw ShapeError("pixel coordinates must be [N, 2]");
    if (depth.rows() != pixels.rows() || depth.cols() != 1) throw ShapeError("depth must be [N, 1]");
    const std::size_t n = pixels.rows();
    std::vector<double> xo(n), yo(n);
    for (std::size_t k = 0; k < n; ++k) {
        xo[k] = pixels.at(k, 0) - cam.cx;
        yo[k] = pixels.at(k, 1) - cam.cy;
    }
    const Tensor rx = nk::div(Tensor::constant({n, 1}, std::move(xo)), nk::slice_cols(cam.focal, 0, 1));
    const Tensor ry = nk::div(Tensor::constant({n, 1}, std::move(yo)), nk::slice_cols(cam.focal, 1, 1));
    const Tensor ray = nk::concat_cols({rx, ry, Tensor::full({n, 1}, 1.0)});
    // Row vectors: v R equals (R^T v)^T.
    return nk::sub(nk::matmul(nk::mul(ray, depth), cam.rotation), nk::matmul(cam.translation, cam.rotation));
}

Tensor pixel_grid(recon::ImageSize size) {
    std::vector<double> v;
    v.reserve(2 * size.height * size.width);
    for (std::size_t r = 0; r < size.height; ++r)
        for (std::size_t c = 0; c < size.width; ++c) v.insert(v.end(), {static_cast<double>(c), static_cast<double>(r)});
    return Tensor::constant({size.height * size.width, 2}, std::move(v));
}

Tensor patch_center_grid(const recon::PatchGrid& grid) {
    std::vector<double> v;
    v.reserve(2 * grid.count());
    for (std::size_t r = 0; r < grid.rows; ++r)
        for (std::size_t c = 0; c < grid.cols; ++c) v.insert(v.end(), {grid.center_x(c), grid.center_y(r)});
    return Tensor::constant({grid.count(), 2}, std::move(v));
}

FusedTensors fuse_tokens_tensor(const Tensor& lang, const Tensor& depth_pixels, const recon::CameraTensors& cam,
                                const MlpParams& p, recon::ImageSize size, std::size_t patch) {
    const recon::PatchGrid grid = recon::PatchGrid::of(size, patch);
    if (lang.rows() != grid.count()) throw ShapeError("token count does not match the patch grid");
    if (depth_pixels.rows() != size.height * size.width) throw ShapeError("depth does not match the image size");
    const Tensor d = nk::matmul(recon::patch_center_sampler(grid, size), depth_pixels);
    FusedTensors out;
    out.anchors = backproject_tensor(patch_center_grid(grid), d, cam);
    out.tokens = nk::add(lang, positional_embed(out.anchors, p));
    return out;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
    const bool colored = !cloud.colors.empty();
    if (colored && cloud.colors.size() != cloud.points.size()) throw ShapeError("one color per point required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    char buf[128];
    for (std::size_t k = 0; k < cloud.size(); ++k) {
        const auto& p = cloud.points[k];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
        out << buf;
        if (colored) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(cloud.colors[k][c], 0.0, 1.0);
                out << ' ' << static_cast<int>(std::lround(v * 255.0));
            }
        }
        out << '\n';
    }
    if (!out) throw IoError("failed while writing " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "ply") throw IoError(path.string() + " is not a PLY file");
    std::size_t count = 0;
    std::size_t props = 0;
    bool ascii = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (word == "element") {
            std::string what;
            ls >> what >> count;
            if (what != "vertex") throw IoError("only vertex elements are supported");
        } else if (word == "property") {
            ++props;
        } else if (word == "end_header") {
            break;
        }
    }
    if (!ascii) throw IoError("only ASCII PLY is supported");
    if (props != 3 && props != 6) throw IoError("expected x y z [red green blue] vertex properties");
    PointCloud cloud;
    cloud.points.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        double x, y, z;
        if (!(in >> x >> y >> z)) throw IoError("truncated PLY vertex list");
        cloud.points.emplace_back(x, y, z);
        if (props == 6) {
            int r, g, b;
            if (!(in >> r >> g >> b)) throw IoError("truncated PLY vertex list");
            cloud.colors.emplace_back(r / 255.0, g / 255.0, b / 255.0);
        }
    }
    return cloud;
}

} // namespace geovid::p3d
