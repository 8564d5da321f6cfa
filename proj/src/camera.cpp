// SPDX-License-Identifier: Apache-2.0
#include "geovid/camera.hpp"

#include <algorithm>
#include <cmath>

#include "geovid/errors.hpp"

namespace geovid {

std::string_view to_string(ScaleKind kind) {
    switch (kind) {
    case ScaleKind::relative: return "relative";
    case ScaleKind::metric: return "metric";
    case ScaleKind::ground_truth: return "ground_truth";
    }
    return "relative";
}

ScaleKind scale_kind_from_string(std::string_view s) {
    if (s == "relative") return ScaleKind::relative;
    if (s == "metric") return ScaleKind::metric;
    if (s == "ground_truth") return ScaleKind::ground_truth;
    throw ParameterError("unknown scale kind '" + std::string(s) + "'");
}

CameraModel::CameraModel(Intrinsics k, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                         ScaleKind kind)
    : k_(k), r_(rotation), t_(translation), kind_(kind) {
    if (!(k.fx > 0) || !(k.fy > 0)) throw ParameterError("focal lengths must be positive");
    if (!r_.allFinite() || !t_.allFinite() || !std::isfinite(k.cx) || !std::isfinite(k.cy)) {
        throw NumericError("camera parameters must be finite");
    }
    const double ortho = (r_.transpose() * r_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 || std::abs(r_.determinant() - 1.0) > 1e-9) {
        throw ParameterError("rotation is not orthonormal with determinant +1");
    }
}

CameraModel CameraModel::from_quaternion(Intrinsics k, const Eigen::Vector4d& wxyz, const Eigen::Vector3d& translation,
                                         ScaleKind kind) {
    const double n = wxyz.norm();
    if (!(n > 0)) throw ParameterError("zero quaternion");
    const Eigen::Quaterniond q(wxyz[0] / n, wxyz[1] / n, wxyz[2] / n, wxyz[3] / n);
    return CameraModel(k, q.toRotationMatrix(), translation, kind);
}

Eigen::Matrix3d CameraModel::k_matrix() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = k_.fx;
    k(1, 1) = k_.fy;
    k(0, 2) = k_.cx;
    k(1, 2) = k_.cy;
    return k;
}

Eigen::Vector4d CameraModel::quaternion() const {
    Eigen::Quaterniond q(r_);
    if (q.w() < 0) q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
}

CameraModel relative_to(const CameraModel& cam, const CameraModel& reference) {
    // x_cam = R x_w + t, x_ref = R0 x_w + t0  =>  x_cam = R R0^T x_ref + (t - R R0^T t0)
    const Eigen::Matrix3d r = cam.rotation() * reference.rotation().transpose();
    Eigen::Matrix3d rn = Eigen::Quaterniond(r).normalized().toRotationMatrix();
    const Eigen::Vector3d t = cam.translation() - r * reference.translation();
    return CameraModel(cam.intrinsics(), rn, t, cam.scale_kind());
}

nlohmann::json camera_to_json(const CameraModel& cam) {
    const auto q = cam.quaternion();
    const auto& t = cam.translation();
    const auto& k = cam.intrinsics();
    const auto& r = cam.rotation();
    // The quaternion alone does not round-trip bit-exactly; the reader prefers the matrix.
    return {{"quaternion", {q[0], q[1], q[2], q[3]}},
            {"rotation", {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}},
            {"translation", {t[0], t[1], t[2]}},
            {"fx", k.fx},
            {"fy", k.fy},
            {"cx", k.cx},
            {"cy", k.cy},
            {"scale_kind", std::string(to_string(cam.scale_kind()))}};
}

CameraModel camera_from_json(const nlohmann::json& j) {
    try {
        const auto q = j.at("quaternion").get<std::vector<double>>();
        const auto t = j.at("translation").get<std::vector<double>>();
        if (q.size() != 4 || t.size() != 3) throw ParameterError("camera JSON needs 4 quaternion and 3 translation entries");
        Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
        const ScaleKind kind = scale_kind_from_string(j.at("scale_kind").get<std::string>());
        if (j.contains("rotation")) {
            const auto rv = j.at("rotation").get<std::vector<double>>();
            if (rv.size() != 9) throw ParameterError("camera JSON rotation needs 9 entries");
            Eigen::Matrix3d r;
            for (int i = 0; i < 3; ++i)
                for (int c = 0; c < 3; ++c) r(i, c) = rv[static_cast<std::size_t>(i * 3 + c)];
            return CameraModel(k, r, {t[0], t[1], t[2]}, kind);
        }
        return CameraModel::from_quaternion(k, {q[0], q[1], q[2], q[3]}, {t[0], t[1], t[2]}, kind);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed camera JSON: ") + e.what());
    }
}

DepthMap::DepthMap(std::size_t height, std::size_t width, std::vector<double> values, ScaleKind kind,
                   std::vector<std::uint8_t> valid)
    : h_(height), w_(width), values_(std::move(values)), valid_(std::move(valid)), kind_(kind) {
    if (h_ == 0 || w_ == 0) throw ShapeError("depth map extents must be positive");
    if (values_.size() != h_ * w_) throw ShapeError("depth map value count does not match H x W");
    if (valid_.empty()) {
        valid_.resize(values_.size());
        for (std::size_t i = 0; i < values_.size(); ++i) valid_[i] = std::isfinite(values_[i]) && values_[i] > 0;
    } else {
        if (valid_.size() != values_.size()) throw ShapeError("depth mask size does not match H x W");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (valid_[i] && !(values_[i] > 0 && std::isfinite(values_[i]))) {
                throw ParameterError("valid depth values must be finite and positive");
            }
        }
    }
}

std::size_t DepthMap::valid_count() const {
    return static_cast<std::size_t>(std::count_if(valid_.begin(), valid_.end(), [](auto v) { return v != 0; }));
}

double DepthMap::bilinear(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(w_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h_ - 1));
    const std::size_t x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, w_ - 1);
    const std::size_t y1 = std::min(y0 + 1, h_ - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

} // namespace geovid
