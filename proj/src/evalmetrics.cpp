// SPDX-License-Identifier: Apache-2.0
#include "geovid/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "geovid/errors.hpp"

namespace geovid::eval {

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    if (pose) {
        j["pose"] = {{"RRA@15", pose->rra15}, {"RTA@15", pose->rta15}, {"mAA30", pose->maa30},
                     {"pairs", pose->pairs}, {"excluded_pairs", pose->excluded}};
    }
    if (depth) {
        j["depth"] = {{"AbsRel", depth->abs_rel}, {"RMSE", depth->rmse}, {"log10", depth->log10}, {"delta1", depth->delta1}};
    }
    if (recon) {
        j["recon"] = {{"Acc", recon->acc}, {"Comp", recon->comp}, {"Prec", recon->prec},
                      {"Recall", recon->recall}, {"Fscore", recon->fscore}};
    }
    return j;
}

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double rotation_angle_deg(const Eigen::Matrix3d& r) {
    const Eigen::Vector3d u(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return std::atan2(0.5 * u.norm(), 0.5 * (r.trace() - 1.0)) * kRadToDeg;
}

double vector_angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg;
}

} // namespace

std::vector<PairErrors> pair_errors(const std::vector<CameraModel>& pred, const std::vector<CameraModel>& gt,
                                    std::size_t* excluded) {
    if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth camera counts differ");
    if (pred.size() < 2) throw ParameterError("pose metrics need at least two cameras");
    std::vector<PairErrors> out;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < pred.size(); ++j) {
            if (i == j) continue;
            const Eigen::Matrix3d rp = pred[j].rotation() * pred[i].rotation().transpose();
            const Eigen::Matrix3d rg = gt[j].rotation() * gt[i].rotation().transpose();
            const Eigen::Vector3d tp = pred[j].translation() - rp * pred[i].translation();
            const Eigen::Vector3d tg = gt[j].translation() - rg * gt[i].translation();
            if (tp.norm() == 0.0 || tg.norm() == 0.0) {
                ++skipped;
                continue;
            }
            out.push_back({rotation_angle_deg(rp * rg.transpose()), vector_angle_deg(tp, tg)});
        }
    }
    if (excluded) *excluded = skipped;
    return out;
}

PoseBlock pose_metrics(const std::vector<CameraModel>& pred, const std::vector<CameraModel>& gt) {
    PoseBlock b;
    const auto errs = pair_errors(pred, gt, &b.excluded);
    b.pairs = errs.size();
    if (errs.empty()) return b;
    const double n = static_cast<double>(errs.size());
    std::size_t rot_ok = 0, trans_ok = 0;
    for (const auto& e : errs) {
        rot_ok += e.rot_deg < 15.0 ? 1 : 0;
        trans_ok += e.trans_deg < 15.0 ? 1 : 0;
    }
    b.rra15 = 100.0 * static_cast<double>(rot_ok) / n;
    b.rta15 = 100.0 * static_cast<double>(trans_ok) / n;
    double acc = 0.0;
    for (int t = 1; t <= 30; ++t) {
        std::size_t ok = 0;
        for (const auto& e : errs) ok += std::max(e.rot_deg, e.trans_deg) < static_cast<double>(t) ? 1 : 0;
        acc += 100.0 * static_cast<double>(ok) / n;
    }
    b.maa30 = acc / 30.0;
    return b;
}

namespace {

struct DepthSums {
    double abs_rel = 0, sq = 0, log10 = 0, delta = 0;
    std::size_t n = 0;

    void add(const DepthMap& pred, const DepthMap& gt) {
        if (!is_metric(pred.scale_kind()) || !is_metric(gt.scale_kind())) throw StateError("depth metrics need metric depth");
        if (pred.height() != gt.height() || pred.width() != gt.width()) throw ShapeError("depth maps differ in size");
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (!pred.mask()[i] || !gt.mask()[i]) continue;
            const double p = pred.values()[i], g = gt.values()[i];
            abs_rel += std::abs(p - g) / g;
            sq += (p - g) * (p - g);
            log10 += std::abs(std::log10(p) - std::log10(g));
            delta += std::max(p / g, g / p) < 1.25 ? 1.0 : 0.0;
            ++n;
        }
    }

    DepthBlock finish() const {
        if (n == 0) throw DegenerateInputError("no pixel is valid in both depth maps");
        const double k = static_cast<double>(n);
        return {abs_rel / k, std::sqrt(sq / k), log10 / k, delta / k};
    }
};

} // namespace

DepthBlock depth_metrics(const DepthMap& pred, const DepthMap& gt) {
    DepthSums s;
    s.add(pred, gt);
    return s.finish();
}

DepthBlock depth_metrics(const std::vector<DepthMap>& pred, const std::vector<DepthMap>& gt) {
    if (pred.size() != gt.size()) throw ShapeError("depth map counts differ");
    DepthSums s;
    for (std::size_t i = 0; i < pred.size(); ++i) s.add(pred[i], gt[i]);
    return s.finish();
}

namespace {

double dist(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct CellKey {
    long long x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const {
        return static_cast<std::size_t>(k.x * 73856093LL ^ k.y * 19349663LL ^ k.z * 83492791LL);
    }
};

class GridIndex {
public:
    GridIndex(const std::vector<Eigen::Vector3d>& pts, double cell) : pts_(pts), cell_(cell) {
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(i);
    }

    double nearest(const Eigen::Vector3d& q) const {
        constexpr long long kMaxRing = 6;
        const CellKey c = key(q);
        double best = std::numeric_limits<double>::infinity();
        for (long long r = 0; r <= kMaxRing; ++r) {
            for (long long dx = -r; dx <= r; ++dx) {
                for (long long dy = -r; dy <= r; ++dy) {
                    for (long long dz = -r; dz <= r; ++dz) {
                        if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != r) continue;
                        const auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                        if (it == cells_.end()) continue;
                        for (std::size_t i : it->second) best = std::min(best, dist(q, pts_[i]));
                    }
                }
            }
            // Anything outside rings 0..r lies at least r cells away.
            if (best <= static_cast<double>(r) * cell_) return best;
        }
        for (const auto& p : pts_) best = std::min(best, dist(q, p));
        return best;
    }

private:
    CellKey key(const Eigen::Vector3d& p) const {
        return {static_cast<long long>(std::floor(p.x() / cell_)), static_cast<long long>(std::floor(p.y() / cell_)),
                static_cast<long long>(std::floor(p.z() / cell_))};
    }

    const std::vector<Eigen::Vector3d>& pts_;
    double cell_;
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

} // namespace

std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& query, const std::vector<Eigen::Vector3d>& ref,
                                      double cell_hint) {
    if (ref.empty()) throw ParameterError("reference cloud is empty");
    Eigen::Vector3d lo = ref[0], hi = ref[0];
    for (const auto& p : ref) {
        if (!p.allFinite()) throw DomainError("point cloud has non-finite coordinates");
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = (hi - lo).maxCoeff();
    const double cell = std::max({cell_hint, extent / 64.0, 1e-9});
    const GridIndex index(ref, cell);
    std::vector<double> out;
    out.reserve(query.size());
    for (const auto& q : query) out.push_back(index.nearest(q));
    return out;
}

ReconBlock pointcloud_metrics(const p3d::PointCloud& pred, const p3d::PointCloud& gt, double tau) {
    if (pred.points.empty() || gt.points.empty()) throw ParameterError("point-cloud metrics need non-empty clouds");
    if (!(tau > 0)) throw ParameterError("threshold must be positive");
    const auto d_pred = nearest_distances(pred.points, gt.points, tau);
    const auto d_gt = nearest_distances(gt.points, pred.points, tau);
    ReconBlock b;
    double acc = 0, comp = 0;
    std::size_t prec = 0, rec = 0;
    for (double d : d_pred) {
        acc += d;
        prec += d < tau ? 1 : 0;
    }
    for (double d : d_gt) {
        comp += d;
        rec += d < tau ? 1 : 0;
    }
    b.acc = acc / static_cast<double>(d_pred.size());
    b.comp = comp / static_cast<double>(d_gt.size());
    b.prec = static_cast<double>(prec) / static_cast<double>(d_pred.size());
    b.recall = static_cast<double>(rec) / static_cast<double>(d_gt.size());
    b.fscore = (b.prec + b.recall) > 0 ? 2.0 * b.prec * b.recall / (b.prec + b.recall) : 0.0;
    return b;
}

} // namespace geovid::eval
