// SPDX-License-Identifier: Apache-2.0
#include "geovid/harness/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <algorithm>
#include <sstream>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"
#include "geovid/numkit/vlt1.hpp"

namespace geovid::harness {

using nk::Tensor;
using nk::TokenRole;
using nk::TokenSet;

nlohmann::json PipelineOutput::report_json() const {
    nlohmann::json j;
    j["frames"] = frames;
    j["metrics"] = metrics.to_json();
    j["scale"] = scale ? scale->to_json() : nlohmann::json(nullptr);
    j["error"] = error ? nlohmann::json(*error) : nlohmann::json(nullptr);
    j["points"] = cloud.size();
    return j;
}

namespace {

p3d::PointCloud merge_clouds(const std::vector<DepthMap>& depth, const std::vector<CameraModel>& cams) {
    p3d::PointCloud all;
    for (std::size_t k = 0; k < depth.size(); ++k) {
        const p3d::PointCloud c = p3d::depth_to_cloud(depth[k], cams[k]);
        all.points.insert(all.points.end(), c.points.begin(), c.points.end());
    }
    return all;
}

} // namespace

PipelineOutput run_pipeline(const Model& m, const RunConfig& cfg, const synth::SceneSample& scene,
                            const PipelineOptions& opts) {
    const auto& mc = cfg.model;
    const recon::ImageSize size{mc.height, mc.width};
    const std::size_t patches = recon::PatchGrid::of(size, mc.patch).count();

    PipelineOutput out;
    out.frames = opts.frames ? *opts.frames : eval_window(scene.frames.size(), cfg.stage2.frames_per_scene);
    if (out.frames.empty()) throw DegenerateInputError("pipeline needs at least one frame");
    const std::size_t n = out.frames.size();
    const CameraModel& gt_ref = scene.frames.at(out.frames[0]).camera;
    std::vector<DepthMap> gt_depth;
    for (std::size_t f : out.frames) {
        out.gt_cameras.push_back(relative_to(scene.frames.at(f).camera, gt_ref));
        gt_depth.push_back(scene.frames.at(f).depth);
    }

    Clip clip;
    clip.scene = &scene;
    clip.frames = out.frames;

    // Relative depth, metric-head depth and unscaled cameras per frame.
    std::vector<DepthMap> rel, md;
    std::vector<CameraModel> cams;
    std::optional<cta::CtaOutput> streams;
    if (opts.inject_gt) {
        for (std::size_t k = 0; k < n; ++k) {
            rel.push_back(gt_depth[k].with_kind(ScaleKind::relative));
            md.push_back(gt_depth[k].with_kind(ScaleKind::metric));
            const CameraModel& g = out.gt_cameras[k];
            cams.emplace_back(g.intrinsics(), g.rotation(), g.translation(), ScaleKind::relative);
        }
        streams = distill_clip(m, cfg, clip).streams;
    } else {
        ClipForward fwd = forward_clip(m, cfg, clip);
        for (std::size_t k = 0; k < n; ++k) {
            rel.push_back(recon::to_depth_map(fwd.rel[k], size, ScaleKind::relative));
            if (!fwd.md_depth.empty()) md.push_back(recon::to_depth_map(fwd.md_depth[k], size, ScaleKind::metric));
            cams.push_back(fwd.cams[k].model());
        }
        streams = std::move(fwd.streams);
    }

    double s = 1.0;
    if (cfg.md_mode != MdMode::off) {
        std::vector<std::pair<DepthMap, DepthMap>> pairs;
        for (std::size_t k = 0; k < n; ++k) pairs.emplace_back(rel[k], md[k]);
        align::SceneScaleOptions so;
        so.sample_count = cfg.align_samples;
        so.seed = cfg.seed;
        so.weights = cfg.align_weights;
        try {
            out.scale = align::scene_scale(pairs, so);
        } catch (const DegenerateInputError& e) {
            out.error = std::string("scale alignment failed: ") + e.what();
            return out;
        }
        s = out.scale->scene_factor;
    }

    std::vector<CameraModel> scaled;
    for (std::size_t k = 0; k < n; ++k) {
        switch (cfg.md_mode) {
        case MdMode::full: {
            auto [d, c] = align::apply_scale(s, rel[k], cams[k]);
            out.depth.push_back(std::move(d));
            scaled.push_back(std::move(c));
            break;
        }
        case MdMode::no_alignment:
            out.depth.push_back(md[k]);
            scaled.push_back(align::apply_scale(s, cams[k]));
            break;
        case MdMode::off:
            out.depth.push_back(rel[k].with_kind(ScaleKind::metric));
            scaled.push_back(align::apply_scale(1.0, cams[k]));
            break;
        }
    }
    for (std::size_t k = 0; k < n; ++k) out.cameras.push_back(opts.inject_gt ? scaled[k] : relative_to(scaled[k], scaled[0]));

    for (std::size_t k = 0; k < n && streams; ++k) {
        const TokenSet lang(nk::slice_rows(streams->lang.tokens(), k * patches, patches), TokenRole::lang,
                            static_cast<int>(k));
        out.t3d.push_back(p3d::fuse_tokens(lang, out.depth[k], out.cameras[k], m.pos_mlp, mc.patch));
    }

    out.cloud = merge_clouds(out.depth, out.cameras);
    out.gt_cloud = merge_clouds(gt_depth, out.gt_cameras);
    if (n >= 2) out.metrics.pose = eval::pose_metrics(out.cameras, out.gt_cameras);
    out.metrics.depth = eval::depth_metrics(out.depth, gt_depth);
    out.metrics.recon = eval::pointcloud_metrics(out.cloud, out.gt_cloud, cfg.tau);
    return out;
}

void write_pipeline_output(const std::filesystem::path& dir, const PipelineOutput& out) {
    std::filesystem::create_directories(dir / "depth");
    p3d::write_ply(dir / "cloud.ply", out.cloud);
    auto dump = [&](const std::filesystem::path& p, const nlohmann::json& j) {
        std::ofstream os(p, std::ios::binary);
        if (!os) throw IoError("cannot write " + p.string());
        os << j.dump(2) << '\n';
    };
    dump(dir / "report.json", out.report_json());
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& c : out.cameras) cams.push_back(camera_to_json(c));
    dump(dir / "cameras.json", cams);
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& t : out.t3d) anchors.push_back(t.anchors_json());
    dump(dir / "anchors.json", anchors);
    for (std::size_t k = 0; k < out.depth.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.vlt", out.frames[k]);
        const auto& d = out.depth[k];
        nk::vlt1::save(dir / "depth" / name, {d.height(), d.width()}, d.values());
    }
}

std::vector<synth::SceneSample> make_train_scenes(const RunConfig& cfg, std::size_t count) {
    const synth::SceneOptions so = scene_options(cfg);
    std::vector<synth::SceneSample> out(count);
    parallel_for(count, [&](std::size_t i) { out[i] = synth::gen_scene(train_scene_seed(cfg.seed, i), so); });
    return out;
}

std::vector<synth::SceneSample> make_heldout_scenes(const RunConfig& cfg) {
    const synth::SceneOptions so = scene_options(cfg);
    std::vector<synth::SceneSample> out(cfg.data.heldout_scenes);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = synth::gen_scene(heldout_scene_seed(cfg.seed, i), so); });
    return out;
}

std::vector<CompareRow> compare_strategies(const RunConfig& base, const std::vector<Strategy>& strategies,
                                           const std::vector<std::size_t>& sizes,
                                           const std::vector<std::uint64_t>& seeds) {
    if (strategies.empty() || sizes.empty() || seeds.empty()) throw ParameterError("compare needs strategies, sizes and seeds");
    std::size_t largest = 0;
    for (std::size_t s : sizes) {
        if (s == 0) throw ParameterError("data sizes must be positive");
        largest = std::max(largest, s);
    }
    std::vector<CompareRow> rows;
    for (std::uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.seed = seed;
        const auto pool = make_train_scenes(cfg, largest);
        const auto heldout = make_heldout_scenes(cfg);
        for (Strategy strat : strategies) {
            cfg.strategy = strat;
            for (std::size_t size : sizes) {
                const std::vector<synth::SceneSample> train(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size));
                Model m = Model::init(cfg);
                if (strat != Strategy::single_stage) train_stage1(cfg, train, m);
                CompareRow row{strat, size, seed, heldout_distill(m, cfg, heldout).distill_total, 0.0};
                train_stage2(cfg, train, m);
                row.test_loss = heldout_joint(m, cfg, heldout).joint_total;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    os << "strategy,scenes,seed,stage1_heldout_distill,test_loss\n";
    char buf[64];
    for (const auto& r : rows) {
        os << to_string(r.strategy) << ',' << r.scenes << ',' << r.seed << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.stage1_distill);
        os << buf << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.test_loss);
        os << buf << '\n';
    }
    return os.str();
}

} // namespace geovid::harness
