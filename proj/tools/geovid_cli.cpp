// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geovid/errors.hpp"
#include "geovid/harness/pipeline.hpp"
#include "geovid/numkit/vlt1.hpp"

namespace fs = std::filesystem;
using namespace geovid;
using namespace geovid::harness;

namespace {

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write " + p.string());
    os << text;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw IoError("cannot read " + p.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(p.string() + ": " + e.what());
    }
}

RunConfig config_or_default(const std::string& path) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    cfg.validate();
    return cfg;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (ext.empty() ? fs::exists(e.path() / "scene.json") : e.path().extension() == ext) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<synth::SceneSample> load_scene_dir(const fs::path& dir) {
    std::vector<synth::SceneSample> scenes;
    for (const auto& p : sorted_entries(dir, "")) scenes.push_back(synth::load_scene(p));
    if (scenes.empty()) throw DegenerateInputError("no scenes under " + dir.string());
    return scenes;
}

std::vector<DepthMap> load_depth_dir(const fs::path& dir, ScaleKind kind) {
    std::vector<DepthMap> maps;
    for (const auto& p : sorted_entries(dir, ".vlt")) {
        auto raw = nk::vlt1::load(p);
        if (raw.shape.size() != 2) throw ShapeError(p.string() + ": depth must be 2-D");
        maps.emplace_back(raw.shape[0], raw.shape[1], std::move(raw.data), kind);
    }
    if (maps.empty()) throw DegenerateInputError("no depth maps under " + dir.string());
    return maps;
}

std::vector<CameraModel> load_cameras(const fs::path& p) {
    std::vector<CameraModel> cams;
    for (const auto& j : read_json(p)) cams.push_back(camera_from_json(j));
    return cams;
}

template <class T>
std::vector<T> split_list(const std::string& s, T (*parse)(const std::string&)) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse(item));
    }
    return out;
}

std::size_t parse_size(const std::string& s) { return std::stoull(s); }
std::uint64_t parse_u64(const std::string& s) { return std::stoull(s); }
Strategy parse_strategy(const std::string& s) { return strategy_from_string(s); }

int cmd_gen_scenes(std::uint64_t seed, std::size_t count, std::size_t frames, const std::string& config,
                   const fs::path& out) {
    RunConfig cfg = config_or_default(config);
    cfg.seed = seed;
    if (frames) cfg.data.frames_per_scene = frames;
    const synth::SceneOptions so = scene_options(cfg);
    fs::create_directories(out);
    nlohmann::json index = {{"seed", seed}, {"count", count}, {"frames", so.frames}, {"scenes", nlohmann::json::array()}};
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04zu", i);
        const std::uint64_t s = train_scene_seed(seed, i);
        synth::save_scene(synth::gen_scene(s, so), out / name);
        index["scenes"].push_back({{"name", name}, {"seed", s}});
    }
    write_json(out / "index.json", index);
    return 0;
}

int cmd_train(int stage, const std::string& config, const fs::path& scenes_dir, const fs::path& out,
              const std::string& init) {
    const RunConfig cfg = config_or_default(config);
    const auto scenes = load_scene_dir(scenes_dir);
    Model m = Model::init(cfg);
    if (!init.empty()) {
        load_params_into(init, m);
    } else if (stage == 2 && cfg.strategy != Strategy::single_stage) {
        throw ParameterError("stage 2 needs --init unless the strategy is single_stage");
    }
    fs::create_directories(out);
    const TrainResult r = stage == 1 ? train_stage1(cfg, scenes, m, out) : train_stage2(cfg, scenes, m, out);
    save_checkpoint(out, m, cfg);
    write_log(out / "log.jsonl", r.log);
    return 0;
}

int cmd_align(const fs::path& rel_dir, const fs::path& metric_dir, const fs::path& cams_path, std::uint64_t seed,
              std::size_t samples, const fs::path& out) {
    const auto rel = load_depth_dir(rel_dir, ScaleKind::relative);
    const auto metric = load_depth_dir(metric_dir, ScaleKind::metric);
    const auto cams = load_cameras(cams_path);
    if (rel.size() != metric.size() || rel.size() != cams.size()) {
        throw ShapeError("relative depth, metric depth and cameras must have equal frame counts");
    }
    std::vector<std::pair<DepthMap, DepthMap>> pairs;
    for (std::size_t k = 0; k < rel.size(); ++k) pairs.emplace_back(rel[k], metric[k]);
    align::SceneScaleOptions so;
    so.seed = seed;
    so.sample_count = samples;
    const align::ScaleEstimate est = align::scene_scale(pairs, so);
    fs::create_directories(out / "depth");
    nlohmann::json cj = nlohmann::json::array();
    for (std::size_t k = 0; k < rel.size(); ++k) {
        CameraModel c = cams[k];
        if (c.scale_kind() != ScaleKind::relative) {
            c = CameraModel(c.intrinsics(), c.rotation(), c.translation(), ScaleKind::relative);
        }
        auto [d, sc] = align::apply_scale(est.scene_factor, rel[k], c);
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.vlt", k);
        nk::vlt1::save(out / "depth" / name, {d.height(), d.width()}, d.values());
        cj.push_back(camera_to_json(sc));
    }
    write_json(out / "scale.json", est.to_json());
    write_json(out / "cameras.json", cj);
    return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& scene_dir, const fs::path& out, bool inject_gt) {
    RunConfig cfg;
    const Model m = load_checkpoint(ckpt, &cfg);
    const synth::SceneSample scene = synth::load_scene(scene_dir);
    PipelineOptions po;
    po.inject_gt = inject_gt;
    const PipelineOutput r = run_pipeline(m, cfg, scene, po);
    write_pipeline_output(out, r);
    if (r.error) {
        std::cerr << *r.error << '\n';
        return 2;
    }
    return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, double tau, const fs::path& out) {
    const synth::SceneSample scene = synth::load_scene(gt_dir);
    const nlohmann::json report = read_json(pred_dir / "report.json");
    const auto frames = report.at("frames").get<std::vector<std::size_t>>();
    const auto depth = load_depth_dir(pred_dir / "depth", ScaleKind::metric);
    const auto cams = load_cameras(pred_dir / "cameras.json");
    if (depth.size() != frames.size() || cams.size() != frames.size()) {
        throw ShapeError("prediction frame counts disagree with report.json");
    }
    std::vector<DepthMap> gt_depth;
    std::vector<CameraModel> gt_cams;
    p3d::PointCloud pred_cloud, gt_cloud;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& fr = scene.frames.at(frames[k]);
        gt_depth.push_back(fr.depth);
        gt_cams.push_back(relative_to(fr.camera, scene.frames.at(frames[0]).camera));
        const auto pc = p3d::depth_to_cloud(depth[k], cams[k]);
        const auto gc = p3d::depth_to_cloud(fr.depth, gt_cams.back());
        pred_cloud.points.insert(pred_cloud.points.end(), pc.points.begin(), pc.points.end());
        gt_cloud.points.insert(gt_cloud.points.end(), gc.points.begin(), gc.points.end());
    }
    eval::MetricsReport mr;
    if (frames.size() >= 2) mr.pose = eval::pose_metrics(cams, gt_cams);
    mr.depth = eval::depth_metrics(depth, gt_depth);
    mr.recon = eval::pointcloud_metrics(pred_cloud, gt_cloud, tau);
    write_json(out, mr.to_json());
    return 0;
}

int cmd_compare(const std::string& strategies, const std::string& sizes, const std::string& seeds,
                const std::string& config, const fs::path& out) {
    const RunConfig cfg = config_or_default(config);
    const auto strat = split_list<Strategy>(strategies, parse_strategy);
    const auto sz = split_list<std::size_t>(sizes, parse_size);
    const auto sd = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : split_list<std::uint64_t>(seeds, parse_u64);
    write_text(out, compare_csv(compare_strategies(cfg, strat, sz, sd)));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"geovid: toy geometry-grounded video model harness"};
    app.require_subcommand(1);

    std::uint64_t seed = 7;
    std::size_t count = 1, frames = 0, samples = 16;
    int stage = 1;
    double tau = 0.05;
    bool inject_gt = false;
    std::string config, scenes, out, init, depth_rel, depth_metric, cameras, ckpt, scene, pred, gt, strategies, sizes,
        seeds;

    auto* gen = app.add_subcommand("gen-scenes", "Generate procedural scenes");
    gen->add_option("--seed", seed, "Base seed")->required();
    gen->add_option("--count", count, "Number of scenes")->required()->check(CLI::PositiveNumber);
    gen->add_option("--frames", frames, "Frames per scene (default from config)");
    gen->add_option("--config", config, "Run config JSON");
    gen->add_option("--out", out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Run one training stage");
    train->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
    train->add_option("--config", config, "Run config JSON");
    train->add_option("--scenes", scenes, "Directory from gen-scenes")->required();
    train->add_option("--out", out, "Checkpoint directory")->required();
    train->add_option("--init", init, "Checkpoint to start from");

    auto* align_cmd = app.add_subcommand("align-scale", "Recover the metric scale of relative predictions");
    align_cmd->add_option("--depth-rel", depth_rel, "Directory of relative depth .vlt files")->required();
    align_cmd->add_option("--depth-metric", depth_metric, "Directory of metric depth .vlt files")->required();
    align_cmd->add_option("--cameras", cameras, "JSON array of relative cameras")->required();
    align_cmd->add_option("--seed", seed, "Frame sampling seed");
    align_cmd->add_option("--samples", samples, "Frames in the median")->check(CLI::PositiveNumber);
    align_cmd->add_option("--out", out, "Output directory")->required();

    auto* infer = app.add_subcommand("infer", "Run the full pipeline on one scene");
    infer->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
    infer->add_option("--scene", scene, "Scene directory")->required();
    infer->add_option("--out", out, "Output directory")->required();
    infer->add_flag("--inject-gt", inject_gt, "Replace head outputs with ground truth");

    auto* ev = app.add_subcommand("eval", "Score inference output against a scene");
    ev->add_option("--pred", pred, "Directory written by infer")->required();
    ev->add_option("--gt", gt, "Scene directory")->required();
    ev->add_option("--tau", tau, "Point-cloud distance threshold (m)");
    ev->add_option("--out", out, "Report JSON")->required();

    auto* cmp = app.add_subcommand("compare", "Compare training strategies across data sizes");
    cmp->add_option("--strategies", strategies, "Comma-separated strategies")->required();
    cmp->add_option("--sizes", sizes, "Comma-separated scene counts")->required();
    cmp->add_option("--seeds", seeds, "Comma-separated seeds (default: config seed)");
    cmp->add_option("--config", config, "Run config JSON");
    cmp->add_option("--out", out, "CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen_scenes(seed, count, frames, config, out);
        if (*train) return cmd_train(stage, config, scenes, out, init);
        if (*align_cmd) return cmd_align(depth_rel, depth_metric, cameras, seed, samples, out);
        if (*infer) return cmd_infer(ckpt, scene, out, inject_gt);
        if (*ev) return cmd_eval(pred, gt, tau, out);
        if (*cmp) return cmd_compare(strategies, sizes, seeds, config, out);
    } catch (const DegenerateInputError& e) {
        std::cerr << "degenerate input: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
