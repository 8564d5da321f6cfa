// SPDX-License-Identifier: Apache-2.0
#include "geovid/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"
#include "geovid/patch3d.hpp"
#include "geovid/scale_align.hpp"

namespace geovid::harness {

using nk::Tensor;
using nk::TokenRole;
using nk::TokenSet;

nlohmann::json TrainLogEntry::to_json() const {
    nlohmann::json j = {{"step", step}, {"stage", stage}, {"loss", loss.to_json()}};
    if (wall_ms) j["wall_ms"] = *wall_ms;
    return j;
}

std::vector<std::size_t> sample_window(std::size_t total, std::size_t count, nk::Rng& rng) {
    if (count == 0 || count > total) throw ParameterError("cannot sample that many frames");
    std::size_t max_stride = 3;
    while (max_stride > 1 && (count - 1) * max_stride >= total) --max_stride;
    const std::size_t stride = 1 + rng() % max_stride;
    const std::size_t span = (count - 1) * stride + 1;
    const std::size_t start = rng() % (total - span + 1);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(start + i * stride);
    return out;
}

std::vector<std::size_t> eval_window(std::size_t total, std::size_t count) {
    if (count == 0 || count > total) throw ParameterError("cannot take that many frames");
    const std::size_t stride = (count - 1) * 2 < total ? 2 : 1;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(i * stride);
    return out;
}

namespace {

TokenSet clip_base_tokens(const Model& m, const Clip& clip) {
    std::vector<Tensor> desc;
    for (std::size_t k = 0; k < clip.frames.size(); ++k) {
        const Tensor& d = clip.scene->frames.at(clip.frames[k]).descriptors;
        desc.push_back(clip.jitter.empty() ? d : nk::add(d, clip.jitter[k]));
    }
    return TokenSet(synth::encode(nk::concat_rows(desc), m.encoder), TokenRole::base);
}

Tensor concat_teachers(const Clip& clip, bool geom) {
    std::vector<Tensor> parts;
    for (std::size_t f : clip.frames) {
        const auto& fr = clip.scene->frames.at(f);
        parts.push_back(geom ? fr.teacher_geom : fr.teacher_lang);
    }
    return nk::concat_rows(parts);
}

// Relative depth is only defined up to scale; dividing by the clip mean pins
// that scale so the alignment factor cannot drift during training.
void normalize_clip_depth(std::vector<Tensor>& rel) {
    const Tensor m = nk::mean(nk::concat_rows(rel));
    for (auto& r : rel) r = nk::div(r, m);
}

bool uses_lang_teacher(Strategy s) { return s != Strategy::two_stage_single_teacher; }
double effective_lambda(const RunConfig& cfg) { return cfg.strategy == Strategy::no_sc_loss ? 0.0 : cfg.lambda; }

} // namespace

DistillOutput distill_clip(const Model& m, const RunConfig& cfg, const Clip& clip) {
    DistillOutput out{{}, cta::cta_forward(clip_base_tokens(m, clip), m.cta)};
    out.terms = loss::distill_loss(out.streams.geom.tokens(), out.streams.lang.tokens(), concat_teachers(clip, true),
                                   concat_teachers(clip, false), effective_lambda(cfg), uses_lang_teacher(cfg.strategy));
    return out;
}

ClipForward forward_clip(const Model& m, const RunConfig& cfg, const Clip& clip) {
    const auto& mc = cfg.model;
    const recon::ImageSize size{mc.height, mc.width};
    const std::size_t n_frames = clip.frames.size();
    const std::size_t patches = recon::PatchGrid::of(size, mc.patch).count();

    ClipForward f{cta::cta_forward(clip_base_tokens(m, clip), m.cta), {}, {}, {}};
    std::vector<TokenSet> geom;
    for (std::size_t k = 0; k < n_frames; ++k) {
        geom.emplace_back(nk::slice_rows(f.streams.geom.tokens(), k * patches, patches), TokenRole::geom,
                          static_cast<int>(k));
    }
    const recon::BackboneOutput bb = recon::gfa_backbone(geom, m.backbone);
    for (std::size_t k = 0; k < n_frames; ++k) {
        f.cams.push_back(recon::camera_head(bb.cameras[k], m.camera, size));
        f.rel.push_back(recon::depth_head(bb.patches[k], size, m.depth));
        if (cfg.md_mode != MdMode::off) {
            f.md_depth.push_back(
                metric::metric_depth_forward(bb.patches[k], size, mc.patch, m.bins, m.metric, mc.bin_norm).depth);
        }
    }
    if (cfg.md_mode != MdMode::off) normalize_clip_depth(f.rel);
    return f;
}

JointTerms joint_clip(const Model& m, const RunConfig& cfg, const Clip& clip) {
    const auto& mc = cfg.model;
    const recon::ImageSize size{mc.height, mc.width};
    const std::size_t n_frames = clip.frames.size();
    const std::size_t patches = recon::PatchGrid::of(size, mc.patch).count();

    ClipForward fwd = forward_clip(m, cfg, clip);
    const cta::CtaOutput& streams = fwd.streams;
    const std::vector<recon::CameraTensors>& cams = fwd.cams;
    const std::vector<Tensor>& rel = fwd.rel;
    const std::vector<Tensor>& md_depth = fwd.md_depth;
    const CameraModel& ref = clip.scene->frames.at(clip.frames[0]).camera;

    JointTerms out;
    if (cfg.md_mode != MdMode::off) {
        std::vector<std::pair<DepthMap, DepthMap>> align_pairs;
        for (std::size_t k = 0; k < n_frames; ++k) {
            align_pairs.emplace_back(recon::to_depth_map(rel[k], size, ScaleKind::relative),
                                     clip.scene->frames.at(clip.frames[k]).depth);
        }
        align::SceneScaleOptions opts;
        opts.sample_count = cfg.align_samples;
        opts.seed = cfg.seed;
        opts.weights = cfg.align_weights;
        out.scale = align::scene_scale(align_pairs, opts).scene_factor;
    }

    Tensor recon_sum, md_sum;
    std::vector<Tensor> t3d;
    std::vector<std::size_t> labels;
    for (std::size_t k = 0; k < n_frames; ++k) {
        const synth::Frame& fr = clip.scene->frames.at(clip.frames[k]);
        const recon::CameraTensors gt_cam = recon::CameraTensors::constant(relative_to(fr.camera, ref));
        const recon::CameraTensors cam = cams[k].scaled(out.scale, ScaleKind::metric);
        const Tensor depth = nk::scale(rel[k], out.scale);
        const Tensor r = loss::recon_task_loss(cam, gt_cam, depth, fr.depth).total;
        recon_sum = recon_sum.defined() ? nk::add(recon_sum, r) : r;
        if (cfg.md_mode != MdMode::off) {
            const Tensor l = loss::metric_depth_loss(md_depth[k], fr.depth, cfg.alpha, cfg.md_eps);
            md_sum = md_sum.defined() ? nk::add(md_sum, l) : l;
        }
        const Tensor lang = nk::slice_rows(streams.lang.tokens(), k * patches, patches);
        t3d.push_back(p3d::fuse_tokens_tensor(lang, depth, cam, m.pos_mlp, size, mc.patch).tokens);
        labels.insert(labels.end(), fr.patch_labels.begin(), fr.patch_labels.end());
    }
    const double inv = 1.0 / static_cast<double>(n_frames);
    out.recon = nk::scale(recon_sum, inv);
    out.vl = loss::vl_proxy_loss(nk::concat_rows(t3d), labels, m.vl_head);
    out.total = nk::add(out.recon, out.vl);
    if (md_sum.defined()) {
        out.md = nk::scale(md_sum, inv);
        out.total = nk::add(out.total, out.md);
    }
    return out;
}

namespace {

struct StepOutcome {
    std::vector<std::vector<double>> grads;
    std::vector<double> parts; // stage-specific loss components
};

// Per-clip work runs on worker threads; each clip owns its graph and gradients.
StepOutcome run_clip(const Model& m, const RunConfig& cfg, const Clip& clip, int stage, const nk::ParamList& params,
                     double weight) {
    Tensor total;
    StepOutcome o;
    if (stage == 1) {
        const DistillOutput d = distill_clip(m, cfg, clip);
        total = d.terms.total;
        o.parts = {d.terms.geo.item(), d.terms.lang.defined() ? d.terms.lang.item() : 0.0, d.terms.sc.item()};
    } else {
        const JointTerms j = joint_clip(m, cfg, clip);
        total = j.total;
        o.parts = {j.recon.item(), j.vl.item(), j.md.defined() ? j.md.item() : 0.0};
    }
    const nk::Gradients g = nk::backward(nk::scale(total, weight));
    o.grads.reserve(params.size());
    for (const auto& p : params) o.grads.push_back(g.of(p.tensor));
    return o;
}

loss::LossReport make_report(const RunConfig& cfg, int stage, const std::vector<double>& parts) {
    loss::LossReport r;
    r.alpha = cfg.alpha;
    if (stage == 1) {
        loss::fill_distill(r, parts[0], parts[1], parts[2], effective_lambda(cfg));
    } else {
        r.lambda = effective_lambda(cfg);
        loss::fill_joint(r, parts[0], parts[1], parts[2]);
    }
    return r;
}

void dump_diagnostic(const std::optional<std::filesystem::path>& dir, int stage, std::size_t step,
                     const std::vector<TrainLogEntry>& log, const std::string& what) {
    if (!dir) return;
    std::filesystem::create_directories(*dir);
    nlohmann::json j = {{"stage", stage}, {"step", step}, {"error", what}};
    if (!log.empty()) j["last_entry"] = log.back().to_json();
    std::ofstream out(*dir / "diagnostic.json", std::ios::binary);
    out << j.dump(2) << '\n';
}

TrainResult train_loop(const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes, Model& m, int stage,
                       const std::optional<std::filesystem::path>& diag_dir) {
    if (scenes.empty()) throw DegenerateInputError("no training scenes");
    const StageSchedule& sched = stage == 1 ? cfg.stage1 : cfg.stage2;
    const nk::ParamList params = stage == 1 ? m.stage1_params() : m.params();
    std::vector<double> lr_scale;
    if (stage == 2) {
        for (const auto& p : params) lr_scale.push_back(p.name.rfind("encoder.", 0) == 0 ? cfg.stage2_encoder_lr_scale : 1.0);
    }
    nk::AdamWConfig ocfg = cfg.optim;
    ocfg.lr = sched.lr;
    nk::AdamW opt(params, ocfg, lr_scale);

    const std::size_t patches = recon::PatchGrid::of({cfg.model.height, cfg.model.width}, cfg.model.patch).count();
    nk::Rng rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(stage));
    std::normal_distribution<double> gauss(0.0, 1.0);
    TrainResult result;
    const std::size_t batch = sched.scenes_per_step;
    const double weight = 1.0 / static_cast<double>(batch);

    for (std::size_t step = 0; step < sched.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Clip> clips(batch);
        for (auto& c : clips) {
            c.scene = &scenes[rng() % scenes.size()];
            c.frames = sample_window(c.scene->frames.size(), sched.frames_per_scene, rng);
            if (cfg.data.token_jitter > 0) {
                for (std::size_t f = 0; f < c.frames.size(); ++f) {
                    std::vector<double> noise(patches * synth::kDescriptorDim);
                    for (auto& v : noise) v = cfg.data.token_jitter * gauss(rng);
                    c.jitter.push_back(Tensor::constant({patches, synth::kDescriptorDim}, std::move(noise)));
                }
            }
        }
        std::vector<StepOutcome> outcomes(batch);
        try {
            parallel_for(batch, [&](std::size_t i) { outcomes[i] = run_clip(m, cfg, clips[i], stage, params, weight); });
        } catch (const NumericError& e) {
            dump_diagnostic(diag_dir, stage, step, result.log, e.what());
            throw NumericError("stage " + std::to_string(stage) + " step " + std::to_string(step) + ": " + e.what());
        }

        std::vector<std::vector<double>> grads = std::move(outcomes[0].grads);
        std::vector<double> parts(3, 0.0);
        for (std::size_t i = 0; i < batch; ++i) {
            if (i > 0) {
                for (std::size_t p = 0; p < grads.size(); ++p)
                    for (std::size_t k = 0; k < grads[p].size(); ++k) grads[p][k] += outcomes[i].grads[p][k];
            }
            for (std::size_t k = 0; k < 3; ++k) parts[k] += outcomes[i].parts[k];
        }
        for (auto& v : parts) v *= weight;

        TrainLogEntry entry;
        entry.step = step;
        entry.stage = stage;
        entry.loss = make_report(cfg, stage, parts);
        const double total = stage == 1 ? entry.loss.distill_total : entry.loss.joint_total;
        if (!std::isfinite(total)) {
            dump_diagnostic(diag_dir, stage, step, result.log, "non-finite loss");
            throw NumericError("non-finite loss at stage " + std::to_string(stage) + " step " + std::to_string(step));
        }
        opt.step(grads);
        if (cfg.log_wall_time) {
            entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
        result.log.push_back(std::move(entry));
    }
    return result;
}

loss::LossReport heldout_report(const Model& m, const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes,
                                int stage) {
    if (scenes.empty()) throw DegenerateInputError("no held-out scenes");
    const StageSchedule& sched = stage == 1 ? cfg.stage1 : cfg.stage2;
    std::vector<std::vector<double>> parts(scenes.size());
    parallel_for(scenes.size(), [&](std::size_t i) {
        Clip c;
        c.scene = &scenes[i];
        c.frames = eval_window(scenes[i].frames.size(), sched.frames_per_scene);
        if (stage == 1) {
            const auto d = distill_clip(m, cfg, c).terms;
            parts[i] = {d.geo.item(), d.lang.defined() ? d.lang.item() : 0.0, d.sc.item()};
        } else {
            const auto j = joint_clip(m, cfg, c);
            parts[i] = {j.recon.item(), j.vl.item(), j.md.defined() ? j.md.item() : 0.0};
        }
    });
    std::vector<double> mean(3, 0.0);
    for (const auto& p : parts)
        for (std::size_t k = 0; k < 3; ++k) mean[k] += p[k];
    for (auto& v : mean) v /= static_cast<double>(scenes.size());
    return make_report(cfg, stage, mean);
}

} // namespace

TrainResult train_stage1(const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes, Model& m,
                         const std::optional<std::filesystem::path>& diag_dir) {
    return train_loop(cfg, scenes, m, 1, diag_dir);
}

TrainResult train_stage2(const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes, Model& m,
                         const std::optional<std::filesystem::path>& diag_dir) {
    return train_loop(cfg, scenes, m, 2, diag_dir);
}

loss::LossReport heldout_distill(const Model& m, const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes) {
    return heldout_report(m, cfg, scenes, 1);
}

loss::LossReport heldout_joint(const Model& m, const RunConfig& cfg, const std::vector<synth::SceneSample>& scenes) {
    return heldout_report(m, cfg, scenes, 2);
}

void write_log(const std::filesystem::path& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& e : log) out << e.to_json().dump() << '\n';
}

} // namespace geovid::harness
