// SPDX-License-Identifier: Apache-2.0
#include "geovid/losses.hpp"

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

namespace geovid::loss {

nlohmann::json LossReport::to_json() const {
    return {{"geo_feat", geo_feat}, {"lang_feat", lang_feat},       {"sc", sc}, {"distill_total", distill_total},
            {"recon_task", recon_task}, {"vl_task", vl_task},       {"md", md}, {"joint_total", joint_total},
            {"lambda", lambda},     {"alpha", alpha}};
}

LossReport LossReport::from_json(const nlohmann::json& j) {
    LossReport r;
    r.geo_feat = j.at("geo_feat");
    r.lang_feat = j.at("lang_feat");
    r.sc = j.at("sc");
    r.distill_total = j.at("distill_total");
    r.recon_task = j.at("recon_task");
    r.vl_task = j.at("vl_task");
    r.md = j.at("md");
    r.joint_total = j.at("joint_total");
    r.lambda = j.at("lambda");
    r.alpha = j.at("alpha");
    return r;
}

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": " + nk::shape_str(a.shape()) + " vs " + nk::shape_str(b.shape()));
    }
}

Tensor mean_sq_dist(const Tensor& a, const Tensor& b) {
    const Tensor d = nk::sub(nk::normalize_rows(a), nk::normalize_rows(b));
    return nk::scale(nk::sum(nk::square(d)), 1.0 / static_cast<double>(a.rows()));
}

} // namespace

Tensor geo_feat_loss(const Tensor& student, const Tensor& teacher) {
    same_shape(student, teacher, "geometry feature loss");
    return mean_sq_dist(student, teacher);
}

double geo_feat_loss(const TokenSet& student, const TokenSet& teacher) {
    return geo_feat_loss(student.tokens(), teacher.tokens()).item();
}

Tensor lang_feat_loss(const Tensor& student, const Tensor& teacher) {
    same_shape(student, teacher, "language feature loss");
    return nk::scale(mean_sq_dist(student, teacher), 0.5);
}

double lang_feat_loss(const TokenSet& student, const TokenSet& teacher) {
    return lang_feat_loss(student.tokens(), teacher.tokens()).item();
}

Tensor gram_loss(const Tensor& z_student, const Tensor& z_teacher) {
    if (z_student.rows() != z_teacher.rows()) throw ShapeError("student and teacher token counts differ");
    const double m = static_cast<double>(z_student.rows());
    const Tensor s_stu = nk::matmul(z_student, nk::transpose(z_student));
    const Tensor s_tea = nk::matmul(z_teacher, nk::transpose(z_teacher));
    return nk::scale(nk::sum(nk::square(nk::sub(s_stu, s_tea))), 1.0 / (m * m));
}

Tensor structural_consistency(const Tensor& stu_geom, const Tensor& stu_lang, const Tensor& tea_geom,
                              const Tensor& tea_lang) {
    const std::size_t m = stu_geom.rows();
    if (tea_geom.rows() != m) throw ShapeError("student and teacher token counts differ");
    if (!stu_lang.defined() || !tea_lang.defined()) {
        return gram_loss(nk::normalize_rows(stu_geom), nk::normalize_rows(tea_geom));
    }
    if (stu_lang.rows() != m || tea_lang.rows() != m) throw ShapeError("geometry and language token counts differ");
    const Tensor zs = nk::concat_cols({nk::normalize_rows(stu_geom), nk::normalize_rows(stu_lang)});
    const Tensor zt = nk::concat_cols({nk::normalize_rows(tea_geom), nk::normalize_rows(tea_lang)});
    return gram_loss(zs, zt);
}

double structural_consistency(const TokenSet& stu_geom, const TokenSet& stu_lang, const TokenSet& tea_geom,
                              const TokenSet& tea_lang) {
    return structural_consistency(stu_geom.tokens(), stu_lang.tokens(), tea_geom.tokens(), tea_lang.tokens()).item();
}

DistillTerms distill_loss(const Tensor& stu_geom, const Tensor& stu_lang, const Tensor& tea_geom,
                          const Tensor& tea_lang, double lambda, bool use_lang) {
    if (!(lambda >= 0)) throw ParameterError("lambda must be non-negative");
    DistillTerms t;
    t.geo = geo_feat_loss(stu_geom, tea_geom);
    if (use_lang) {
        t.lang = lang_feat_loss(stu_lang, tea_lang);
        t.sc = structural_consistency(stu_geom, stu_lang, tea_geom, tea_lang);
        t.total = nk::add(nk::add(t.geo, t.lang), nk::scale(t.sc, lambda));
    } else {
        t.sc = structural_consistency(stu_geom, Tensor(), tea_geom, Tensor());
        t.total = nk::add(t.geo, nk::scale(t.sc, lambda));
    }
    return t;
}

void fill_distill(LossReport& r, double geo, double lang, double sc, double lambda) {
    r.geo_feat = geo;
    r.lang_feat = lang;
    r.sc = sc;
    r.lambda = lambda;
    r.distill_total = geo + lang + sc * lambda;
}

Tensor metric_depth_loss(const Tensor& pred, const DepthMap& gt, double alpha, double eps,
                         const std::vector<std::uint8_t>& pred_mask) {
    if (!(alpha > 0)) throw ParameterError("alpha must be positive");
    if (!(eps >= 0)) throw ParameterError("epsilon must be non-negative");
    if (pred.numel() != gt.size()) throw ShapeError("prediction does not match the ground-truth depth");
    if (!pred_mask.empty() && pred_mask.size() != gt.size()) throw ShapeError("prediction mask size mismatch");
    std::vector<std::size_t> idx;
    std::vector<double> log_gt;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt.mask()[i] || (!pred_mask.empty() && !pred_mask[i])) continue;
        idx.push_back(i);
        log_gt.push_back(std::log(gt.values()[i] + eps));
    }
    if (idx.empty()) throw DegenerateInputError("no valid pixels for the metric depth loss");
    const std::size_t k = idx.size();
    const Tensor p = nk::gather_rows(nk::reshape(pred, {gt.size(), 1}), idx);
    const Tensor e = nk::sub(nk::log(nk::add_scalar(p, eps)), Tensor::constant({k, 1}, std::move(log_gt)));
    const Tensor b = nk::mean(e);
    const Tensor r = nk::sub(e, b);
    const Tensor robust = nk::div(nk::square(r), nk::add_scalar(nk::scale(nk::abs(r), alpha), 1.0));
    return nk::add(nk::square(b), nk::mean(robust));
}

double metric_depth_loss(const DepthMap& pred, const DepthMap& gt, double alpha, double eps) {
    if (pred.height() != gt.height() || pred.width() != gt.width()) throw ShapeError("depth maps differ in size");
    const Tensor p = Tensor::constant({pred.size(), 1}, pred.values());
    return metric_depth_loss(p, gt, alpha, eps, pred.mask()).item();
}

ReconTerms recon_task_loss(const recon::CameraTensors& pred_cam, const recon::CameraTensors& gt_cam,
                           const Tensor& pred_depth, const DepthMap& gt_depth) {
    if (!is_metric(pred_cam.kind) || !is_metric(gt_cam.kind) || !is_metric(gt_depth.scale_kind())) {
        throw StateError("reconstruction loss needs metric predictions and ground truth");
    }
    if (pred_depth.numel() != gt_depth.size()) throw ShapeError("predicted depth does not match the ground truth");

    ReconTerms t;
    const Tensor r_rel = nk::matmul(pred_cam.rotation, nk::transpose(gt_cam.rotation));
    t.pose = nk::add(nk::rotation_angle_sq(r_rel), nk::sum(nk::square(nk::sub(pred_cam.translation, gt_cam.translation))));

    std::vector<std::size_t> idx;
    std::vector<double> gt_vals, gt_pix;
    for (std::size_t i = 0; i < gt_depth.size(); ++i) {
        if (!gt_depth.mask()[i]) continue;
        idx.push_back(i);
        gt_vals.push_back(gt_depth.values()[i]);
        gt_pix.push_back(static_cast<double>(i % gt_depth.width()));
        gt_pix.push_back(static_cast<double>(i / gt_depth.width()));
    }
    if (idx.empty()) throw DegenerateInputError("ground-truth depth has no valid pixels");
    const std::size_t k = idx.size();
    const double inv_k = 1.0 / static_cast<double>(k);
    const Tensor pd = nk::gather_rows(nk::reshape(pred_depth, {gt_depth.size(), 1}), idx);
    const Tensor gd = Tensor::constant({k, 1}, std::move(gt_vals));
    t.depth = nk::scale(nk::sum(nk::abs(nk::sub(pd, gd))), inv_k);

    const Tensor pix = Tensor::constant({k, 2}, std::move(gt_pix));
    const Tensor p_pred = p3d::backproject_tensor(pix, pd, pred_cam);
    const Tensor p_gt = p3d::backproject_tensor(pix, gd, gt_cam);
    t.pointmap = nk::scale(nk::sum(nk::abs(nk::sub(p_pred, p_gt))), inv_k);

    t.total = nk::add(nk::add(t.pose, t.depth), t.pointmap);
    return t;
}

Tensor vl_proxy_loss(const Tensor& tokens, const std::vector<std::size_t>& labels, const nk::MlpParams& head) {
    if (head.out_dim() == 0) throw ParameterError("classifier needs at least one class");
    return nk::cross_entropy_rows(nk::mlp_forward(tokens, head), labels);
}

double vl_proxy_loss(const p3d::Patch3DTokens& t3d, const std::vector<std::size_t>& labels, const nk::MlpParams& head) {
    return vl_proxy_loss(t3d.tokens, labels, head).item();
}

void fill_joint(LossReport& r, double recon, double vl, double md) {
    r.recon_task = recon;
    r.vl_task = vl;
    r.md = md;
    r.joint_total = recon + vl + md;
}

} // namespace geovid::loss
