// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "geovid/camera.hpp"
#include "geovid/numkit/nn.hpp"
#include "geovid/patch3d.hpp"
#include "geovid/recon_heads.hpp"
#include "json.hpp"

// Training objectives. Every loss is a graph op returning a [1] tensor; the
// TokenSet / DepthMap overloads are value conveniences.
namespace geovid::loss {

using nk::Tensor;
using nk::TokenSet;

struct LossReport {
    double geo_feat = 0.0;
    double lang_feat = 0.0;
    double sc = 0.0;
    double distill_total = 0.0;
    double recon_task = 0.0;
    double vl_task = 0.0;
    double md = 0.0;
    double joint_total = 0.0;
    double lambda = 0.5;
    double alpha = 1.0;

    nlohmann::json to_json() const;
    static LossReport from_json(const nlohmann::json& j);
};

/// Mean over tokens of |n(s_i) - n(t_i)|^2 with per-token L2 normalization.
Tensor geo_feat_loss(const Tensor& student, const Tensor& teacher);
double geo_feat_loss(const TokenSet& student, const TokenSet& teacher);

/// Mean over tokens of 1 - cos(s_i, t_i), evaluated as |n(s_i) - n(t_i)|^2 / 2
/// so that the result is never negative.
Tensor lang_feat_loss(const Tensor& student, const Tensor& teacher);
double lang_feat_loss(const TokenSet& student, const TokenSet& teacher);

/// |Z_s Z_s^T - Z_t Z_t^T|_F^2 / M^2 for [M, *] token matrices.
Tensor gram_loss(const Tensor& z_student, const Tensor& z_teacher);

/// Z holds, per token, the normalized geometry and language features side by
/// side; an undefined language pair restricts Z to the geometry half.
Tensor structural_consistency(const Tensor& stu_geom, const Tensor& stu_lang, const Tensor& tea_geom,
                              const Tensor& tea_lang);
double structural_consistency(const TokenSet& stu_geom, const TokenSet& stu_lang, const TokenSet& tea_geom,
                              const TokenSet& tea_lang);

struct DistillTerms {
    Tensor geo;
    Tensor lang; ///< undefined when the language teacher is dropped
    Tensor sc;
    Tensor total;
};

/// geo + lang + lambda * sc.
DistillTerms distill_loss(const Tensor& stu_geom, const Tensor& stu_lang, const Tensor& tea_geom,
                          const Tensor& tea_lang, double lambda = 0.5, bool use_lang = true);

/// Fills the distillation fields of a report, summing in the same order as the graph.
void fill_distill(LossReport& r, double geo, double lang, double sc, double lambda);

/// b^2 + mean((e - b)^2 / (1 + alpha |e - b|)) with e = log(pred + eps) - log(gt + eps)
/// over pixels valid in `gt` (and in `pred_mask` when given); b = mean(e).
Tensor metric_depth_loss(const Tensor& pred, const DepthMap& gt, double alpha = 1.0, double eps = 1e-6,
                         const std::vector<std::uint8_t>& pred_mask = {});
double metric_depth_loss(const DepthMap& pred, const DepthMap& gt, double alpha = 1.0, double eps = 1e-6);

struct ReconTerms {
    Tensor pose;
    Tensor depth;
    Tensor pointmap;
    Tensor total;
};

/// Pose: squared geodesic angle of R_p R_g^T plus |t_p - t_g|^2. Depth: masked
/// L1. Point map: mean per-pixel L1 between back-projected point maps. Unit weights.
ReconTerms recon_task_loss(const recon::CameraTensors& pred_cam, const recon::CameraTensors& gt_cam,
                           const Tensor& pred_depth, const DepthMap& gt_depth);

/// Mean cross-entropy of head(tokens) against per-token class ids.
Tensor vl_proxy_loss(const Tensor& tokens, const std::vector<std::size_t>& labels, const nk::MlpParams& head);
double vl_proxy_loss(const p3d::Patch3DTokens& t3d, const std::vector<std::size_t>& labels, const nk::MlpParams& head);

/// recon + vl + md.
void fill_joint(LossReport& r, double recon, double vl, double md);

} // namespace geovid::loss
