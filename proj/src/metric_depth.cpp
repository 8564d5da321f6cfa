// SPDX-License-Identifier: Apache-2.0
#include "geovid/metric_depth.hpp"

#include <cmath>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

namespace geovid::metric {

std::vector<double> BinConfig::local_widths() const {
    const std::size_t n = centers.size();
    std::vector<double> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lo = k == 0 ? d_min : centers[k - 1];
        const double hi = k + 1 == n ? d_max : centers[k + 1];
        w[k] = std::min(centers[k] - lo, hi - centers[k]);
    }
    return w;
}

void BinConfig::validate() const {
    if (!(d_min > 0) || !(d_max > d_min)) throw ParameterError("bin range needs 0 < d_min < d_max");
    if (centers.size() < 2) throw ParameterError("need at least two bins");
    if (centers.front() < d_min || centers.back() > d_max) throw ParameterError("bin centers outside [d_min, d_max]");
    for (std::size_t k = 1; k < centers.size(); ++k) {
        if (!(centers[k] > centers[k - 1])) throw ParameterError("bin centers must be strictly increasing");
    }
    if (!(max_shift >= 0) || max_shift >= 0.5) throw ParameterError("max_shift must lie in [0, 0.5)");
}

BinConfig init_bins(std::size_t n, double d_min, double d_max, double max_shift) {
    if (n < 2) throw ParameterError("need at least two bins");
    if (!(d_min > 0) || !(d_max > d_min)) throw ParameterError("bin range needs 0 < d_min < d_max");
    BinConfig cfg;
    cfg.d_min = d_min;
    cfg.d_max = d_max;
    cfg.max_shift = max_shift;
    const double lo = std::log(d_min), span = std::log(d_max) - std::log(d_min);
    for (std::size_t k = 1; k <= n; ++k) {
        cfg.centers.push_back(std::exp(lo + (static_cast<double>(k) - 0.5) / static_cast<double>(n) * span));
    }
    cfg.validate();
    return cfg;
}

Tensor bin_logits_to_probs(const Tensor& logits, BinNormalization mode) {
    if (logits.ndim() != 2 || logits.cols() < 2) throw ShapeError("bin logits must be [HW, N] with N >= 2");
    for (double v : logits.data()) {
        if (!std::isfinite(v)) throw NumericError("non-finite bin logit");
    }
    if (mode == BinNormalization::softmax) return nk::softmax_rows(logits);

    const std::size_t hw = logits.rows(), n = logits.cols();
    // Exceedance e_k = P(depth beyond boundary k) with e_0 = 1 and e_N = 0
    // pinned; mass_k = max(0, e_k - e_{k+1}) renormalized per pixel. The
    // clipped differences telescope to at least 1, so row sums are positive.
    const auto ld = logits.data();
    std::vector<double> exceed(hw * (n + 1));
    std::vector<double> probs(hw * n);
    std::vector<double> row_sum(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        double* e = exceed.data() + i * (n + 1);
        e[0] = 1.0;
        for (std::size_t k = 1; k < n; ++k) e[k] = 1.0 / (1.0 + std::exp(-ld[i * n + k - 1]));
        e[n] = 0.0;
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double m = std::max(0.0, e[k] - e[k + 1]);
            probs[i * n + k] = m;
            sum += m;
        }
        for (std::size_t k = 0; k < n; ++k) probs[i * n + k] /= sum;
        row_sum[i] = sum;
    }
    std::vector<double> out = probs;
    return Tensor::from_op(
        {hw, n}, std::move(out), {logits},
        [hw, n, exceed = std::move(exceed), probs = std::move(probs), row_sum = std::move(row_sum)](
            const nk::Node&, std::span<const double> g, std::span<std::vector<double>*> pg) {
            if (!pg[0]) return;
            auto& gl = *pg[0];
            std::vector<double> ge(n + 1);
            for (std::size_t i = 0; i < hw; ++i) {
                const double* gp = g.data() + i * n;
                const double* p = probs.data() + i * n;
                const double* e = exceed.data() + i * (n + 1);
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k) dot += gp[k] * p[k];
                std::fill(ge.begin(), ge.end(), 0.0);
                for (std::size_t k = 0; k < n; ++k) {
                    if (!(e[k] - e[k + 1] > 0)) continue;
                    const double gm = (gp[k] - dot) / row_sum[i];
                    ge[k] += gm;
                    ge[k + 1] -= gm;
                }
                for (std::size_t k = 1; k < n; ++k) gl[i * n + k - 1] += ge[k] * e[k] * (1.0 - e[k]);
            }
        });
}

Tensor refine_centers(const BinConfig& cfg, const Tensor& features, const MlpParams& r) {
    if (r.out_dim() != cfg.count()) throw ShapeError("refinement head must emit one shift per bin");
    return refine_centers_raw(cfg, nk::mlp_forward(features, r));
}

Tensor refine_centers_raw(const BinConfig& cfg, const Tensor& raw) {
    cfg.validate();
    const std::size_t n = cfg.count();
    if (raw.ndim() != 2 || raw.cols() != n) throw ShapeError("refinement output must have one column per bin");
    std::vector<double> bound = cfg.local_widths();
    for (auto& b : bound) b *= cfg.max_shift;
    const Tensor shift = nk::mul(nk::tanh(raw), Tensor::constant({1, n}, std::move(bound)));
    return nk::add(shift, Tensor::constant({1, n}, cfg.centers));
}

void check_pixel_bins(const PixelBins& pb, double tol) {
    if (pb.probs.shape() != pb.centers.shape()) throw ShapeError("probabilities and centers differ in shape");
    const std::size_t hw = pb.probs.rows(), n = pb.probs.cols();
    const auto p = pb.probs.data();
    const auto c = pb.centers.data();
    for (std::size_t i = 0; i < hw; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (p[i * n + k] < 0) throw ParameterError("negative bin probability");
            s += p[i * n + k];
            if (k > 0 && !(c[i * n + k] > c[i * n + k - 1])) throw ParameterError("refined centers not increasing");
        }
        if (std::abs(s - 1.0) > tol) throw ParameterError("bin probabilities do not sum to one");
    }
}

Tensor expected_depth_tensor(const PixelBins& pb) {
    if (pb.probs.shape() != pb.centers.shape()) throw ShapeError("probabilities and centers differ in shape");
    return nk::sum_rows(nk::mul(pb.probs, pb.centers));
}

DepthMap expected_depth(const PixelBins& pb, recon::ImageSize size) {
    return recon::to_depth_map(expected_depth_tensor(pb), size, ScaleKind::metric);
}

MetricDepthParams MetricDepthParams::init(std::size_t dim, std::size_t decoder_dim, std::size_t bins, nk::Rng& rng) {
    MetricDepthParams p;
    p.decoder_w = nk::random_parameter({dim, decoder_dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    p.decoder_b = Tensor::zeros({decoder_dim}, true);
    p.logit_w = nk::random_parameter({decoder_dim, bins}, 0.1 / std::sqrt(static_cast<double>(decoder_dim)), rng);
    p.logit_b = Tensor::zeros({bins}, true);
    p.refine = MlpParams::init(decoder_dim, 2 * decoder_dim, bins, rng);
    return p;
}

void MetricDepthParams::collect(const std::string& prefix, nk::ParamList& out) const {
    out.push_back({prefix + ".decoder_w", decoder_w});
    out.push_back({prefix + ".decoder_b", decoder_b});
    out.push_back({prefix + ".logit_w", logit_w});
    out.push_back({prefix + ".logit_b", logit_b});
    refine.collect(prefix + ".refine", out);
}

MetricDepthOutput metric_depth_forward(const nk::TokenSet& patch_tokens, recon::ImageSize size, std::size_t patch,
                                       const BinConfig& cfg, const MetricDepthParams& p, BinNormalization mode) {
    const auto grid = recon::PatchGrid::of(size, patch);
    if (patch_tokens.size() != grid.count()) throw ShapeError("metric head token count does not match the patch grid");
    const Tensor decoded = nk::linear(patch_tokens.tokens(), p.decoder_w, p.decoder_b);
    // Logits and raw shifts are computed per patch and interpolated to pixels;
    // for the logits this equals decoding interpolated features.
    const Tensor up = recon::upsample_matrix(grid, size);
    MetricDepthOutput out;
    out.bins.probs = bin_logits_to_probs(nk::matmul(up, nk::linear(decoded, p.logit_w, p.logit_b)), mode);
    if (p.refine.out_dim() != cfg.count()) throw ShapeError("refinement head must emit one shift per bin");
    out.bins.centers = refine_centers_raw(cfg, nk::matmul(up, nk::mlp_forward(decoded, p.refine)));
    out.depth = expected_depth_tensor(out.bins);
    return out;
}

} // namespace geovid::metric
