// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "geovid/camera.hpp"
#include "geovid/numkit/nn.hpp"
#include "geovid/recon_heads.hpp"

// Bin-based metric depth: per-pixel probabilities over depth bins whose
// centers are shifted per pixel; the expectation is the metric depth.
namespace geovid::metric {

using nk::MlpParams;
using nk::Tensor;

struct BinConfig {
    std::vector<double> centers; ///< strictly increasing, meters
    double d_min = 0.1;
    double d_max = 10.0;
    /// Refinement bound as a fraction of the local bin width; must be < 0.5.
    double max_shift = 0.45;

    std::size_t count() const { return centers.size(); }
    /// min distance to the neighbouring centers, with d_min / d_max acting as
    /// neighbours of the end bins.
    std::vector<double> local_widths() const;
    void validate() const;
};

/// Log-uniform centers c_k = exp(ln d_min + (k - 1/2)/N (ln d_max - ln d_min)).
BinConfig init_bins(std::size_t n, double d_min, double d_max, double max_shift = 0.45);

enum class BinNormalization { ordinal, softmax };

/// Logits [HW, N] -> per-pixel simplex [HW, N]. In ordinal mode column k < N-1
/// is the logit of P(depth beyond bin k); the last column is unused.
Tensor bin_logits_to_probs(const Tensor& logits, BinNormalization mode = BinNormalization::ordinal);

/// c_i(k) = c_k + max_shift * width_k * tanh(r_k(F_i)); features [HW, D] -> [HW, N].
Tensor refine_centers(const BinConfig& cfg, const Tensor& features, const MlpParams& r);
/// Same bound applied to precomputed raw shifts [HW, N].
Tensor refine_centers_raw(const BinConfig& cfg, const Tensor& raw);

struct PixelBins {
    Tensor probs;   ///< [HW, N]
    Tensor centers; ///< [HW, N]
};

/// Throws ParameterError if a simplex or center ordering is violated.
void check_pixel_bins(const PixelBins& pb, double tol = 1e-10);

/// Per-pixel sum_k p_i(k) c_i(k), [HW, 1].
Tensor expected_depth_tensor(const PixelBins& pb);
DepthMap expected_depth(const PixelBins& pb, recon::ImageSize size);

struct MetricDepthParams {
    Tensor decoder_w; ///< [C, D] patch token -> decoder feature
    Tensor decoder_b; ///< [D]
    Tensor logit_w;   ///< [D, N]
    Tensor logit_b;   ///< [N]
    MlpParams refine; ///< D -> hidden -> N

    static MetricDepthParams init(std::size_t dim, std::size_t decoder_dim, std::size_t bins, nk::Rng& rng);
    void collect(const std::string& prefix, nk::ParamList& out) const;
};

struct MetricDepthOutput {
    PixelBins bins;
    Tensor depth; ///< [HW, 1]
};

/// Patch tokens are decoded to low-dimensional features and mapped to bin
/// logits and raw center shifts per patch; both are bilinearly upsampled to pixels.
MetricDepthOutput metric_depth_forward(const nk::TokenSet& patch_tokens, recon::ImageSize size, std::size_t patch,
                                       const BinConfig& cfg, const MetricDepthParams& p,
                                       BinNormalization mode = BinNormalization::ordinal);

} // namespace geovid::metric
