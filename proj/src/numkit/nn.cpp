// SPDX-License-Identifier: Apache-2.0
#include "geovid/numkit/nn.hpp"

#include <cmath>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

namespace geovid::nk {

std::string_view to_string(TokenRole role) {
    switch (role) {
    case TokenRole::base: return "base";
    case TokenRole::geom: return "geom";
    case TokenRole::lang: return "lang";
    case TokenRole::bridge: return "bridge";
    case TokenRole::camera: return "camera";
    case TokenRole::register_: return "register";
    }
    return "unknown";
}

TokenSet::TokenSet(Tensor tokens, TokenRole role, std::optional<int> frame_index)
    : tokens_(std::move(tokens)), role_(role), frame_index_(frame_index) {
    if (!tokens_.defined() || tokens_.ndim() != 2) throw ShapeError("token set needs an [N, C] tensor");
}

Tensor random_parameter(Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = dist(rng);
    return Tensor::parameter(std::move(shape), std::move(data));
}

MlpParams MlpParams::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, bool zero_output) {
    MlpParams p;
    p.w1 = random_parameter({in, hidden}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    p.b1 = Tensor::zeros({hidden}, true);
    p.w2 = zero_output ? Tensor::zeros({hidden, out}, true)
                       : random_parameter({hidden, out}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    p.b2 = Tensor::zeros({out}, true);
    p.expansion = in ? static_cast<int>(hidden / in) : 4;
    return p;
}

MlpParams MlpParams::zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    MlpParams p;
    p.w1 = Tensor::zeros({in, hidden}, true);
    p.b1 = Tensor::zeros({hidden}, true);
    p.w2 = Tensor::zeros({hidden, out}, true);
    p.b2 = Tensor::zeros({out}, true);
    p.expansion = in ? static_cast<int>(hidden / in) : 4;
    return p;
}

void MlpParams::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".b1", b1});
    out.push_back({prefix + ".w2", w2});
    out.push_back({prefix + ".b2", b2});
}

MhaParams MhaParams::init(std::size_t dim, std::size_t heads, Rng& rng, bool qk_norm) {
    if (heads == 0 || dim % heads != 0) throw ShapeError("head count must divide the model dimension");
    MhaParams p;
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    p.wq = random_parameter({dim, dim}, s, rng);
    p.wk = random_parameter({dim, dim}, s, rng);
    p.wv = random_parameter({dim, dim}, s, rng);
    p.wo = random_parameter({dim, dim}, s, rng);
    p.heads = heads;
    p.qk_norm = qk_norm;
    return p;
}

void MhaParams::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".wq", wq});
    out.push_back({prefix + ".wk", wk});
    out.push_back({prefix + ".wv", wv});
    out.push_back({prefix + ".wo", wo});
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add(matmul(x, weight), bias); }

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
    if (x.cols() != p.in_dim()) {
        throw ShapeError("mlp input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(p.in_dim()));
    }
    return linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

TokenSet mlp_forward(const TokenSet& x, const MlpParams& p, TokenRole out_role) {
    return TokenSet(mlp_forward(x.tokens(), p), out_role, x.frame_index());
}

Tensor mha_forward(const Tensor& q, const Tensor& k, const Tensor& v, const MhaParams& p) {
    const std::size_t c = p.dim();
    if (q.cols() != c || k.cols() != c || v.cols() != c) throw ShapeError("attention inputs must have C columns");
    if (k.rows() != v.rows()) throw ShapeError("keys and values must have equal token counts");
    const std::size_t dh = p.head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor qp = matmul(q, p.wq);
    const Tensor kp = matmul(k, p.wk);
    const Tensor vp = matmul(v, p.wv);
    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        Tensor qh = p.heads == 1 ? qp : slice_cols(qp, h * dh, dh);
        Tensor kh = p.heads == 1 ? kp : slice_cols(kp, h * dh, dh);
        const Tensor vh = p.heads == 1 ? vp : slice_cols(vp, h * dh, dh);
        if (p.qk_norm) {
            const double target = std::sqrt(static_cast<double>(dh));
            qh = normalize_rows(qh, target);
            kh = normalize_rows(kh, target);
        }
        const Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
        heads.push_back(matmul(weights, vh));
    }
    const Tensor merged = p.heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(merged, p.wo);
}

TokenSet mha_forward(const TokenSet& q, const TokenSet& k, const TokenSet& v, const MhaParams& p) {
    return TokenSet(mha_forward(q.tokens(), k.tokens(), v.tokens(), p), q.role(), q.frame_index());
}

} // namespace geovid::nk
