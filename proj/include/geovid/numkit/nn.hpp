// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "geovid/numkit/tensor.hpp"

namespace geovid::nk {

using Rng = std::mt19937_64;

enum class TokenRole { base, geom, lang, bridge, camera, register_ };

std::string_view to_string(TokenRole role);

/// [N, C] feature tokens with a fixed role.
class TokenSet {
public:
    TokenSet(Tensor tokens, TokenRole role, std::optional<int> frame_index = std::nullopt);

    const Tensor& tokens() const { return tokens_; }
    TokenRole role() const { return role_; }
    std::optional<int> frame_index() const { return frame_index_; }
    std::size_t size() const { return tokens_.rows(); }
    std::size_t dim() const { return tokens_.cols(); }

private:
    Tensor tokens_;
    TokenRole role_;
    std::optional<int> frame_index_;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

/// Gaussian matrix with standard deviation `stddev`, as a trainable leaf.
Tensor random_parameter(Shape shape, double stddev, Rng& rng);

/// Two-layer perceptron with GELU in between.
struct MlpParams {
    Tensor w1, b1, w2, b2;
    int expansion = 4;

    /// Weights ~ N(0, 1/fan_in); zero biases. `zero_output` zeroes the second layer.
    static MlpParams init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, bool zero_output = false);
    static MlpParams zeros(std::size_t in, std::size_t hidden, std::size_t out);

    std::size_t in_dim() const { return w1.rows(); }
    std::size_t out_dim() const { return w2.cols(); }
    void collect(const std::string& prefix, ParamList& out) const;
};

/// Bias-free multi-head attention projections, each [C, C]; head h uses
/// columns [h*d_h, (h+1)*d_h).
struct MhaParams {
    Tensor wq, wk, wv, wo;
    std::size_t heads = 1;
    bool qk_norm = false;

    static MhaParams init(std::size_t dim, std::size_t heads, Rng& rng, bool qk_norm = false);
    std::size_t dim() const { return wq.rows(); }
    std::size_t head_dim() const { return dim() / heads; }
    void collect(const std::string& prefix, ParamList& out) const;
};

/// x @ W + b with row broadcast.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor mlp_forward(const Tensor& x, const MlpParams& p);
TokenSet mlp_forward(const TokenSet& x, const MlpParams& p, TokenRole out_role);

/// Softmax(q k^T / sqrt(d_h)) v per head, then the output projection. With
/// qk_norm the per-head query/key vectors are first rescaled to L2 norm sqrt(d_h).
Tensor mha_forward(const Tensor& q, const Tensor& k, const Tensor& v, const MhaParams& p);
TokenSet mha_forward(const TokenSet& q, const TokenSet& k, const TokenSet& v, const MhaParams& p);

} // namespace geovid::nk
