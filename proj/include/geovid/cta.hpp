// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <utility>

#include "geovid/numkit/nn.hpp"

// Cross-task adapter: shared base tokens are projected into a geometry and a
// language stream; learnable bridge tokens read from both streams and are
// then written back into each stream.
namespace geovid::cta {

using nk::MhaParams;
using nk::MlpParams;
using nk::Tensor;
using nk::TokenSet;

struct CtaConfig {
    std::size_t dim = 64;
    std::size_t heads = 4;
    /// 0 disables the bridge entirely (pure projections).
    std::size_t bridge_tokens = 16;
    std::size_t expansion = 4;
    bool qk_norm = false;
};

struct CtaParams {
    MlpParams geom_proj;
    MlpParams lang_proj;
    Tensor bridge_init; ///< [K, C]; undefined when K == 0
    MhaParams bridge_attn;
    MhaParams fuse_geom_attn;
    MhaParams fuse_lang_attn;

    static CtaParams init(const CtaConfig& cfg, nk::Rng& rng);
    std::size_t bridge_count() const { return bridge_init.defined() ? bridge_init.rows() : 0; }
    TokenSet bridge_tokens() const;
    void collect(const std::string& prefix, nk::ParamList& out) const;
};

struct CtaOutput {
    TokenSet geom;
    TokenSet lang;
    std::optional<TokenSet> bridge;
};

std::pair<TokenSet, TokenSet> project_streams(const TokenSet& base, const CtaParams& p);

/// Attn(bridge, geom, geom) + Attn(bridge, lang, lang) with shared projections.
TokenSet bridge_update(const TokenSet& bridge, const TokenSet& geom_fused, const TokenSet& lang_fused,
                       const CtaParams& p);

/// stream + Attn(stream, bridge', bridge') using the stream's own attention.
TokenSet fuse_back(const TokenSet& stream, const TokenSet& bridge_updated, const CtaParams& p);

CtaOutput cta_forward(const TokenSet& base, const CtaParams& p);

} // namespace geovid::cta
