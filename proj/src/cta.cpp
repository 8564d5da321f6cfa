// SPDX-License-Identifier: Apache-2.0
#include "geovid/cta.hpp"

#include <cmath>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

namespace geovid::cta {

using nk::TokenRole;

CtaParams CtaParams::init(const CtaConfig& cfg, nk::Rng& rng) {
    CtaParams p;
    const std::size_t c = cfg.dim;
    p.geom_proj = MlpParams::init(c, cfg.expansion * c, c, rng);
    p.lang_proj = MlpParams::init(c, cfg.expansion * c, c, rng);
    if (cfg.bridge_tokens > 0) {
        p.bridge_init = nk::random_parameter({cfg.bridge_tokens, c}, 1.0 / std::sqrt(static_cast<double>(c)), rng);
        p.bridge_attn = MhaParams::init(c, cfg.heads, rng, cfg.qk_norm);
        p.fuse_geom_attn = MhaParams::init(c, cfg.heads, rng, cfg.qk_norm);
        p.fuse_lang_attn = MhaParams::init(c, cfg.heads, rng, cfg.qk_norm);
    }
    return p;
}

TokenSet CtaParams::bridge_tokens() const {
    if (!bridge_init.defined()) throw StateError("adapter has no bridge tokens");
    return TokenSet(bridge_init, TokenRole::bridge);
}

void CtaParams::collect(const std::string& prefix, nk::ParamList& out) const {
    geom_proj.collect(prefix + ".geom_proj", out);
    lang_proj.collect(prefix + ".lang_proj", out);
    if (bridge_count() == 0) return;
    out.push_back({prefix + ".bridge", bridge_init});
    bridge_attn.collect(prefix + ".bridge_attn", out);
    fuse_geom_attn.collect(prefix + ".fuse_geom_attn", out);
    fuse_lang_attn.collect(prefix + ".fuse_lang_attn", out);
}

std::pair<TokenSet, TokenSet> project_streams(const TokenSet& base, const CtaParams& p) {
    if (base.role() != TokenRole::base) throw InvalidRoleError("project_streams expects base tokens");
    return {nk::mlp_forward(base, p.geom_proj, TokenRole::geom), nk::mlp_forward(base, p.lang_proj, TokenRole::lang)};
}

TokenSet bridge_update(const TokenSet& bridge, const TokenSet& geom_fused, const TokenSet& lang_fused,
                       const CtaParams& p) {
    if (bridge.role() != TokenRole::bridge) throw InvalidRoleError("bridge_update expects bridge tokens");
    const Tensor from_geom = nk::mha_forward(bridge.tokens(), geom_fused.tokens(), geom_fused.tokens(), p.bridge_attn);
    const Tensor from_lang = nk::mha_forward(bridge.tokens(), lang_fused.tokens(), lang_fused.tokens(), p.bridge_attn);
    return TokenSet(nk::add(from_geom, from_lang), TokenRole::bridge);
}

TokenSet fuse_back(const TokenSet& stream, const TokenSet& bridge_updated, const CtaParams& p) {
    const MhaParams* attn = nullptr;
    switch (stream.role()) {
    case TokenRole::geom: attn = &p.fuse_geom_attn; break;
    case TokenRole::lang: attn = &p.fuse_lang_attn; break;
    default: throw InvalidRoleError("fuse_back expects a geom or lang stream");
    }
    const Tensor read = nk::mha_forward(stream.tokens(), bridge_updated.tokens(), bridge_updated.tokens(), *attn);
    return TokenSet(nk::add(stream.tokens(), read), stream.role(), stream.frame_index());
}

CtaOutput cta_forward(const TokenSet& base, const CtaParams& p) {
    auto [geom, lang] = project_streams(base, p);
    if (p.bridge_count() == 0) return {geom, lang, std::nullopt};
    TokenSet bridge = bridge_update(p.bridge_tokens(), geom, lang, p);
    TokenSet geom_out = fuse_back(geom, bridge, p);
    TokenSet lang_out = fuse_back(lang, bridge, p);
    return {geom_out, lang_out, bridge};
}

} // namespace geovid::cta
