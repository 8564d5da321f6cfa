// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "geovid/cta.hpp"
#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"

using namespace geovid;
using namespace geovid::cta;
using nk::Rng;
using nk::TokenRole;

namespace {

Tensor randn(nk::Shape shape, Rng& rng, bool param = false) {
    std::normal_distribution<double> nd;
    std::vector<double> v(nk::shape_numel(shape));
    for (auto& x : v) x = nd(rng);
    return param ? Tensor::parameter(std::move(shape), std::move(v)) : Tensor::constant(std::move(shape), std::move(v));
}

double max_abs(const Tensor& t) {
    double m = 0;
    for (double v : t.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

CtaConfig small(std::size_t k) {
    CtaConfig c;
    c.dim = 8;
    c.heads = 2;
    c.bridge_tokens = k;
    c.expansion = 2;
    return c;
}

} // namespace

TEST_CASE("zero projections give zero streams through the whole adapter") {
    Rng rng(3);
    CtaParams p = CtaParams::init(small(4), rng);
    p.geom_proj = nk::MlpParams::zeros(8, 16, 8);
    p.lang_proj = nk::MlpParams::zeros(8, 16, 8);
    const TokenSet base(randn({6, 8}, rng), TokenRole::base);
    const CtaOutput out = cta_forward(base, p);
    CHECK(max_abs(out.geom.tokens()) == 0.0);
    CHECK(max_abs(out.lang.tokens()) == 0.0);
    REQUIRE(out.bridge.has_value());
    CHECK(max_abs(out.bridge->tokens()) == 0.0);
}

TEST_CASE("random init produces distinct geometry and language streams") {
    Rng rng(4);
    const CtaParams p = CtaParams::init(small(4), rng);
    const TokenSet base(randn({6, 8}, rng), TokenRole::base);
    const CtaOutput out = cta_forward(base, p);
    CHECK(out.geom.role() == TokenRole::geom);
    CHECK(out.lang.role() == TokenRole::lang);
    CHECK(out.geom.size() == 6);
    CHECK(out.lang.dim() == 8);
    CHECK(max_diff(out.geom.tokens(), out.lang.tokens()) > 1e-3);
}

TEST_CASE("bridge update: zero streams give zero, stream token order does not matter") {
    Rng rng(5);
    const CtaParams p = CtaParams::init(small(3), rng);
    const TokenSet bridge = p.bridge_tokens();
    const TokenSet zg(Tensor::zeros({5, 8}), TokenRole::geom), zl(Tensor::zeros({5, 8}), TokenRole::lang);
    CHECK(max_abs(bridge_update(bridge, zg, zl, p).tokens()) == 0.0);

    const Tensor g = randn({5, 8}, rng), l = randn({5, 8}, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    const TokenSet a = bridge_update(bridge, TokenSet(g, TokenRole::geom), TokenSet(l, TokenRole::lang), p);
    const TokenSet b = bridge_update(bridge, TokenSet(nk::gather_rows(g, perm), TokenRole::geom),
                                     TokenSet(nk::gather_rows(l, perm), TokenRole::lang), p);
    CHECK(max_diff(a.tokens(), b.tokens()) < 1e-12);
}

TEST_CASE("the geometry output depends on the language stream through the bridge") {
    Rng rng(6);
    const CtaParams p = CtaParams::init(small(4), rng);
    const TokenSet bridge = p.bridge_tokens();
    const TokenSet g(randn({5, 8}, rng), TokenRole::geom);
    const TokenSet l(randn({5, 8}, rng), TokenRole::lang);
    const TokenSet l0(Tensor::zeros({5, 8}), TokenRole::lang);
    const TokenSet with_lang = fuse_back(g, bridge_update(bridge, g, l, p), p);
    const TokenSet without = fuse_back(g, bridge_update(bridge, g, l0, p), p);
    CHECK(max_diff(with_lang.tokens(), without.tokens()) > 1e-6);
}

TEST_CASE("fuse_back with a zero output projection is the identity") {
    Rng rng(7);
    CtaParams p = CtaParams::init(small(4), rng);
    p.fuse_geom_attn.wo = Tensor::zeros({8, 8});
    const TokenSet g(randn({5, 8}, rng), TokenRole::geom, 2);
    const TokenSet out = fuse_back(g, TokenSet(randn({4, 8}, rng), TokenRole::bridge), p);
    CHECK(max_diff(out.tokens(), g.tokens()) == 0.0);
    CHECK(out.frame_index() == 2);
}

TEST_CASE("bridge update sends gradient to both streams") {
    Rng rng(8);
    const CtaParams p = CtaParams::init(small(4), rng);
    const Tensor g = randn({5, 8}, rng, true), l = randn({5, 8}, rng, true);
    const TokenSet b = bridge_update(p.bridge_tokens(), TokenSet(g, TokenRole::geom), TokenSet(l, TokenRole::lang), p);
    const auto grads = nk::backward(nk::sum(nk::square(b.tokens())));
    auto norm = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    CHECK(norm(grads.of(g)) > 1e-8);
    CHECK(norm(grads.of(l)) > 1e-8);
}

TEST_CASE("bridge count follows the config") {
    Rng rng(9);
    const CtaParams p16 = CtaParams::init(small(16), rng);
    const TokenSet base(randn({7, 8}, rng), TokenRole::base);
    const CtaOutput out = cta_forward(base, p16);
    CHECK(p16.bridge_count() == 16);
    REQUIRE(out.bridge.has_value());
    CHECK(out.bridge->size() == 16);
    CHECK(out.bridge->role() == TokenRole::bridge);
}

TEST_CASE("without bridge tokens the adapter is the two projections") {
    Rng rng(10);
    const CtaParams p = CtaParams::init(small(0), rng);
    CHECK(p.bridge_count() == 0);
    CHECK_THROWS_AS(p.bridge_tokens(), StateError);
    const TokenSet base(randn({6, 8}, rng), TokenRole::base);
    const CtaOutput out = cta_forward(base, p);
    CHECK_FALSE(out.bridge.has_value());
    CHECK(max_diff(out.geom.tokens(), nk::mlp_forward(base.tokens(), p.geom_proj)) == 0.0);
    CHECK(max_diff(out.lang.tokens(), nk::mlp_forward(base.tokens(), p.lang_proj)) == 0.0);
    nk::ParamList params;
    p.collect("cta", params);
    CHECK(params.size() == 8);
}

TEST_CASE("token roles are enforced") {
    Rng rng(11);
    const CtaParams p = CtaParams::init(small(2), rng);
    const TokenSet g(randn({3, 8}, rng), TokenRole::geom);
    CHECK_THROWS_AS(project_streams(g, p), InvalidRoleError);
    CHECK_THROWS_AS(bridge_update(g, g, g, p), InvalidRoleError);
    CHECK_THROWS_AS(fuse_back(p.bridge_tokens(), p.bridge_tokens(), p), InvalidRoleError);
}
