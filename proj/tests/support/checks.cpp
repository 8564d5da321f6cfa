// SPDX-License-Identifier: Apache-2.0
#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>

#include <Eigen/Geometry>

#include "geovid/cta.hpp"
#include "geovid/errors.hpp"
#include "geovid/evalmetrics.hpp"
#include "geovid/losses.hpp"
#include "geovid/metric_depth.hpp"
#include "geovid/numkit/gradcheck.hpp"
#include "geovid/numkit/ops.hpp"
#include "geovid/patch3d.hpp"
#include "geovid/recon_heads.hpp"
#include "geovid/scale_align.hpp"
#include "geovid/synthscene.hpp"
#include "oracles.hpp"

namespace geovid::checks {

using nk::Rng;
using nk::Tensor;
using nk::TokenRole;
using nk::TokenSet;

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

Tensor randn(nk::Shape shape, Rng& rng, double scale = 1.0, double shift = 0.0) {
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(nk::shape_numel(shape));
    for (auto& x : v) x = nd(rng) + shift;
    return Tensor::constant(std::move(shape), std::move(v));
}

Tensor uniform(nk::Shape shape, Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> ud(lo, hi);
    std::vector<double> v(nk::shape_numel(shape));
    for (auto& x : v) x = ud(rng);
    return Tensor::constant(std::move(shape), std::move(v));
}

// Values bounded away from zero so |x| and relu stay differentiable under the probe.
Tensor away_from_zero(nk::Shape shape, Rng& rng) {
    std::uniform_real_distribution<double> ud(0.1, 2.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(nk::shape_numel(shape));
    for (auto& x : v) x = sign(rng) ? ud(rng) : -ud(rng);
    return Tensor::constant(std::move(shape), std::move(v));
}

// Scalar probe: sum(t * W) with a fixed random W breaks symmetric cancellations.
Tensor probe(const Tensor& t, const Tensor& w) { return nk::sum(nk::mul(t, w)); }

Eigen::Matrix3d random_rotation(Rng& rng) {
    std::normal_distribution<double> nd;
    Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
    return q.normalized().toRotationMatrix();
}

CameraModel random_camera(Rng& rng, ScaleKind kind = ScaleKind::metric) {
    std::uniform_real_distribution<double> f(50.0, 200.0), c(20.0, 80.0), t(-2.0, 2.0);
    return CameraModel(Intrinsics{f(rng), f(rng), c(rng), c(rng)}, random_rotation(rng),
                       Eigen::Vector3d(t(rng), t(rng), t(rng)), kind);
}

recon::CameraTensors camera_tensors_from_quat(const Tensor& q, const Tensor& t, const Tensor& focal, double cx, double cy) {
    recon::CameraTensors c;
    c.rotation = nk::quat_to_rotmat(nk::normalize_rows(q));
    c.translation = t;
    c.focal = focal;
    c.cx = cx;
    c.cy = cy;
    c.kind = ScaleKind::metric;
    return c;
}

using Fn = std::function<Tensor(const Tensor&)>;
struct Case {
    std::string name;
    std::function<std::pair<Fn, Tensor>(Rng&)> make;
};

std::vector<Case> gradient_cases() {
    std::vector<Case> cs;
    auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, std::function<Tensor(Rng&)> input) {
        cs.push_back({name, [op, input](Rng& rng) {
                          Tensor x = input(rng);
                          const Tensor w = randn(op(x).shape(), rng);
                          return std::pair<Fn, Tensor>([op, w](const Tensor& v) { return probe(op(v), w); }, x);
                      }});
    };
    auto normal = [](Rng& rng) { return randn({3, 4}, rng); };
    auto positive = [](Rng& rng) { return uniform({3, 4}, rng, 0.5, 2.0); };

    unary("exp", [](const Tensor& x) { return nk::exp(x); }, normal);
    unary("log", [](const Tensor& x) { return nk::log(x); }, positive);
    unary("tanh", [](const Tensor& x) { return nk::tanh(x); }, normal);
    unary("sigmoid", [](const Tensor& x) { return nk::sigmoid(x); }, normal);
    unary("softplus", [](const Tensor& x) { return nk::softplus(x); }, normal);
    unary("gelu", [](const Tensor& x) { return nk::gelu(x); }, normal);
    unary("sqrt", [](const Tensor& x) { return nk::sqrt(x); }, positive);
    unary("square", [](const Tensor& x) { return nk::square(x); }, normal);
    unary("abs", [](const Tensor& x) { return nk::abs(x); }, [](Rng& r) { return away_from_zero({3, 4}, r); });
    unary("relu", [](const Tensor& x) { return nk::relu(x); }, [](Rng& r) { return away_from_zero({3, 4}, r); });
    unary("neg/scale/add_scalar", [](const Tensor& x) { return nk::add_scalar(nk::scale(nk::neg(x), 1.7), 0.3); }, normal);
    unary("transpose", [](const Tensor& x) { return nk::transpose(x); }, normal);
    unary("reshape", [](const Tensor& x) { return nk::reshape(x, {2, 6}); }, normal);
    unary("slice_cols", [](const Tensor& x) { return nk::slice_cols(x, 1, 2); }, normal);
    unary("slice_rows", [](const Tensor& x) { return nk::slice_rows(x, 1, 2); }, normal);
    unary("concat_cols", [](const Tensor& x) { return nk::concat_cols({x, nk::square(x)}); }, normal);
    unary("concat_rows", [](const Tensor& x) { return nk::concat_rows({nk::exp(x), x}); }, normal);
    unary("gather_rows", [](const Tensor& x) { return nk::gather_rows(x, {2, 0, 2, 1}); }, normal);
    unary("sum_rows", [](const Tensor& x) { return nk::square(nk::sum_rows(x)); }, normal);
    unary("sum_cols", [](const Tensor& x) { return nk::square(nk::sum_cols(x)); }, normal);
    unary("mean", [](const Tensor& x) { return nk::square(nk::mean(x)); }, normal);
    unary("softmax_rows", [](const Tensor& x) { return nk::softmax_rows(x); }, normal);
    unary("layer_norm_rows", [](const Tensor& x) { return nk::layer_norm_rows(x); }, normal);
    unary("normalize_rows", [](const Tensor& x) { return nk::normalize_rows(x, 2.5); }, normal);
    unary("quat_to_rotmat", [](const Tensor& x) { return nk::quat_to_rotmat(x); }, [](Rng& r) { return randn({1, 4}, r); });
    unary("rotation_angle_sq",
          [](const Tensor& x) { return nk::rotation_angle_sq(nk::quat_to_rotmat(nk::normalize_rows(x))); },
          [](Rng& r) {
              // w >= 0.3 keeps the angle below ~145 degrees, away from the pi branch.
              Tensor q = randn({1, 4}, r);
              auto d = std::vector<double>(q.data().begin(), q.data().end());
              d[0] = 0.3 + std::abs(d[0]) * 2.0;
              return Tensor::constant({1, 4}, d);
          });
    unary("rotation_angle_sq(matrix)", [](const Tensor& x) { return nk::rotation_angle_sq(x); },
          [](Rng& r) {
              Eigen::Matrix3d m = random_rotation(r);
              Eigen::Quaterniond q(m);
              if (std::abs(q.w()) < 0.3) m = Eigen::Matrix3d::Identity();
              std::vector<double> v(9);
              std::normal_distribution<double> nd(0.0, 0.05);
              for (int i = 0; i < 3; ++i)
                  for (int j = 0; j < 3; ++j) v[i * 3 + j] = m(i, j) + nd(r);
              return Tensor::constant({3, 3}, v);
          });

    auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op, bool positive_b) {
        cs.push_back({name, [op, positive_b](Rng& rng) {
                          Tensor x = randn({3, 4}, rng);
                          const Tensor b = positive_b ? uniform({3, 4}, rng, 0.5, 2.0) : randn({3, 4}, rng);
                          const Tensor w = randn({3, 4}, rng);
                          return std::pair<Fn, Tensor>(
                              [op, b, w](const Tensor& v) { return nk::add(probe(op(v, b), w), probe(op(b, nk::add_scalar(nk::square(v), 0.5)), w)); }, x);
                      }});
    };
    binary("add", [](const Tensor& a, const Tensor& b) { return nk::add(a, b); }, false);
    binary("sub", [](const Tensor& a, const Tensor& b) { return nk::sub(a, b); }, false);
    binary("mul", [](const Tensor& a, const Tensor& b) { return nk::mul(a, b); }, false);
    binary("div", [](const Tensor& a, const Tensor& b) { return nk::div(a, b); }, true);
    cs.push_back({"add(row broadcast)", [](Rng& rng) {
                      const Tensor a = randn({3, 4}, rng), w = randn({3, 4}, rng);
                      return std::pair<Fn, Tensor>([a, w](const Tensor& b) { return probe(nk::mul(nk::add(a, b), a), w); },
                                                   randn({4}, rng));
                  }});
    cs.push_back({"matmul", [](Rng& rng) {
                      const Tensor b = randn({4, 5}, rng), c = randn({2, 3}, rng), w = randn({2, 5}, rng);
                      return std::pair<Fn, Tensor>(
                          [b, c, w](const Tensor& a) { return probe(nk::matmul(c, nk::matmul(a, b)), w); }, randn({3, 4}, rng));
                  }});
    cs.push_back({"matmul(sparse lhs)", [](Rng& rng) {
                      const Tensor up = recon::upsample_matrix(recon::PatchGrid::of({4, 6}, 2), {4, 6});
                      const Tensor w = randn({24, 3}, rng);
                      return std::pair<Fn, Tensor>([up, w](const Tensor& x) { return probe(nk::matmul(up, x), w); },
                                                   randn({6, 3}, rng));
                  }});
    cs.push_back({"cross_entropy_rows", [](Rng& rng) {
                      return std::pair<Fn, Tensor>(
                          [](const Tensor& x) { return nk::cross_entropy_rows(x, {0, 3, 1}); }, randn({3, 4}, rng));
                  }});

    // Layers.
    cs.push_back({"mlp_forward", [](Rng& rng) {
                      const auto p = nk::MlpParams::init(4, 8, 3, rng);
                      const Tensor w = randn({5, 3}, rng);
                      return std::pair<Fn, Tensor>([p, w](const Tensor& x) { return probe(nk::mlp_forward(x, p), w); },
                                                   randn({5, 4}, rng));
                  }});
    for (bool qk : {false, true}) {
        cs.push_back({qk ? "mha_forward(qk_norm)" : "mha_forward", [qk](Rng& rng) {
                          const auto p = nk::MhaParams::init(8, 2, rng, qk);
                          const Tensor kv = randn({5, 8}, rng), w = randn({3, 8}, rng);
                          return std::pair<Fn, Tensor>(
                              [p, kv, w](const Tensor& q) {
                                  return probe(nk::mha_forward(q, nk::concat_rows({kv, q}), nk::concat_rows({kv, q}), p), w);
                              },
                              randn({3, 8}, rng));
                      }});
    }

    // Adapter.
    for (std::size_t k : {std::size_t{0}, std::size_t{3}}) {
        cs.push_back({k ? "cta_forward" : "cta_forward(no bridge)", [k](Rng& rng) {
                          const auto p = cta::CtaParams::init({8, 2, k, 2, false}, rng);
                          const Tensor wg = randn({5, 8}, rng), wl = randn({5, 8}, rng), wb = randn({k ? k : 1, 8}, rng);
                          return std::pair<Fn, Tensor>(
                              [p, wg, wl, wb](const Tensor& x) {
                                  const auto out = cta::cta_forward(TokenSet(x, TokenRole::base), p);
                                  Tensor s = nk::add(probe(out.geom.tokens(), wg), probe(out.lang.tokens(), wl));
                                  if (out.bridge) s = nk::add(s, probe(out.bridge->tokens(), wb));
                                  return s;
                              },
                              randn({5, 8}, rng));
                      }});
    }
    cs.push_back({"bridge_update", [](Rng& rng) {
                      const auto p = cta::CtaParams::init({8, 2, 3, 2, false}, rng);
                      const Tensor g = randn({5, 8}, rng), l = randn({5, 8}, rng), w = randn({3, 8}, rng);
                      return std::pair<Fn, Tensor>(
                          [p, g, l, w](const Tensor& x) {
                              return probe(cta::bridge_update(p.bridge_tokens(), TokenSet(nk::add(g, x), TokenRole::geom),
                                                              TokenSet(nk::mul(l, x), TokenRole::lang), p)
                                               .tokens(),
                                           w);
                          },
                          randn({5, 8}, rng));
                  }});
    cs.push_back({"fuse_back", [](Rng& rng) {
                      const auto p = cta::CtaParams::init({8, 2, 3, 2, false}, rng);
                      const Tensor b = randn({3, 8}, rng), w = randn({5, 8}, rng);
                      return std::pair<Fn, Tensor>(
                          [p, b, w](const Tensor& x) {
                              return probe(cta::fuse_back(TokenSet(x, TokenRole::geom), TokenSet(nk::add(b, nk::slice_rows(x, 0, 3)), TokenRole::bridge), p)
                                               .tokens(),
                                           w);
                          },
                          randn({5, 8}, rng));
                  }});

    // Reconstruction heads.
    cs.push_back({"gfa_backbone", [](Rng& rng) {
                      recon::BackboneConfig bc;
                      bc.dim = 8;
                      bc.heads = 2;
                      bc.blocks = 2;
                      bc.register_tokens = 2;
                      bc.expansion = 2;
                      const auto p = recon::BackboneParams::init(bc, rng);
                      const Tensor w = randn({8, 8}, rng), wc = randn({2, 8}, rng);
                      return std::pair<Fn, Tensor>(
                          [p, w, wc](const Tensor& x) {
                              std::vector<TokenSet> frames{TokenSet(nk::slice_rows(x, 0, 4), TokenRole::geom),
                                                          TokenSet(nk::slice_rows(x, 4, 4), TokenRole::geom)};
                              const auto out = recon::gfa_backbone(frames, p);
                              const Tensor pt = nk::concat_rows({out.patches[0].tokens(), out.patches[1].tokens()});
                              const Tensor ct = nk::concat_rows({out.cameras[0].tokens(), out.cameras[1].tokens()});
                              return nk::add(probe(pt, w), probe(ct, wc));
                          },
                          randn({8, 8}, rng));
                  }});
    cs.push_back({"camera_head", [](Rng& rng) {
                      auto p = recon::CameraHeadParams::init(8, 30.0, rng);
                      p.mlp = nk::MlpParams::init(8, 8, 8, rng); // non-zero output layer for a non-trivial check
                      const Tensor wr = randn({3, 3}, rng), wt = randn({1, 3}, rng), wf = randn({1, 2}, rng, 0.01);
                      return std::pair<Fn, Tensor>(
                          [p, wr, wt, wf](const Tensor& x) {
                              const auto c = recon::camera_head(TokenSet(x, TokenRole::camera), p, {4, 4});
                              return nk::add(nk::add(probe(c.rotation, wr), probe(c.translation, wt)), probe(c.focal, wf));
                          },
                          randn({1, 8}, rng, 0.5));
                  }});
    cs.push_back({"depth_head", [](Rng& rng) {
                      const auto p = recon::DepthHeadParams::init(8, 2, rng);
                      const Tensor w = randn({16, 1}, rng);
                      return std::pair<Fn, Tensor>(
                          [p, w](const Tensor& x) { return probe(recon::depth_head(TokenSet(x, TokenRole::geom), {4, 4}, p), w); },
                          randn({4, 8}, rng));
                  }});

    // Metric bins.
    for (auto mode : {metric::BinNormalization::ordinal, metric::BinNormalization::softmax}) {
        cs.push_back({mode == metric::BinNormalization::ordinal ? "bin_logits_to_probs(ordinal)" : "bin_logits_to_probs(softmax)",
                      [mode](Rng& rng) {
                          const Tensor w = randn({4, 6}, rng);
                          return std::pair<Fn, Tensor>(
                              [mode, w](const Tensor& x) { return probe(metric::bin_logits_to_probs(x, mode), w); },
                              randn({4, 6}, rng, 2.0));
                      }});
    }
    cs.push_back({"refine_centers", [](Rng& rng) {
                      const auto cfg = metric::init_bins(6, 0.1, 10.0);
                      const auto r = nk::MlpParams::init(3, 6, 6, rng);
                      const Tensor w = randn({4, 6}, rng);
                      return std::pair<Fn, Tensor>(
                          [cfg, r, w](const Tensor& x) { return probe(metric::refine_centers(cfg, x, r), w); }, randn({4, 3}, rng));
                  }});
    cs.push_back({"expected_depth", [](Rng& rng) {
                      const auto cfg = metric::init_bins(6, 0.1, 10.0);
                      const Tensor raw = randn({4, 6}, rng), w = randn({4, 1}, rng);
                      return std::pair<Fn, Tensor>(
                          [cfg, raw, w](const Tensor& x) {
                              metric::PixelBins pb{metric::bin_logits_to_probs(x), metric::refine_centers_raw(cfg, nk::add(raw, x))};
                              return probe(metric::expected_depth_tensor(pb), w);
                          },
                          randn({4, 6}, rng));
                  }});
    cs.push_back({"metric_depth_forward", [](Rng& rng) {
                      const auto cfg = metric::init_bins(6, 0.1, 10.0);
                      const auto p = metric::MetricDepthParams::init(8, 4, 6, rng);
                      const Tensor w = randn({16, 1}, rng);
                      return std::pair<Fn, Tensor>(
                          [cfg, p, w](const Tensor& x) {
                              return probe(metric::metric_depth_forward(TokenSet(x, TokenRole::geom), {4, 4}, 2, cfg, p).depth, w);
                          },
                          randn({4, 8}, rng));
                  }});

    // 3D patches.
    cs.push_back({"positional_embed", [](Rng& rng) {
                      const auto p = nk::MlpParams::init(3, 8, 8, rng);
                      const Tensor w = randn({5, 8}, rng);
                      return std::pair<Fn, Tensor>([p, w](const Tensor& x) { return probe(p3d::positional_embed(x, p), w); },
                                                   randn({5, 3}, rng));
                  }});
    cs.push_back({"backproject_tensor", [](Rng& rng) {
                      const Tensor pix = uniform({5, 2}, rng, 0.0, 8.0), d = uniform({5, 1}, rng, 0.5, 3.0);
                      const Tensor f = uniform({1, 2}, rng, 4.0, 8.0), t = randn({1, 3}, rng), w = randn({5, 3}, rng);
                      return std::pair<Fn, Tensor>(
                          [pix, d, f, t, w](const Tensor& q) {
                              const auto cam = camera_tensors_from_quat(q, t, f, 3.5, 3.5);
                              return probe(p3d::backproject_tensor(pix, nk::mul(d, nk::add_scalar(nk::sum(nk::square(q)), 0.0)), cam), w);
                          },
                          randn({1, 4}, rng));
                  }});
    cs.push_back({"fuse_tokens_tensor", [](Rng& rng) {
                      const auto p = nk::MlpParams::init(3, 8, 8, rng);
                      const Tensor lang = randn({4, 8}, rng), w = randn({4, 8}, rng);
                      recon::CameraTensors cam = recon::CameraTensors::constant(random_camera(rng));
                      cam.cx = 1.5;
                      cam.cy = 1.5;
                      return std::pair<Fn, Tensor>(
                          [p, lang, cam, w](const Tensor& x) {
                              return probe(p3d::fuse_tokens_tensor(lang, nk::softplus(x), cam, p, {4, 4}, 2).tokens, w);
                          },
                          randn({16, 1}, rng));
                  }});
    cs.push_back({"encode", [](Rng& rng) {
                      const auto enc = synth::EncoderParams::init(8, rng);
                      const Tensor w = randn({3, 8}, rng);
                      return std::pair<Fn, Tensor>([enc, w](const Tensor& x) { return probe(synth::encode(x, enc), w); },
                                                   randn({3, synth::kDescriptorDim}, rng));
                  }});

    // Losses.
    cs.push_back({"geo_feat_loss", [](Rng& rng) {
                      const Tensor t = randn({5, 6}, rng);
                      return std::pair<Fn, Tensor>([t](const Tensor& x) { return loss::geo_feat_loss(x, t); }, randn({5, 6}, rng));
                  }});
    cs.push_back({"lang_feat_loss", [](Rng& rng) {
                      const Tensor t = randn({5, 6}, rng);
                      return std::pair<Fn, Tensor>([t](const Tensor& x) { return loss::lang_feat_loss(x, t); }, randn({5, 6}, rng));
                  }});
    cs.push_back({"gram_loss", [](Rng& rng) {
                      const Tensor t = randn({5, 6}, rng);
                      return std::pair<Fn, Tensor>([t](const Tensor& x) { return loss::gram_loss(x, t); }, randn({5, 6}, rng));
                  }});
    cs.push_back({"structural_consistency", [](Rng& rng) {
                      const Tensor sl = randn({5, 6}, rng), tg = randn({5, 6}, rng), tl = randn({5, 6}, rng);
                      return std::pair<Fn, Tensor>(
                          [sl, tg, tl](const Tensor& x) { return loss::structural_consistency(x, nk::add(sl, x), tg, tl); },
                          randn({5, 6}, rng));
                  }});
    for (bool dual : {true, false}) {
        cs.push_back({dual ? "distill_loss" : "distill_loss(single teacher)", [dual](Rng& rng) {
                          const Tensor sl = randn({5, 6}, rng), tg = randn({5, 6}, rng), tl = randn({5, 6}, rng);
                          return std::pair<Fn, Tensor>(
                              [sl, tg, tl, dual](const Tensor& x) {
                                  return loss::distill_loss(x, nk::mul(sl, x), tg, tl, 0.5, dual).total;
                              },
                              randn({5, 6}, rng));
                      }});
    }
    cs.push_back({"metric_depth_loss", [](Rng& rng) {
                      std::uniform_real_distribution<double> u(0.5, 5.0);
                      std::vector<double> g(12);
                      for (auto& v : g) v = u(rng);
                      const DepthMap gt(3, 4, g, ScaleKind::metric);
                      return std::pair<Fn, Tensor>([gt](const Tensor& x) { return loss::metric_depth_loss(x, gt, 1.0, 1e-6); },
                                                   uniform({12, 1}, rng, 0.5, 5.0));
                  }});
    cs.push_back({"recon_task_loss(depth)", [](Rng& rng) {
                      std::uniform_real_distribution<double> u(0.5, 5.0);
                      std::vector<double> g(16);
                      for (auto& v : g) v = u(rng);
                      const DepthMap gt(4, 4, g, ScaleKind::metric);
                      const auto gc = recon::CameraTensors::constant(random_camera(rng));
                      const auto pc = recon::CameraTensors::constant(random_camera(rng));
                      return std::pair<Fn, Tensor>(
                          [gt, gc, pc](const Tensor& x) { return loss::recon_task_loss(pc, gc, x, gt).total; },
                          // Offsets of at least 0.1 keep every |pred - gt| term away from its kink.
                          Tensor::constant({16, 1}, [&] {
                              std::vector<double> v(g);
                              std::bernoulli_distribution s(0.5);
                              std::uniform_real_distribution<double> o(0.1, 0.4);
                              for (auto& e : v) e += s(rng) ? o(rng) : -o(rng);
                              return v;
                          }()));
                  }});
    cs.push_back({"recon_task_loss(camera)", [](Rng& rng) {
                      std::uniform_real_distribution<double> u(0.5, 5.0);
                      std::vector<double> g(16);
                      for (auto& v : g) v = u(rng);
                      const DepthMap gt(4, 4, g, ScaleKind::metric);
                      const Tensor pd = Tensor::constant({16, 1}, g);
                      const auto gc = recon::CameraTensors::constant(random_camera(rng));
                      const Tensor t = randn({1, 3}, rng), f = uniform({1, 2}, rng, 50.0, 200.0);
                      const double cx = gc.cx, cy = gc.cy;
                      return std::pair<Fn, Tensor>(
                          [gt, gc, pd, t, f, cx, cy](const Tensor& q) {
                              return loss::recon_task_loss(camera_tensors_from_quat(q, t, f, cx, cy), gc, pd, gt).total;
                          },
                          randn({1, 4}, rng));
                  }});
    cs.push_back({"vl_proxy_loss", [](Rng& rng) {
                      const auto head = nk::MlpParams::init(8, 8, 4, rng);
                      return std::pair<Fn, Tensor>(
                          [head](const Tensor& x) { return loss::vl_proxy_loss(x, {0, 1, 3, 2, 1}, head); }, randn({5, 8}, rng));
                  }});
    return cs;
}

} // namespace

std::vector<GradRow> gradient_suite(std::size_t points, std::uint64_t seed) {
    std::vector<GradRow> rows;
    Rng rng(seed);
    for (const auto& c : gradient_cases()) {
        GradRow row{c.name, 0, 0.0};
        for (std::size_t k = 0; k < points; ++k) {
            auto [f, x] = c.make(rng);
            row.max_error = std::max(row.max_error, nk::grad_check(f, x));
            ++row.points;
        }
        rows.push_back(row);
    }
    return rows;
}

CheckResult check_gradients(std::size_t points, double tol) {
    const auto rows = gradient_suite(points);
    CheckResult r{true, ""};
    const GradRow* worst = &rows.front();
    for (const auto& row : rows) {
        if (row.max_error > worst->max_error) worst = &row;
        if (!(row.max_error < tol) || row.points < points) r.pass = false;
    }
    r.detail = std::to_string(rows.size()) + " ops x " + std::to_string(points) + " points; worst " + worst->op +
               fmt(" %.3g", worst->max_error);
    return r;
}

CheckResult check_geometry(std::size_t cases) {
    Rng rng(11);
    std::uniform_real_distribution<double> pix(0.0, 100.0), dep(0.1, 10.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < cases; ++k) {
        const CameraModel cam = random_camera(rng);
        const double i = pix(rng), j = pix(rng), d = dep(rng);
        const auto pr = p3d::project(p3d::backproject(i, j, d, cam), cam);
        worst = std::max({worst, std::abs(pr.i - i), std::abs(pr.j - j), std::abs(pr.depth - d)});
    }

    const Intrinsics k{100, 100, 50, 50};
    const CameraModel ident(k, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), ScaleKind::metric);
    const CameraModel shifted(k, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1), ScaleKind::metric);
    Eigen::Matrix3d rz;
    rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const CameraModel rotated(k, rz, Eigen::Vector3d::Zero(), ScaleKind::metric);
    const bool hand = p3d::backproject(50, 50, 2, ident) == Eigen::Vector3d(0, 0, 2) &&
                      p3d::backproject(50, 50, 2, shifted) == Eigen::Vector3d(0, 0, 1) &&
                      p3d::backproject(150, 50, 1, rotated) == Eigen::Vector3d(0, -1, 1);

    // Rigid equivariance: moving the world by (Q, u) moves every anchor by (Q, u).
    double eq = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t h = 8, w = 8, patch = 4;
        std::vector<double> dv(h * w);
        std::uniform_real_distribution<double> dd(0.5, 4.0);
        for (auto& v : dv) v = dd(rng);
        const DepthMap depth(h, w, dv, ScaleKind::metric);
        Intrinsics ki{6.0, 6.0, 3.5, 3.5};
        const CameraModel cam(ki, random_rotation(rng), Eigen::Vector3d(dd(rng), -dd(rng), dd(rng)), ScaleKind::metric);
        const Eigen::Matrix3d q = random_rotation(rng);
        const Eigen::Vector3d u(dd(rng), dd(rng), -dd(rng));
        const Eigen::Matrix3d r2 = cam.rotation() * q.transpose();
        const CameraModel moved(ki, r2, cam.translation() - r2 * u, ScaleKind::metric);
        const auto mlp = nk::MlpParams::init(3, 8, 8, rng);
        const TokenSet lang(randn({4, 8}, rng), TokenRole::lang);
        const auto a = p3d::fuse_tokens(lang, depth, cam, mlp, patch);
        const auto b = p3d::fuse_tokens(lang, depth, moved, mlp, patch);
        for (std::size_t n = 0; n < a.anchor_points.size(); ++n) {
            eq = std::max(eq, (q * a.anchor_points[n] + u - b.anchor_points[n]).cwiseAbs().maxCoeff());
        }
    }
    CheckResult r;
    r.pass = worst < 1e-9 && hand && eq < 1e-9;
    r.detail = fmt("round-trip max err %.3g, ", worst) + (hand ? "hand cases exact, " : "hand cases MISMATCH, ") +
               fmt("rigid equivariance max err %.3g", eq);
    return r;
}

CheckResult check_scale_alignment() {
    synth::SceneOptions so;
    so.frames = 20;
    const synth::SceneSample scene = synth::gen_scene(2024, so);
    const double s_true = 3.7;
    std::vector<std::pair<DepthMap, DepthMap>> clean, corrupt;
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        const DepthMap& gt = scene.frames[f].depth;
        std::vector<double> rel = gt.values();
        for (auto& v : rel) v /= s_true;
        const DepthMap r(gt.height(), gt.width(), rel, ScaleKind::relative);
        clean.emplace_back(r, gt);
        std::vector<double> bad = gt.values();
        if (f == 3 || f == 11) {
            for (auto& v : bad) v *= 10.0;
        }
        corrupt.emplace_back(r, DepthMap(gt.height(), gt.width(), bad, ScaleKind::metric));
    }
    align::SceneScaleOptions opts;
    opts.seed = 5;
    const double exact = align::scene_scale(clean, opts).scene_factor;
    const double robust = align::scene_scale(corrupt, opts).scene_factor;
    const double exact_err = std::abs(exact - s_true) / s_true;
    const double robust_err = std::abs(robust - s_true) / s_true;

    // Scaling (depth, pose) then back-projecting equals scaling the back-projection.
    Rng rng(3);
    double comm = 0.0;
    std::uniform_real_distribution<double> sd(0.2, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const CameraModel cam = random_camera(rng, ScaleKind::relative);
        const DepthMap& gt = scene.frames[static_cast<std::size_t>(trial) % scene.frames.size()].depth;
        const DepthMap rel = gt.with_kind(ScaleKind::relative);
        const double s = sd(rng);
        const auto [md, mc] = align::apply_scale(s, rel, cam);
        const CameraModel unscaled = cam.with_kind(ScaleKind::metric);
        for (std::size_t y = 0; y < gt.height(); y += 5) {
            for (std::size_t x = 0; x < gt.width(); x += 5) {
                const Eigen::Vector3d a = p3d::backproject(double(x), double(y), md.at(y, x), mc);
                const Eigen::Vector3d b = s * p3d::backproject(double(x), double(y), rel.at(y, x), unscaled);
                comm = std::max(comm, (a - b).norm() / std::max(1.0, b.norm()));
            }
        }
    }
    CheckResult r;
    r.pass = exact_err < 1e-12 && robust_err < 0.01 && comm < 1e-12;
    r.detail = fmt("exact rel err %.3g, ", exact_err) + fmt("2/20 corrupted rel err %.3g, ", robust_err) +
               fmt("commutation max rel err %.3g", comm);
    return r;
}

CheckResult check_loss_identities() {
    Rng rng(17);
    const Tensor tg = randn({12, 16}, rng), tl = randn({12, 16}, rng);
    const double distill = loss::distill_loss(tg, tl, tg, tl, 0.5, true).total.item();

    std::uniform_real_distribution<double> u(0.3, 8.0);
    std::vector<double> g(64);
    for (auto& v : g) v = u(rng);
    const DepthMap gt(8, 8, g, ScaleKind::metric);
    const double md_same = loss::metric_depth_loss(gt, gt, 1.0, 1e-6);
    std::vector<double> ge(g);
    for (auto& v : ge) v *= std::exp(1.0);
    // The unit identity needs eps = 0: log(e g + eps) - log(g + eps) != 1 otherwise.
    const double md_e = loss::metric_depth_loss(DepthMap(8, 8, ge, ScaleKind::metric), gt, 1.0, 0.0);

    const DepthMap two_gt(1, 2, {1.5, 0.8}, ScaleKind::metric);
    const DepthMap two_pred(1, 2, {1.5, 3.2}, ScaleKind::metric);
    const double md_two = loss::metric_depth_loss(two_pred, two_gt, 1.0, 0.0);
    constexpr double kTwoPixelOracle = 0.7642163036277879; // (ln2)^2 + (ln2)^2 / (1 + ln2)

    const Tensor sg = randn({10, 16}, rng), sl = randn({10, 16}, rng), tg2 = randn({10, 16}, rng), tl2 = randn({10, 16}, rng);
    Eigen::MatrixXd qm = Eigen::MatrixXd::Random(16, 16);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(qm);
    const Eigen::MatrixXd q = qr.householderQ();
    std::vector<double> qv(256);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) qv[i * 16 + j] = q(i, j);
    const Tensor qt = Tensor::constant({16, 16}, qv);
    const double sc0 = loss::structural_consistency(sg, sl, tg2, tl2).item();
    const double sc1 = loss::structural_consistency(nk::matmul(sg, qt), nk::matmul(sl, qt), tg2, tl2).item();
    const double sc22 = loss::structural_consistency(Tensor::constant({2, 2}, {1, 0, 0, 1}), Tensor(),
                                                     Tensor::constant({2, 2}, {1, 0, 1, 0}), Tensor())
                            .item();

    CheckResult r;
    r.pass = distill == 0.0 && md_same == 0.0 && std::abs(md_e - 1.0) < 1e-12 && std::abs(md_two - kTwoPixelOracle) < 1e-9 &&
             std::abs(sc1 - sc0) < 1e-9 && sc22 == 0.5;
    r.detail = fmt("distill %.3g, ", distill) + fmt("L_MD(gt,gt) %.3g, ", md_same) + fmt("L_MD(e) - 1 = %.3g, ", md_e - 1.0) +
               fmt("two-pixel err %.3g, ", md_two - kTwoPixelOracle) + fmt("rotation drift %.3g, ", sc1 - sc0) +
               fmt("2x2 L_sc %.17g", sc22);
    return r;
}

CheckResult check_metric_bins(std::size_t pixels) {
    Rng rng(23);
    const auto cfg = metric::init_bins(64, 0.1, 10.0);
    const std::size_t n = cfg.count(), chunk = 5000;
    double worst_sum = 0.0, worst_bound = 0.0;
    std::size_t violations = 0, done = 0;
    while (done < pixels) {
        const std::size_t m = std::min(chunk, pixels - done);
        const auto mode = (done / chunk) % 2 == 0 ? metric::BinNormalization::ordinal : metric::BinNormalization::softmax;
        const Tensor probs = metric::bin_logits_to_probs(randn({m, n}, rng, 4.0), mode);
        const Tensor centers = metric::refine_centers_raw(cfg, randn({m, n}, rng, 3.0));
        const Tensor e = metric::expected_depth_tensor({probs, centers});
        const auto pd = probs.data(), cd = centers.data(), ed = e.data();
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t k = 0; k < n; ++k) {
                s += pd[i * n + k];
                lo = std::min(lo, cd[i * n + k]);
                hi = std::max(hi, cd[i * n + k]);
            }
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
            // Rounding slack: one ulp per accumulated bin.
            const double slack = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * hi;
            const double over = std::max(lo - ed[i], ed[i] - hi);
            worst_bound = std::max(worst_bound, over);
            if (over > slack) ++violations;
        }
        done += m;
    }

    Tensor feats = randn({100, 5}, rng);
    const auto zero = nk::MlpParams::zeros(5, 8, n);
    const Tensor refined = metric::refine_centers(cfg, feats, zero);
    bool exact = true;
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t k = 0; k < n; ++k) exact = exact && refined.at(i, k) == cfg.centers[k];

    CheckResult r;
    r.pass = worst_sum < 1e-10 && violations == 0 && exact;
    r.detail = fmt("simplex max |sum-1| %.3g, ", worst_sum) + std::to_string(violations) + " bound violations over " +
               std::to_string(pixels) + fmt(" pixels (worst excess %.3g), ", worst_bound) +
               (exact ? "zero refinement bit-exact" : "zero refinement NOT exact");
    return r;
}

namespace {

bool same(const eval::PoseBlock& a, const eval::PoseBlock& b) {
    return a.rra15 == b.rra15 && a.rta15 == b.rta15 && a.maa30 == b.maa30 && a.pairs == b.pairs && a.excluded == b.excluded;
}
bool same(const eval::DepthBlock& a, const eval::DepthBlock& b) {
    return a.abs_rel == b.abs_rel && a.rmse == b.rmse && a.log10 == b.log10 && a.delta1 == b.delta1;
}
bool same(const eval::ReconBlock& a, const eval::ReconBlock& b) {
    return a.acc == b.acc && a.comp == b.comp && a.prec == b.prec && a.recall == b.recall && a.fscore == b.fscore;
}

bool trivial_metric_cases() {
    bool ok = true;
    Rng rng(5);
    std::vector<CameraModel> cams;
    for (int i = 0; i < 5; ++i) cams.push_back(random_camera(rng));
    const auto p = eval::pose_metrics(cams, cams);
    ok = ok && p.rra15 == 100.0 && p.rta15 == 100.0 && p.maa30 == 100.0;

    // One pair, 20 degrees about the baseline axis, exact translation.
    const Intrinsics k{100, 100, 50, 50};
    const CameraModel c0(k, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), ScaleKind::metric);
    const CameraModel g1(k, Eigen::Matrix3d::Identity(), Eigen::Vector3d(1, 0, 0), ScaleKind::metric);
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(20.0 * 3.14159265358979323846 / 180.0, Eigen::Vector3d::UnitX()).toRotationMatrix();
    const CameraModel p1(k, rx, Eigen::Vector3d(1, 0, 0), ScaleKind::metric);
    const auto q = eval::pose_metrics({c0, p1}, {c0, g1});
    ok = ok && q.rra15 == 0.0 && q.rta15 == 100.0;

    std::vector<double> g(16);
    std::uniform_real_distribution<double> u(0.5, 5.0);
    for (auto& v : g) v = u(rng);
    const DepthMap gt(4, 4, g, ScaleKind::metric);
    auto scaled = [&](double f) {
        std::vector<double> v(g);
        for (auto& x : v) x *= f;
        return DepthMap(4, 4, v, ScaleKind::metric);
    };
    const auto d1 = eval::depth_metrics(gt, gt);
    ok = ok && d1.delta1 == 1.0 && d1.abs_rel == 0.0 && d1.rmse == 0.0 && d1.log10 == 0.0;
    const auto d2 = eval::depth_metrics(scaled(1.3), gt);
    ok = ok && std::abs(d2.abs_rel - 0.3) < 1e-12 && d2.delta1 == 0.0;
    ok = ok && std::abs(eval::depth_metrics(scaled(10.0), gt).log10 - 1.0) < 1e-12;

    p3d::PointCloud a, b;
    for (int i = 0; i < 50; ++i) a.points.push_back(Eigen::Vector3d::Random());
    const auto r1 = eval::pointcloud_metrics(a, a, 0.05);
    ok = ok && r1.acc == 0.0 && r1.comp == 0.0 && r1.prec == 1.0 && r1.recall == 1.0 && r1.fscore == 1.0;
    p3d::PointCloud one, other;
    one.points = {Eigen::Vector3d(0, 0, 0)};
    other.points = {Eigen::Vector3d(0.1, 0, 0)};
    const auto r2 = eval::pointcloud_metrics(one, other, 0.05);
    ok = ok && r2.prec == 0.0 && r2.recall == 0.0 && r2.fscore == 0.0 && r2.acc == 0.1 && r2.comp == 0.1;
    return ok;
}

} // namespace

CheckResult check_metric_oracles(std::size_t instances) {
    Rng rng(29);
    std::size_t pose_ok = 0, depth_ok = 0, cloud_ok = 0;
    std::uniform_int_distribution<int> ncam(2, 10), npts(1, 200), side(1, 8), nframes(1, 3);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t t = 0; t < instances; ++t) {
        // Poses: ground truth plus rotation / translation noise of random size.
        const int n = ncam(rng);
        const double rs = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
        std::vector<CameraModel> gt, pred;
        for (int i = 0; i < n; ++i) {
            const CameraModel g = random_camera(rng);
            const Eigen::Vector3d axis(noise(rng), noise(rng), noise(rng));
            const Eigen::Matrix3d dr = Eigen::AngleAxisd(rs * noise(rng), axis.normalized()).toRotationMatrix();
            const Eigen::Vector3d dt(rs * noise(rng), rs * noise(rng), rs * noise(rng));
            gt.push_back(g);
            pred.emplace_back(g.intrinsics(), dr * g.rotation(), g.translation() + dt, ScaleKind::metric);
        }
        if (t % 10 == 0) {
            // Identical identity-rotation cameras give an exactly zero relative translation.
            pred[0] = CameraModel(pred[0].intrinsics(), Eigen::Matrix3d::Identity(), pred[0].translation(), ScaleKind::metric);
            pred[1] = pred[0];
        }
        pose_ok += same(eval::pose_metrics(pred, gt), oracle::pose(pred, gt)) ? 1 : 0;

        const int f = nframes(rng), h = side(rng), w = side(rng);
        std::vector<DepthMap> pd, gd;
        std::uniform_real_distribution<double> u(0.2, 6.0);
        for (int k = 0; k < f; ++k) {
            std::vector<double> gv(h * w), pv(h * w);
            for (int i = 0; i < h * w; ++i) {
                gv[i] = u(rng);
                pv[i] = gv[i] * std::exp(0.3 * noise(rng));
                if (i % 7 == 3) pv[i] = 0.0; // invalid prediction pixel
            }
            gd.emplace_back(h, w, gv, ScaleKind::metric);
            pd.emplace_back(h, w, pv, ScaleKind::metric);
        }
        depth_ok += same(eval::depth_metrics(pd, gd), oracle::depth(pd, gd)) ? 1 : 0;

        p3d::PointCloud pc, gc;
        const int m = npts(rng);
        const double jitter = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
        for (int i = 0; i < m; ++i) {
            const Eigen::Vector3d p(u(rng), u(rng), u(rng));
            gc.points.push_back(p);
            if (i % 5 != 4) pc.points.push_back(p + jitter * Eigen::Vector3d(noise(rng), noise(rng), noise(rng)));
        }
        if (pc.points.empty()) pc.points.push_back(gc.points[0]);
        cloud_ok += same(eval::pointcloud_metrics(pc, gc, 0.05), oracle::pointcloud(pc.points, gc.points, 0.05)) ? 1 : 0;
    }
    const bool trivial = trivial_metric_cases();
    CheckResult r;
    r.pass = pose_ok == instances && depth_ok == instances && cloud_ok == instances && trivial;
    r.detail = "exact matches pose " + std::to_string(pose_ok) + "/" + std::to_string(instances) + ", depth " +
               std::to_string(depth_ok) + "/" + std::to_string(instances) + ", cloud " + std::to_string(cloud_ok) + "/" +
               std::to_string(instances) + (trivial ? "; trivial cases reproduce" : "; trivial cases FAIL");
    return r;
}

} // namespace geovid::checks
