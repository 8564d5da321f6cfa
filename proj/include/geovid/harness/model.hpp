// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "geovid/cta.hpp"
#include "geovid/harness/config.hpp"
#include "geovid/metric_depth.hpp"
#include "geovid/recon_heads.hpp"
#include "geovid/synthscene.hpp"

namespace geovid::harness {

struct Model {
    synth::EncoderParams encoder;
    cta::CtaParams cta;
    recon::BackboneParams backbone;
    recon::CameraHeadParams camera;
    recon::DepthHeadParams depth;
    metric::MetricDepthParams metric;
    metric::BinConfig bins;
    nk::MlpParams pos_mlp; ///< 3 -> C -> C
    nk::MlpParams vl_head; ///< C -> C -> classes

    static Model init(const RunConfig& cfg);
    nk::ParamList params() const;
    /// Encoder and adapter only.
    nk::ParamList stage1_params() const;
};

/// manifest.json + one VLT1 file per parameter.
void save_checkpoint(const std::filesystem::path& dir, const Model& m, const RunConfig& cfg);
/// Rebuilds the model from the stored config, then loads every stored tensor.
Model load_checkpoint(const std::filesystem::path& dir, RunConfig* cfg_out = nullptr);
/// Copies stored tensors into `m` by name; returns how many were loaded.
std::size_t load_params_into(const std::filesystem::path& dir, Model& m);

synth::SceneOptions scene_options(const RunConfig& cfg);
std::uint64_t train_scene_seed(std::uint64_t base, std::size_t index);
std::uint64_t heldout_scene_seed(std::uint64_t base, std::size_t index);

/// Worker count: GEOVID_THREADS if set, else the hardware concurrency.
std::size_t worker_count();
/// Runs fn(i) for i in [0, n) on up to worker_count() threads; rethrows the
/// first failure by index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace geovid::harness
