// SPDX-License-Identifier: Apache-2.0
#include "geovid/harness/model.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <thread>

#include "geovid/errors.hpp"
#include "geovid/numkit/vlt1.hpp"

namespace geovid::harness {

namespace fs = std::filesystem;

Model Model::init(const RunConfig& cfg) {
    cfg.validate();
    const auto& mc = cfg.model;
    nk::Rng rng(cfg.seed);
    Model m;
    m.encoder = synth::EncoderParams::init(mc.dim, rng);
    m.cta = cta::CtaParams::init({mc.dim, mc.heads, mc.bridge_tokens, 4, false}, rng);
    m.backbone = recon::BackboneParams::init({mc.dim, mc.heads, mc.blocks, 1, mc.register_tokens, 4, true}, rng);
    const Intrinsics k = synth::intrinsics_for({mc.height, mc.width}, mc.fov_deg);
    m.camera = recon::CameraHeadParams::init(mc.dim, k.fx, rng);
    m.depth = recon::DepthHeadParams::init(mc.dim, mc.patch, rng);
    m.metric = metric::MetricDepthParams::init(mc.dim, mc.decoder_dim, mc.bins, rng);
    m.bins = metric::init_bins(mc.bins, mc.d_min, mc.d_max, mc.max_shift);
    m.pos_mlp = nk::MlpParams::init(3, mc.dim, mc.dim, rng);
    m.vl_head = nk::MlpParams::init(mc.dim, mc.dim, synth::kNumClasses, rng);
    return m;
}

nk::ParamList Model::stage1_params() const {
    nk::ParamList out;
    encoder.collect("encoder", out);
    cta.collect("cta", out);
    return out;
}

nk::ParamList Model::params() const {
    nk::ParamList out = stage1_params();
    backbone.collect("backbone", out);
    camera.collect("camera_head", out);
    depth.collect("depth_head", out);
    metric.collect("metric_head", out);
    pos_mlp.collect("pos_mlp", out);
    vl_head.collect("vl_head", out);
    return out;
}

void save_checkpoint(const fs::path& dir, const Model& m, const RunConfig& cfg) {
    fs::create_directories(dir / "params");
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& p : m.params()) {
        const std::string file = "params/" + p.name + ".vlt";
        nk::vlt1::save(dir / file, p.tensor);
        entries.push_back({{"name", p.name}, {"file", file}, {"shape", p.tensor.shape()}});
    }
    const nlohmann::json manifest = {{"format", "geovid-checkpoint-1"}, {"config", cfg.to_json()}, {"params", entries}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

namespace {

nlohmann::json read_manifest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("no checkpoint manifest in " + dir.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint manifest: " + std::string(e.what()));
    }
}

} // namespace

std::size_t load_params_into(const fs::path& dir, Model& m) {
    const nlohmann::json manifest = read_manifest(dir);
    std::map<std::string, std::string> files;
    for (const auto& e : manifest.at("params")) files[e.at("name").get<std::string>()] = e.at("file").get<std::string>();
    std::size_t loaded = 0;
    for (auto& p : m.params()) {
        const auto it = files.find(p.name);
        if (it == files.end()) continue;
        const auto raw = nk::vlt1::load(dir / it->second);
        if (raw.shape != p.tensor.shape()) {
            throw ShapeError("checkpoint tensor " + p.name + " has shape " + nk::shape_str(raw.shape) + ", model expects " +
                             nk::shape_str(p.tensor.shape()));
        }
        auto dst = p.tensor.mutable_data();
        std::copy(raw.data.begin(), raw.data.end(), dst.begin());
        ++loaded;
    }
    return loaded;
}

Model load_checkpoint(const fs::path& dir, RunConfig* cfg_out) {
    const RunConfig cfg = RunConfig::from_json(read_manifest(dir).at("config"));
    Model m = Model::init(cfg);
    const std::size_t n = load_params_into(dir, m);
    if (n != m.params().size()) throw IoError("checkpoint is missing parameters");
    if (cfg_out) *cfg_out = cfg;
    return m;
}

synth::SceneOptions scene_options(const RunConfig& cfg) {
    synth::SceneOptions o;
    o.frames = cfg.data.frames_per_scene;
    o.size = {cfg.model.height, cfg.model.width};
    o.patch = cfg.model.patch;
    o.objects = cfg.data.objects;
    o.teacher_dim = cfg.model.dim;
    o.noise = cfg.data.descriptor_noise;
    o.fov_deg = cfg.model.fov_deg;
    return o;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t train_scene_seed(std::uint64_t base, std::size_t index) { return splitmix64(base * 2 + (index << 20)); }

std::uint64_t heldout_scene_seed(std::uint64_t base, std::size_t index) {
    return splitmix64(base * 2 + 1 + (index << 20));
}

std::size_t worker_count() {
    if (const char* env = std::getenv("GEOVID_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace geovid::harness
