// SPDX-License-Identifier: Apache-2.0
#include "geovid/harness/config.hpp"

#include <fstream>
#include <set>

#include "geovid/errors.hpp"

namespace geovid::harness {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::two_stage_dual: return "two_stage_dual";
    case Strategy::two_stage_single_teacher: return "two_stage_single_teacher";
    case Strategy::single_stage: return "single_stage";
    case Strategy::no_sc_loss: return "no_sc_loss";
    }
    return "unknown";
}

Strategy strategy_from_string(std::string_view s) {
    for (Strategy v : {Strategy::two_stage_dual, Strategy::two_stage_single_teacher, Strategy::single_stage,
                       Strategy::no_sc_loss}) {
        if (to_string(v) == s) return v;
    }
    throw ParameterError("unknown strategy '" + std::string(s) + "'");
}

std::string_view to_string(MdMode m) {
    switch (m) {
    case MdMode::off: return "off";
    case MdMode::no_alignment: return "no_alignment";
    case MdMode::full: return "full";
    }
    return "unknown";
}

MdMode md_mode_from_string(std::string_view s) {
    for (MdMode v : {MdMode::off, MdMode::no_alignment, MdMode::full}) {
        if (to_string(v) == s) return v;
    }
    throw ParameterError("unknown metric-depth mode '" + std::string(s) + "'");
}

namespace {

using nlohmann::json;

json schedule_json(const StageSchedule& s) {
    return {{"steps", s.steps}, {"scenes_per_step", s.scenes_per_step}, {"frames_per_scene", s.frames_per_scene}, {"lr", s.lr}};
}

// Reads known keys into the target; anything else is a configuration error.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ParameterError(where_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ParameterError(where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ParameterError("unknown config key " + where_ + "." + k);
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_schedule(const json& j, const std::string& where, StageSchedule& s) {
    Reader r(j, where);
    r.get("steps", s.steps);
    r.get("scenes_per_step", s.scenes_per_step);
    r.get("frames_per_scene", s.frames_per_scene);
    r.get("lr", s.lr);
    r.finish();
}

} // namespace

json RunConfig::to_json() const {
    const auto& m = model;
    return {
        {"seed", seed},
        {"model",
         {{"dim", m.dim}, {"heads", m.heads}, {"blocks", m.blocks}, {"register_tokens", m.register_tokens},
          {"bridge_tokens", m.bridge_tokens}, {"decoder_dim", m.decoder_dim}, {"bins", m.bins}, {"d_min", m.d_min},
          {"d_max", m.d_max}, {"max_shift", m.max_shift},
          {"bin_norm", m.bin_norm == metric::BinNormalization::ordinal ? "ordinal" : "softmax"},
          {"height", m.height}, {"width", m.width}, {"patch", m.patch}, {"fov_deg", m.fov_deg}}},
        {"data",
         {{"train_scenes", data.train_scenes}, {"heldout_scenes", data.heldout_scenes},
          {"frames_per_scene", data.frames_per_scene}, {"objects", data.objects},
          {"descriptor_noise", data.descriptor_noise}, {"token_jitter", data.token_jitter}}},
        {"lambda", lambda},
        {"alpha", alpha},
        {"md_eps", md_eps},
        {"optim",
         {{"beta1", optim.beta1}, {"beta2", optim.beta2}, {"eps", optim.eps}, {"weight_decay", optim.weight_decay},
          {"clip_norm", optim.clip_norm}}},
        {"stage1", schedule_json(stage1)},
        {"stage2", schedule_json(stage2)},
        {"stage2_encoder_lr_scale", stage2_encoder_lr_scale},
        {"strategy", std::string(to_string(strategy))},
        {"md_mode", std::string(to_string(md_mode))},
        {"align_samples", align_samples},
        {"align_weights", align_weights == align::WeightMode::uniform ? "uniform" : "inverse_metric"},
        {"tau", tau},
        {"log_wall_time", log_wall_time},
    };
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    Reader r(j, "config");
    r.get("seed", c.seed);
    if (const json* mj = r.child("model")) {
        Reader m(*mj, "model");
        auto& mc = c.model;
        m.get("dim", mc.dim);
        m.get("heads", mc.heads);
        m.get("blocks", mc.blocks);
        m.get("register_tokens", mc.register_tokens);
        m.get("bridge_tokens", mc.bridge_tokens);
        m.get("decoder_dim", mc.decoder_dim);
        m.get("bins", mc.bins);
        m.get("d_min", mc.d_min);
        m.get("d_max", mc.d_max);
        m.get("max_shift", mc.max_shift);
        std::string norm = "ordinal";
        m.get("bin_norm", norm);
        if (norm == "ordinal") {
            mc.bin_norm = metric::BinNormalization::ordinal;
        } else if (norm == "softmax") {
            mc.bin_norm = metric::BinNormalization::softmax;
        } else {
            throw ParameterError("model.bin_norm must be 'ordinal' or 'softmax'");
        }
        m.get("height", mc.height);
        m.get("width", mc.width);
        m.get("patch", mc.patch);
        m.get("fov_deg", mc.fov_deg);
        m.finish();
    }
    if (const json* dj = r.child("data")) {
        Reader d(*dj, "data");
        d.get("train_scenes", c.data.train_scenes);
        d.get("heldout_scenes", c.data.heldout_scenes);
        d.get("frames_per_scene", c.data.frames_per_scene);
        d.get("objects", c.data.objects);
        d.get("descriptor_noise", c.data.descriptor_noise);
        d.get("token_jitter", c.data.token_jitter);
        d.finish();
    }
    r.get("lambda", c.lambda);
    r.get("alpha", c.alpha);
    r.get("md_eps", c.md_eps);
    if (const json* oj = r.child("optim")) {
        Reader o(*oj, "optim");
        o.get("beta1", c.optim.beta1);
        o.get("beta2", c.optim.beta2);
        o.get("eps", c.optim.eps);
        o.get("weight_decay", c.optim.weight_decay);
        o.get("clip_norm", c.optim.clip_norm);
        o.finish();
    }
    if (const json* s = r.child("stage1")) read_schedule(*s, "stage1", c.stage1);
    if (const json* s = r.child("stage2")) read_schedule(*s, "stage2", c.stage2);
    r.get("stage2_encoder_lr_scale", c.stage2_encoder_lr_scale);
    std::string strategy = std::string(to_string(c.strategy));
    r.get("strategy", strategy);
    c.strategy = strategy_from_string(strategy);
    std::string md = std::string(to_string(c.md_mode));
    r.get("md_mode", md);
    c.md_mode = md_mode_from_string(md);
    r.get("align_samples", c.align_samples);
    std::string weights = "inverse_metric";
    r.get("align_weights", weights);
    if (weights == "inverse_metric") {
        c.align_weights = align::WeightMode::inverse_metric;
    } else if (weights == "uniform") {
        c.align_weights = align::WeightMode::uniform;
    } else {
        throw ParameterError("align_weights must be 'inverse_metric' or 'uniform'");
    }
    r.get("tau", c.tau);
    r.get("log_wall_time", c.log_wall_time);
    r.finish();
    c.validate();
    return c;
}

void RunConfig::validate() const {
    const auto& m = model;
    if (m.dim == 0 || m.heads == 0 || m.dim % m.heads != 0) throw ParameterError("model.heads must divide model.dim");
    if (m.blocks < 2 || m.blocks % 2 != 0) throw ParameterError("model.blocks must be even and >= 2");
    if (m.register_tokens == 0) throw ParameterError("model.register_tokens must be >= 1");
    if (m.decoder_dim == 0 || m.bins < 2) throw ParameterError("metric head needs decoder_dim >= 1 and bins >= 2");
    if (!(m.d_min > 0 && m.d_max > m.d_min)) throw ParameterError("need 0 < d_min < d_max");
    if (!(m.max_shift >= 0 && m.max_shift < 0.5)) throw ParameterError("max_shift must lie in [0, 0.5)");
    if (m.patch == 0 || m.height % m.patch != 0 || m.width % m.patch != 0) {
        throw ParameterError("image extents must be multiples of the patch size");
    }
    if (data.train_scenes == 0 || data.heldout_scenes == 0) throw ParameterError("scene counts must be positive");
    if (data.frames_per_scene < 2 || data.objects == 0) throw ParameterError("scenes need >= 2 frames and >= 1 object");
    if (!(lambda >= 0)) throw ParameterError("lambda must be >= 0");
    if (!(alpha > 0)) throw ParameterError("alpha must be > 0");
    if (!(md_eps >= 0)) throw ParameterError("md_eps must be >= 0");
    for (const StageSchedule* s : {&stage1, &stage2}) {
        if (s->scenes_per_step == 0 || s->frames_per_scene == 0) throw ParameterError("batch sizes must be positive");
        if (s->frames_per_scene > data.frames_per_scene) throw ParameterError("frames_per_scene exceeds the scene length");
        if (!(s->lr >= 0)) throw ParameterError("learning rates must be >= 0");
    }
    if (!(stage2_encoder_lr_scale >= 0)) throw ParameterError("stage2_encoder_lr_scale must be >= 0");
    if (align_samples == 0) throw ParameterError("align_samples must be positive");
    if (!(tau > 0)) throw ParameterError("tau must be positive");
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError("config " + path + ": " + e.what());
    }
    return RunConfig::from_json(j);
}

} // namespace geovid::harness
