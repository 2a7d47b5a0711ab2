#include "evd/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace evd {

using nlohmann::json;

void DatasetConfig::validate() const {
    if (count < 1) throw ConfigError("dataset.count must be >= 1");
    if (t < 2) throw ConfigError("dataset.t must be >= 2");
    token_grid(t, h, w, patch);
    if (blob_h <= 0 || blob_w <= 0 || blob_h > h || blob_w > w) {
        throw ConfigError("dataset blob extent must fit the grid");
    }
    if (window_min < 1 || window_max < window_min || window_max > t - 1) {
        throw ConfigError("dataset window range invalid");
    }
    if (speed_max < 0) throw ConfigError("dataset.speed_max must be >= 0");
    if (noise_sigma < 0) throw ConfigError("dataset.noise_sigma must be >= 0");
    if (camera_drift_prob < 0 || camera_drift_prob > 1) {
        throw ConfigError("dataset.camera_drift_prob must lie in [0,1]");
    }
}

void SweepConfig::validate() const {
    if (steps.empty() || w_cfg.empty() || beta.empty() || bands.empty() || t_star.empty()) {
        throw ConfigError("sweep grid must not be empty in any dimension");
    }
    for (int k : steps)
        if (k < 1) throw ConfigError("sweep.steps entries must be >= 1");
    for (auto& [on, off] : bands)
        if (!(on > off)) throw ConfigError("sweep band entries need tau_on > tau_off");
}

void RunConfig::validate() const {
    static const std::vector<std::string> modes = {"train",  "sample", "ablate",
                                                   "sweep",  "audit",  "check"};
    if (std::find(modes.begin(), modes.end(), mode) == modes.end()) {
        throw ConfigError("mode must be one of train/sample/ablate/sweep/audit/check, got '" +
                          mode + "'");
    }
    const auto& ids = ablation_variant_ids();
    if (std::find(ids.begin(), ids.end(), variant) == ids.end()) {
        throw ConfigError("unknown variant id '" + variant + "'");
    }
    if (eval_scenes < 1) throw ConfigError("eval_scenes must be >= 1");
    dataset.validate();
    model.validate();
    train.validate();
    loss.validate();
    sampler.validate();
    pseudo.validate();
    sweep.validate();
    if (model.t != dataset.t || model.h != dataset.h || model.w != dataset.w ||
        model.c != dataset.c) {
        throw ConfigError("model latent shape must match dataset shape");
    }
}

namespace {

template <typename T>
void opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

PatchSpec patch_from(const json& j, const char* key, PatchSpec fallback) {
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    return PatchSpec{a.at(0), a.at(1), a.at(2)};
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    opt(j, "mode", cfg.mode);
    opt(j, "out_dir", cfg.out_dir);
    opt(j, "checkpoint", cfg.checkpoint);
    opt(j, "seed", cfg.seed);
    opt(j, "variant", cfg.variant);
    opt(j, "eval_scenes", cfg.eval_scenes);

    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        opt(d, "path", cfg.dataset.path);
        opt(d, "count", cfg.dataset.count);
        opt(d, "t", cfg.dataset.t);
        opt(d, "h", cfg.dataset.h);
        opt(d, "w", cfg.dataset.w);
        opt(d, "c", cfg.dataset.c);
        cfg.dataset.patch = patch_from(d, "patch", cfg.dataset.patch);
        opt(d, "blob_h", cfg.dataset.blob_h);
        opt(d, "blob_w", cfg.dataset.blob_w);
        opt(d, "blob_value", cfg.dataset.blob_value);
        opt(d, "window_min", cfg.dataset.window_min);
        opt(d, "window_max", cfg.dataset.window_max);
        opt(d, "speed_max", cfg.dataset.speed_max);
        opt(d, "noise_sigma", cfg.dataset.noise_sigma);
        opt(d, "camera_drift_prob", cfg.dataset.camera_drift_prob);
        opt(d, "camera_drift_step", cfg.dataset.camera_drift_step);
        opt(d, "seed", cfg.dataset.seed);
        opt(d, "export_scenes", cfg.dataset.export_scenes);
    }

    cfg.model.t = cfg.dataset.t;
    cfg.model.h = cfg.dataset.h;
    cfg.model.w = cfg.dataset.w;
    cfg.model.c = cfg.dataset.c;
    cfg.model.patch = cfg.dataset.patch;
    if (j.contains("model")) {
        const json& m = j["model"];
        opt(m, "width", cfg.model.width);
        opt(m, "layers", cfg.model.layers);
        opt(m, "heads", cfg.model.heads);
        opt(m, "cond_dim", cfg.model.cond_dim);
        opt(m, "mlp_ratio", cfg.model.mlp_ratio);
        opt(m, "head_hidden", cfg.head.hidden);
    }
    cfg.head.feature_dim = cfg.model.width;
    cfg.head.time_dim = cfg.model.width;

    if (j.contains("train")) {
        const json& t = j["train"];
        opt(t, "steps", cfg.train.steps);
        opt(t, "batch_size", cfg.train.batch_size);
        opt(t, "lr_backbone", cfg.train.lr_backbone);
        opt(t, "lr_event", cfg.train.lr_event);
        opt(t, "adam_beta1", cfg.train.adam_beta1);
        opt(t, "adam_beta2", cfg.train.adam_beta2);
        opt(t, "weight_decay", cfg.train.weight_decay);
        opt(t, "grad_clip", cfg.train.grad_clip);
        opt(t, "ema_decay", cfg.train.ema_decay);
        opt(t, "seed", cfg.train.seed);
    }

    if (j.contains("loss")) {
        const json& l = j["loss"];
        opt(l, "lambda_real", cfg.loss.lambda_real);
        opt(l, "lambda_cons", cfg.loss.lambda_cons);
        opt(l, "lambda_order", cfg.loss.lambda_order);
        opt(l, "t_star_loss", cfg.loss.time_weight.t_star_loss);
        opt(l, "kappa", cfg.loss.time_weight.kappa);
        opt(l, "delta_jitter", cfg.loss.delta_jitter);
        opt(l, "p_event_dropout", cfg.loss.p_event_dropout);
        opt(l, "tau_on", cfg.loss.tau_on);
        opt(l, "tau_off", cfg.loss.tau_off);
        opt(l, "use_smoothed_activity", cfg.loss.use_smoothed_activity_in_losses);
        opt(l, "event_pathway_enabled", cfg.loss.event_pathway_enabled);
    }

    if (j.contains("sampler")) {
        const json& s = j["sampler"];
        opt(s, "steps", cfg.sampler.steps);
        opt(s, "w_cfg", cfg.sampler.w_cfg);
        opt(s, "gating_enabled", cfg.sampler.gating_enabled);
        if (s.contains("solver")) {
            const std::string v = s["solver"];
            if (v == "euler") {
                cfg.sampler.solver = SamplerConfig::Solver::euler;
            } else if (v == "heun") {
                cfg.sampler.solver = SamplerConfig::Solver::heun;
            } else {
                throw ConfigError("sampler.solver must be euler or heun, got '" + v + "'");
            }
        }
        if (s.contains("schedule_mode")) {
            const std::string v = s["schedule_mode"];
            if (v == "anneal") {
                cfg.sampler.schedule_mode = SamplerConfig::ScheduleMode::anneal;
            } else if (v == "const") {
                cfg.sampler.schedule_mode = SamplerConfig::ScheduleMode::constant;
            } else if (v == "off") {
                cfg.sampler.schedule_mode = SamplerConfig::ScheduleMode::off;
            } else {
                throw ConfigError("sampler.schedule_mode must be anneal/const/off, got '" + v +
                                  "'");
            }
        }
        opt(s, "schedule_const", cfg.sampler.schedule_const);
        if (s.contains("event_branch")) {
            const std::string v = s["event_branch"];
            if (v == "conditional") {
                cfg.sampler.event_branch = SamplerConfig::EventBranch::conditional;
            } else if (v == "unconditional") {
                cfg.sampler.event_branch = SamplerConfig::EventBranch::unconditional;
            } else {
                throw ConfigError("sampler.event_branch must be conditional or unconditional");
            }
        }
        if (s.contains("gate")) {
            const json& g = s["gate"];
            opt(g, "beta", cfg.sampler.gate.beta);
            opt(g, "tau_on", cfg.sampler.gate.tau_on);
            opt(g, "tau_off", cfg.sampler.gate.tau_off);
            opt(g, "t_star", cfg.sampler.gate.t_star);
            opt(g, "smoothing_enabled", cfg.sampler.gate.smoothing_enabled);
            if (g.contains("combine")) {
                const std::string v = g["combine"];
                if (v == "product") {
                    cfg.sampler.gate.combine = GateConfig::Combine::product;
                } else if (v == "binary_only") {
                    cfg.sampler.gate.combine = GateConfig::Combine::binary_only;
                } else {
                    throw ConfigError("gate.combine must be product or binary_only");
                }
            }
        }
        if (s.contains("custom_grid")) {
            cfg.sampler.custom_grid = s["custom_grid"].get<std::vector<double>>();
        }
    }

    if (j.contains("pseudo")) {
        const json& p = j["pseudo"];
        opt(p, "softness", cfg.pseudo.softness);
        if (p.contains("mu_mode")) {
            const std::string v = p["mu_mode"];
            if (v == "median") {
                cfg.pseudo.mu_mode = PseudoTargetConfig::MuMode::median;
            } else if (v == "fixed") {
                cfg.pseudo.mu_mode = PseudoTargetConfig::MuMode::fixed;
            } else {
                throw ConfigError("pseudo.mu_mode must be median or fixed");
            }
        }
        opt(p, "mu_fixed", cfg.pseudo.mu_fixed);
        opt(p, "tau_a", cfg.pseudo.tau_a);
        opt(p, "entropy_threshold", cfg.pseudo.entropy_threshold);
        opt(p, "epsilon", cfg.pseudo.epsilon);
        opt(p, "use_camera_suppressed", cfg.pseudo.use_camera_suppressed);
    }
    cfg.sampler.motion_mask = cfg.pseudo;

    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        opt(s, "steps", cfg.sweep.steps);
        opt(s, "w_cfg", cfg.sweep.w_cfg);
        opt(s, "beta", cfg.sweep.beta);
        opt(s, "t_star", cfg.sweep.t_star);
        if (s.contains("bands")) {
            cfg.sweep.bands.clear();
            for (const auto& b : s["bands"]) {
                cfg.sweep.bands.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
            }
        }
    }

    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["mode"] = cfg.mode;
    j["out_dir"] = cfg.out_dir;
    j["checkpoint"] = cfg.checkpoint;
    j["seed"] = cfg.seed;
    j["variant"] = cfg.variant;
    j["eval_scenes"] = cfg.eval_scenes;
    j["dataset"] = {{"path", cfg.dataset.path},
                    {"count", cfg.dataset.count},
                    {"t", cfg.dataset.t},
                    {"h", cfg.dataset.h},
                    {"w", cfg.dataset.w},
                    {"c", cfg.dataset.c},
                    {"patch", {cfg.dataset.patch.p_t, cfg.dataset.patch.p_h, cfg.dataset.patch.p_w}},
                    {"blob_h", cfg.dataset.blob_h},
                    {"blob_w", cfg.dataset.blob_w},
                    {"blob_value", cfg.dataset.blob_value},
                    {"window_min", cfg.dataset.window_min},
                    {"window_max", cfg.dataset.window_max},
                    {"speed_max", cfg.dataset.speed_max},
                    {"noise_sigma", cfg.dataset.noise_sigma},
                    {"camera_drift_prob", cfg.dataset.camera_drift_prob},
                    {"camera_drift_step", cfg.dataset.camera_drift_step},
                    {"seed", cfg.dataset.seed},
                    {"export_scenes", cfg.dataset.export_scenes}};
    j["model"] = {{"width", cfg.model.width},
                  {"layers", cfg.model.layers},
                  {"heads", cfg.model.heads},
                  {"cond_dim", cfg.model.cond_dim},
                  {"mlp_ratio", cfg.model.mlp_ratio},
                  {"head_hidden", cfg.head.hidden}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"batch_size", cfg.train.batch_size},
                  {"lr_backbone", cfg.train.lr_backbone},
                  {"lr_event", cfg.train.lr_event},
                  {"adam_beta1", cfg.train.adam_beta1},
                  {"adam_beta2", cfg.train.adam_beta2},
                  {"weight_decay", cfg.train.weight_decay},
                  {"grad_clip", cfg.train.grad_clip},
                  {"ema_decay", cfg.train.ema_decay},
                  {"seed", cfg.train.seed}};
    j["loss"] = {{"lambda_real", cfg.loss.lambda_real},
                 {"lambda_cons", cfg.loss.lambda_cons},
                 {"lambda_order", cfg.loss.lambda_order},
                 {"t_star_loss", cfg.loss.time_weight.t_star_loss},
                 {"kappa", cfg.loss.time_weight.kappa},
                 {"delta_jitter", cfg.loss.delta_jitter},
                 {"p_event_dropout", cfg.loss.p_event_dropout},
                 {"tau_on", cfg.loss.tau_on},
                 {"tau_off", cfg.loss.tau_off},
                 {"use_smoothed_activity", cfg.loss.use_smoothed_activity_in_losses},
                 {"event_pathway_enabled", cfg.loss.event_pathway_enabled}};
    j["sampler"] = {
        {"steps", cfg.sampler.steps},
        {"w_cfg", cfg.sampler.w_cfg},
        {"solver", cfg.sampler.solver == SamplerConfig::Solver::euler ? "euler" : "heun"},
        {"gating_enabled", cfg.sampler.gating_enabled},
        {"schedule_mode", cfg.sampler.schedule_mode == SamplerConfig::ScheduleMode::anneal
                              ? "anneal"
                              : (cfg.sampler.schedule_mode == SamplerConfig::ScheduleMode::constant
                                     ? "const"
                                     : "off")},
        {"schedule_const", cfg.sampler.schedule_const},
        {"event_branch", cfg.sampler.event_branch == SamplerConfig::EventBranch::conditional
                             ? "conditional"
                             : "unconditional"},
        {"gate",
         {{"beta", cfg.sampler.gate.beta},
          {"tau_on", cfg.sampler.gate.tau_on},
          {"tau_off", cfg.sampler.gate.tau_off},
          {"t_star", cfg.sampler.gate.t_star},
          {"smoothing_enabled", cfg.sampler.gate.smoothing_enabled},
          {"combine", cfg.sampler.gate.combine == GateConfig::Combine::product ? "product"
                                                                               : "binary_only"}}}};
    j["pseudo"] = {{"softness", cfg.pseudo.softness},
                   {"mu_mode",
                    cfg.pseudo.mu_mode == PseudoTargetConfig::MuMode::median ? "median" : "fixed"},
                   {"mu_fixed", cfg.pseudo.mu_fixed},
                   {"tau_a", cfg.pseudo.tau_a},
                   {"entropy_threshold", cfg.pseudo.entropy_threshold},
                   {"epsilon", cfg.pseudo.epsilon},
                   {"use_camera_suppressed", cfg.pseudo.use_camera_suppressed}};
    json bands = json::array();
    for (auto& [on, off] : cfg.sweep.bands) bands.push_back({on, off});
    j["sweep"] = {{"steps", cfg.sweep.steps},
                  {"w_cfg", cfg.sweep.w_cfg},
                  {"beta", cfg.sweep.beta},
                  {"bands", bands},
                  {"t_star", cfg.sweep.t_star}};
    return j.dump(2);
}

int worker_threads() {
    if (const char* env = std::getenv("EVD_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace evd
