#include "evd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "evd/pseudo_events.hpp"

namespace evd {

namespace fs = std::filesystem;
using nlohmann::json;

Conditioning scene_conditioning(const SceneParams& p, int dim) {
    Conditioning y;
    y.embedding.assign(dim, 0.0);
    const double feats[8] = {
        static_cast<double>(p.row0) / p.h,    static_cast<double>(p.col0) / p.w,
        static_cast<double>(p.vel_r) / 3.0,   static_cast<double>(p.vel_c) / 3.0,
        static_cast<double>(p.tau_e) / p.t,   static_cast<double>(p.tau_s) / p.t,
        p.blob_value / 4.0,                   static_cast<double>(p.blob_h) / p.h};
    for (int i = 0; i < dim && i < 8; ++i) y.embedding[i] = feats[i];
    return y;
}

namespace {

ContactScene random_scene(const DatasetConfig& cfg, Rng& rng, uint64_t noise_seed) {
    SceneParams p;
    p.t = cfg.t;
    p.h = cfg.h;
    p.w = cfg.w;
    p.c = cfg.c;
    p.patch = cfg.patch;
    p.blob_h = cfg.blob_h;
    p.blob_w = cfg.blob_w;
    p.noise_sigma = cfg.noise_sigma;
    p.noise_seed = noise_seed;

    const bool move_rows = rng.uniform() < 0.5;
    const int sign = rng.uniform() < 0.5 ? 1 : -1;
    const int limit = move_rows ? cfg.h - cfg.blob_h : cfg.w - cfg.blob_w;

    int duration = cfg.window_min +
                   static_cast<int>(rng.uniform() * (cfg.window_max - cfg.window_min + 1));
    int speed = cfg.speed_max > 0 ? std::min(cfg.speed_max, limit / std::max(1, duration)) : 0;
    if (cfg.speed_max >= 1 && speed == 0) {
        duration = std::max(1, std::min(duration, limit));
        speed = 1;
    }

    // keep at least one full pre slice and one full post slice
    const int tau_e_lo = std::max(1, cfg.patch.p_t);
    const int tau_e_hi = cfg.t - duration - std::max(1, cfg.patch.p_t);
    p.tau_e = tau_e_lo +
              static_cast<int>(rng.uniform() * std::max(1, tau_e_hi - tau_e_lo + 1));
    p.tau_e = std::min(p.tau_e, std::max(tau_e_lo, tau_e_hi));
    p.tau_s = p.tau_e + duration;

    const int travel = speed * duration;
    const int lo = sign > 0 ? 0 : travel;
    const int hi = sign > 0 ? limit - travel : limit;
    const int start = lo + static_cast<int>(rng.uniform() * std::max(1, hi - lo + 1));
    const int other_limit = move_rows ? cfg.w - cfg.blob_w : cfg.h - cfg.blob_h;
    const int other = static_cast<int>(rng.uniform() * (other_limit + 1));

    if (move_rows) {
        p.row0 = start;
        p.col0 = std::min(other, other_limit);
        p.vel_r = sign * speed;
        p.vel_c = 0;
    } else {
        p.col0 = start;
        p.row0 = std::min(other, other_limit);
        p.vel_c = sign * speed;
        p.vel_r = 0;
    }
    p.blob_value = (rng.uniform() < 0.5 ? 1.0 : -1.0) * cfg.blob_value;

    if (cfg.camera_drift_prob > 0.0 && rng.uniform() < cfg.camera_drift_prob) {
        p.camera_drift.assign(cfg.t, 0.0);
        double off = 0.0;
        for (int tau = 0; tau < cfg.t; ++tau) {
            off += cfg.camera_drift_step * (rng.uniform() < 0.5 ? 1.0 : -1.0);
            p.camera_drift[tau] = off;
        }
    }
    return make_contact_scene(p);
}

std::vector<ContactScene> dataset_from_seed(const DatasetConfig& cfg, uint64_t seed, int count) {
    std::vector<ContactScene> scenes;
    scenes.reserve(count);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        scenes.push_back(random_scene(cfg, rng, Rng::split(seed, 1000 + i)));
    }
    return scenes;
}

std::vector<ContactScene> load_dataset_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".evdscene") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IoError("no .evdscene files in " + dir);
    std::vector<ContactScene> scenes;
    scenes.reserve(paths.size());
    for (const auto& p : paths) scenes.push_back(load_scene(p));
    return scenes;
}

void write_manifest(const std::string& dir, const RunConfig& cfg, const json& extra) {
    json m;
    m["config"] = json::parse(run_config_json(cfg));
    m["seed"] = cfg.seed;
    m["version"] = kVersionString;
    for (auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir);
    out << m.dump(2) << "\n";
}

}  // namespace

std::vector<ContactScene> generate_dataset(const DatasetConfig& cfg) {
    cfg.validate();
    if (!cfg.path.empty()) return load_dataset_dir(cfg.path);
    return dataset_from_seed(cfg, cfg.seed, cfg.count);
}

std::vector<ContactScene> heldout_dataset(const DatasetConfig& cfg, int count) {
    cfg.validate();
    return dataset_from_seed(cfg, Rng::split(cfg.seed, 0xE7A1), count);
}

VariantPlan variant_plan(const std::string& id, const RunConfig& base) {
    const auto& ids = ablation_variant_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        throw ConfigError("unknown variant id '" + id + "'");
    }
    VariantPlan plan;
    plan.id = id;
    plan.loss = base.loss;
    plan.sampler = base.sampler;
    plan.sampler.gating_enabled = true;
    plan.sampler.schedule_mode = SamplerConfig::ScheduleMode::anneal;
    plan.sampler.activity_source = SamplerConfig::ActivitySource::event_head;
    plan.checkpoint_id = "full";

    if (id == "full") {
        // defaults
    } else if (id == "no_real") {
        plan.checkpoint_id = "no_real";
        plan.loss.lambda_real = 0.0;
    } else if (id == "no_cons") {
        plan.checkpoint_id = "no_cons";
        plan.loss.lambda_cons = 0.0;
    } else if (id == "train_only") {
        // full training, rho forced to 0 so the scheduled gate is all-ones
        plan.sampler.schedule_mode = SamplerConfig::ScheduleMode::constant;
        plan.sampler.schedule_const = 0.0;
    } else if (id == "infer_only") {
        plan.checkpoint_id = "baseline";
    } else if (id == "no_gate_at_inf") {
        plan.sampler.gating_enabled = false;
    } else if (id == "const_gate_1.0") {
        plan.sampler.schedule_mode = SamplerConfig::ScheduleMode::constant;
        plan.sampler.schedule_const = 1.0;
    } else if (id == "const_gate_0.5") {
        plan.sampler.schedule_mode = SamplerConfig::ScheduleMode::constant;
        plan.sampler.schedule_const = 0.5;
    } else if (id == "motion_mask_inf") {
        plan.checkpoint_id = "baseline";
        plan.sampler.activity_source = SamplerConfig::ActivitySource::motion_mask;
    } else if (id == "baseline") {
        plan.checkpoint_id = "baseline";
        plan.sampler.gating_enabled = false;
    }

    if (plan.checkpoint_id == "baseline") {
        plan.loss.lambda_real = 0.0;
        plan.loss.lambda_cons = 0.0;
        plan.loss.lambda_order = 0.0;
        plan.loss.event_pathway_enabled = false;
    }
    return plan;
}

TrainRunResult train_in_memory(const RunConfig& cfg, const LossConfig& loss,
                               const std::vector<ContactScene>& scenes, MicroDiT& model,
                               EventHead& head, JsonlWriter* log, EmaState* ema_out) {
    init_zero_impact(model, head, cfg.train.seed);
    Trainer trainer(model, head, loss, cfg.train);

    std::vector<Conditioning> conds;
    conds.reserve(scenes.size());
    for (const auto& s : scenes) conds.push_back(scene_conditioning(s.params, cfg.model.cond_dim));

    TrainRunResult res;
    const int B = cfg.train.batch_size;
    for (int step = 0; step < cfg.train.steps; ++step) {
        std::vector<TrainSample> batch;
        batch.reserve(B);
        for (int b = 0; b < B; ++b) {
            const std::size_t idx = (static_cast<std::size_t>(step) * B + b) % scenes.size();
            batch.push_back(TrainSample{&scenes[idx].clean_latent, &conds[idx]});
        }
        LossBreakdown bd = trainer.step(batch);
        if (step == 0) res.first_base = bd.base;
        res.last_base = bd.base;
        res.last = bd;
        if (log) {
            json rec = {{"step", step},       {"base", bd.base},   {"real", bd.real},
                        {"cons", bd.cons},    {"order", bd.order}, {"w_t", bd.weight},
                        {"total", bd.total},  {"grad_norm", bd.grad_norm}};
            log->write_line(rec.dump());
        }
    }
    if (ema_out) *ema_out = trainer.ema();
    return res;
}

TrainRunResult run_train(const RunConfig& cfg) {
    const VariantPlan plan = variant_plan(cfg.variant, cfg);
    const std::string run_dir = cfg.out_dir + "/train_" + plan.checkpoint_id;
    fs::create_directories(run_dir);
    fs::create_directories(cfg.out_dir + "/checkpoints");

    std::vector<ContactScene> scenes = generate_dataset(cfg.dataset);
    if (cfg.dataset.export_scenes) {
        const std::string scene_dir = cfg.out_dir + "/scenes";
        fs::create_directories(scene_dir);
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "/scene_%05zu.evdscene", i);
            save_scene(scene_dir + name, scenes[i]);
        }
    }

    MicroDiT model(cfg.model);
    EventHead head(cfg.head);
    JsonlWriter log(run_dir + "/metrics.jsonl");
    EmaState ema;
    TrainRunResult res = train_in_memory(cfg, plan.loss, scenes, model, head, &log, &ema);

    res.checkpoint_path = cfg.out_dir + "/checkpoints/" + plan.checkpoint_id + ".evdckpt";
    res.ema_path = cfg.out_dir + "/checkpoints/" + plan.checkpoint_id + "_ema.evdckpt";
    save_checkpoint(res.checkpoint_path, model, head);
    save_ema_checkpoint(res.ema_path, model, head, ema);

    write_manifest(run_dir, cfg,
                   json{{"mode", "train"},
                        {"variant", cfg.variant},
                        {"checkpoint", res.checkpoint_path},
                        {"first_base", res.first_base},
                        {"last_base", res.last_base}});
    return res;
}

MetricsRecord evaluate_variant(const MicroDiT& model, const EventHead& head,
                               const std::vector<ContactScene>& scenes,
                               const SamplerConfig& sampler, uint64_t seed,
                               std::vector<MetricsRecord>* per_scene) {
    DiTField field(model);
    const SampleSpace space = SampleSpace::from(model.cfg);
    MetricsRecord agg;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const ContactScene& scene = scenes[i];
        Conditioning y = scene_conditioning(scene.params, model.cfg.cond_dim);
        SampleResult sr = sample(field, &head, y, sampler, Rng::split(seed, i), space);
        MetricsRecord rec;
        rec.energy = update_energy(sr.trajectory, model.cfg.patch, scene.params.tau_e,
                                   scene.params.tau_s);
        rec.final_mse = latent_mse(sr.final_latent, scene.clean_latent);
        rec.backbone_evals = sr.trajectory.backbone_evals;
        rec.scenes = 1;
        if (per_scene) per_scene->push_back(rec);
        agg.energy.e_pre += rec.energy.e_pre;
        agg.energy.e_in += rec.energy.e_in;
        agg.energy.e_post += rec.energy.e_post;
        agg.final_mse += rec.final_mse;
        agg.backbone_evals += rec.backbone_evals;
        agg.scenes += 1;
    }
    if (agg.scenes > 0) {
        agg.energy.e_pre /= agg.scenes;
        agg.energy.e_in /= agg.scenes;
        agg.energy.e_post /= agg.scenes;
        agg.final_mse /= agg.scenes;
    }
    return agg;
}

SampleRunResult run_sample(const RunConfig& cfg) {
    const VariantPlan plan = variant_plan(cfg.variant, cfg);
    std::string ckpt = cfg.checkpoint;
    if (ckpt.empty()) {
        ckpt = cfg.out_dir + "/checkpoints/" + plan.checkpoint_id + "_ema.evdckpt";
    }
    if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt);
    LoadedCheckpoint lc = load_checkpoint(ckpt);

    const std::string run_dir = cfg.out_dir + "/sample_" + cfg.variant;
    fs::create_directories(run_dir + "/samples");

    std::vector<ContactScene> scenes = heldout_dataset(cfg.dataset, cfg.eval_scenes);
    JsonlWriter log(run_dir + "/scenes.jsonl");
    DiTField field(lc.model);
    const SampleSpace space = SampleSpace::from(lc.model.cfg);
    MetricsRecord agg;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const ContactScene& scene = scenes[i];
        Conditioning y = scene_conditioning(scene.params, lc.model.cfg.cond_dim);
        SampleResult sr = sample(field, &lc.head, y, plan.sampler, Rng::split(cfg.seed, i), space);
        char name[40];
        std::snprintf(name, sizeof(name), "/samples/scene_%04zu.evdlat", i);
        save_latent(run_dir + name, sr.final_latent);

        MetricsRecord rec;
        rec.energy =
            update_energy(sr.trajectory, lc.model.cfg.patch, scene.params.tau_e, scene.params.tau_s);
        rec.final_mse = latent_mse(sr.final_latent, scene.clean_latent);
        rec.backbone_evals = sr.trajectory.backbone_evals;
        json jrec = {{"scene", i},
                     {"e_pre", rec.energy.e_pre},
                     {"e_in", rec.energy.e_in},
                     {"e_post", rec.energy.e_post},
                     {"final_mse", rec.final_mse},
                     {"backbone_evals", rec.backbone_evals}};
        log.write_line(jrec.dump());
        agg.energy.e_pre += rec.energy.e_pre;
        agg.energy.e_in += rec.energy.e_in;
        agg.energy.e_post += rec.energy.e_post;
        agg.final_mse += rec.final_mse;
        agg.backbone_evals += rec.backbone_evals;
        agg.scenes += 1;
    }
    if (agg.scenes > 0) {
        agg.energy.e_pre /= agg.scenes;
        agg.energy.e_in /= agg.scenes;
        agg.energy.e_post /= agg.scenes;
        agg.final_mse /= agg.scenes;
    }

    write_manifest(run_dir, cfg,
                   json{{"mode", "sample"},
                        {"variant", cfg.variant},
                        {"checkpoint", ckpt},
                        {"e_pre", agg.energy.e_pre},
                        {"e_in", agg.energy.e_in},
                        {"e_post", agg.energy.e_post},
                        {"final_mse", agg.final_mse},
                        {"backbone_evals", agg.backbone_evals}});
    return SampleRunResult{agg, run_dir};
}

namespace {

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "variant,e_pre,e_in,e_post,e_pre_plus_post,final_mse\n";
    for (const auto& r : rows) {
        out << r.variant << "," << r.metrics.energy.e_pre << "," << r.metrics.energy.e_in << ","
            << r.metrics.energy.e_post << "," << r.metrics.energy.pre_plus_post() << ","
            << r.metrics.final_mse << "\n";
    }
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& cfg,
                                      const std::vector<std::string>& variants) {
    const std::string run_dir = cfg.out_dir + "/ablation";
    fs::create_directories(run_dir);
    std::vector<ContactScene> scenes = heldout_dataset(cfg.dataset, cfg.eval_scenes);

    std::vector<AblationRow> rows;
    for (const std::string& id : variants) {
        const VariantPlan plan = variant_plan(id, cfg);
        const std::string ckpt =
            cfg.out_dir + "/checkpoints/" + plan.checkpoint_id + "_ema.evdckpt";
        if (!fs::exists(ckpt)) {
            throw IoError("missing variant checkpoint " + ckpt + " (train variant '" +
                          plan.checkpoint_id + "' first)");
        }
        LoadedCheckpoint lc = load_checkpoint(ckpt);
        AblationRow row;
        row.variant = id;
        row.metrics = evaluate_variant(lc.model, lc.head, scenes, plan.sampler, cfg.seed);
        rows.push_back(std::move(row));
    }
    write_ablation_csv(run_dir + "/table.csv", rows);
    write_manifest(run_dir, cfg, json{{"mode", "ablate"}, {"variants", variants}});
    return rows;
}

std::map<std::string, MetricsRecord> train_and_evaluate_variants(
    const RunConfig& cfg, const std::vector<std::string>& variants) {
    // which checkpoints are needed
    std::vector<std::string> ckpt_ids;
    for (const auto& id : variants) {
        const std::string c = variant_plan(id, cfg).checkpoint_id;
        if (std::find(ckpt_ids.begin(), ckpt_ids.end(), c) == ckpt_ids.end()) {
            ckpt_ids.push_back(c);
        }
    }

    std::vector<ContactScene> train_scenes = generate_dataset(cfg.dataset);

    struct Trained {
        std::unique_ptr<MicroDiT> model;
        std::unique_ptr<EventHead> head;
    };
    std::map<std::string, Trained> trained;
    for (const auto& c : ckpt_ids) {
        trained[c] = Trained{std::make_unique<MicroDiT>(cfg.model),
                             std::make_unique<EventHead>(cfg.head)};
    }

    // identical data and seeds across variants; one thread per checkpoint,
    // capped by EVD_THREADS
    const int max_workers = std::max(1, worker_threads());
    std::vector<std::thread> pool;
    std::size_t next = 0;
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&](const std::string& ckpt_id) {
        try {
            RunConfig local = cfg;
            local.variant = ckpt_id;
            const VariantPlan plan = variant_plan(ckpt_id, cfg);
            EmaState ema;
            train_in_memory(local, plan.loss, train_scenes, *trained[ckpt_id].model,
                            *trained[ckpt_id].head, nullptr, &ema);
            // sampling consumes the EMA weights
            ema.copy_to(trained[ckpt_id].model->params, trained[ckpt_id].head->params);
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mu);
            if (!first_error) first_error = std::current_exception();
        }
    };
    while (next < ckpt_ids.size()) {
        pool.clear();
        for (int k = 0; k < max_workers && next < ckpt_ids.size(); ++k, ++next) {
            pool.emplace_back(worker, ckpt_ids[next]);
        }
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<ContactScene> eval_scenes = heldout_dataset(cfg.dataset, cfg.eval_scenes);
    std::map<std::string, MetricsRecord> out;
    for (const auto& id : variants) {
        const VariantPlan plan = variant_plan(id, cfg);
        const Trained& tr = trained.at(plan.checkpoint_id);
        out[id] = evaluate_variant(*tr.model, *tr.head, eval_scenes, plan.sampler, cfg.seed);
    }
    return out;
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
    const std::string run_dir = cfg.out_dir + "/sweep";
    fs::create_directories(run_dir);
    cfg.sweep.validate();

    std::string ckpt = cfg.checkpoint;
    if (ckpt.empty()) ckpt = cfg.out_dir + "/checkpoints/full_ema.evdckpt";
    if (!fs::exists(ckpt)) throw IoError("missing checkpoint " + ckpt);
    LoadedCheckpoint lc = load_checkpoint(ckpt);

    std::vector<ContactScene> scenes = heldout_dataset(cfg.dataset, cfg.eval_scenes);

    struct Combo {
        int steps;
        double w, beta, on, off, tstar;
    };
    std::vector<Combo> combos;
    for (int k : cfg.sweep.steps)
        for (double w : cfg.sweep.w_cfg)
            for (double b : cfg.sweep.beta)
                for (auto& [on, off] : cfg.sweep.bands)
                    for (double ts : cfg.sweep.t_star) combos.push_back({k, w, b, on, off, ts});
    if (combos.empty()) throw ConfigError("sweep grid is empty");

    std::vector<SweepRow> rows(combos.size());
    const int max_workers = std::max(1, worker_threads());
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= combos.size()) return;
            try {
                const Combo& c = combos[i];
                VariantPlan plan = variant_plan("full", cfg);
                plan.sampler.steps = c.steps;
                plan.sampler.w_cfg = c.w;
                plan.sampler.gate.beta = c.beta;
                plan.sampler.gate.tau_on = c.on;
                plan.sampler.gate.tau_off = c.off;
                plan.sampler.gate.t_star = c.tstar;
                SweepRow row{c.steps, c.w, c.beta, c.on, c.off, c.tstar, MetricsRecord{}};
                row.metrics = evaluate_variant(lc.model, lc.head, scenes, plan.sampler,
                                               Rng::split(cfg.seed, i));
                rows[i] = std::move(row);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int k = 0; k < max_workers; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    std::ofstream out(run_dir + "/grid.csv");
    if (!out) throw IoError("cannot write sweep grid");
    out << "steps,w_cfg,beta,tau_on,tau_off,t_star,e_pre,e_in,e_post,final_mse\n";
    for (const auto& r : rows) {
        out << r.steps << "," << r.w_cfg << "," << r.beta << "," << r.tau_on << "," << r.tau_off
            << "," << r.t_star << "," << r.metrics.energy.e_pre << "," << r.metrics.energy.e_in
            << "," << r.metrics.energy.e_post << "," << r.metrics.final_mse << "\n";
    }
    write_manifest(run_dir, cfg, json{{"mode", "sweep"}, {"grid_points", combos.size()}});
    return rows;
}

std::vector<AuditRow> run_audit(const RunConfig& cfg) {
    const std::string run_dir = cfg.out_dir + "/audit";
    fs::create_directories(run_dir);

    std::vector<ContactScene> scenes = generate_dataset(cfg.dataset);
    JsonlWriter log(run_dir + "/clips.jsonl");

    std::vector<AuditRow> rows;
    rows.reserve(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const LatentVideo& z1 = scenes[i].clean_latent;
        const PatchSpec& patch = scenes[i].params.patch;
        Mat m = latent_change_magnitude(z1, patch);
        Mat m_used = cfg.pseudo.use_camera_suppressed ? suppress_camera(m) : m;
        Mat a = activity_target(m_used, cfg.pseudo);
        const std::vector<double> clip_map = frame_mean_activity(a);

        AuditRow row;
        row.index = static_cast<int>(i);
        row.score = clip_activity_score(z1, patch);
        row.confidence = confidence_target(clip_map, cfg.pseudo.tau_a);
        row.entropy = normalized_entropy(clip_map);
        row.accept = diffuseness_accept(clip_map, cfg.pseudo.entropy_threshold);
        row.phase = phase_target(a, cfg.pseudo.epsilon);

        json rec = {{"clip", row.index},    {"score", row.score},
                    {"confidence", row.confidence}, {"entropy", row.entropy},
                    {"accept", row.accept}, {"phase", row.phase}};
        log.write_line(rec.dump());
        rows.push_back(std::move(row));
    }
    write_manifest(run_dir, cfg, json{{"mode", "audit"}, {"clips", rows.size()}});
    return rows;
}

}  // namespace evd
