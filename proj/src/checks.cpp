#include "evd/checks.hpp"

#include <cmath>
#include <functional>

#include "evd/experiments.hpp"
#include "evd/losses.hpp"
#include "evd/metrics.hpp"
#include "evd/pseudo_events.hpp"
#include "evd/sampling.hpp"

namespace evd {

namespace {

bool bitwise_equal(const LatentVideo& a, const LatentVideo& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

DiTConfig micro_config() {
    DiTConfig c;
    c.t = 2;
    c.h = 2;
    c.w = 2;
    c.c = 1;
    c.patch = PatchSpec{1, 1, 1};
    c.width = 8;
    c.layers = 2;
    c.heads = 2;
    c.cond_dim = 4;
    return c;
}

/// Central finite differences of the full objective vs the analytic
/// gradients; returns the worst relative error over all parameters.
double gradient_check_worst_rel_err(uint64_t seed) {
    const DiTConfig mc = micro_config();
    MicroDiT model(mc);
    EventHeadConfig hc;
    hc.feature_dim = mc.width;
    hc.time_dim = mc.width;
    hc.hidden = 8;
    EventHead head(hc);
    init_random(model, head, seed, 0.2);

    Rng rng(Rng::split(seed, 7));
    LatentVideo z1(mc.t, mc.h, mc.w, mc.c);
    for (double& x : z1.data()) x = rng.normal();
    LatentVideo z0 = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, rng);
    Conditioning y;
    y.embedding.resize(mc.cond_dim);
    for (double& x : y.embedding) x = rng.normal();

    FixedSampleDraw draw;
    draw.z0 = &z0;
    draw.t = 0.35 + 0.3 * rng.uniform();
    draw.t2 = std::min(1.0, std::max(0.0, draw.t + rng.uniform(-0.1, 0.1)));
    draw.dropped = false;

    LossConfig lc;
    lc.p_event_dropout = 0.0;

    model.params.zero_grad();
    head.params.zero_grad();
    sample_loss_backward(model, head, z1, y, draw, lc, 1.0);

    const double h = 1e-5;
    double worst = 0.0;
    auto check_store = [&](ParamStore& store) {
        for (auto& p : store.all()) {
            for (std::size_t i = 0; i < p.w.size(); ++i) {
                const double orig = p.w[i];
                p.w[i] = orig + h;
                const double fp = sample_loss_forward(model, head, z1, y, draw, lc).total;
                p.w[i] = orig - h;
                const double fm = sample_loss_forward(model, head, z1, y, draw, lc).total;
                p.w[i] = orig;
                const double fd = (fp - fm) / (2.0 * h);
                const double an = p.g[i];
                const double diff = std::abs(fd - an);
                const double denom = std::max(std::abs(fd), std::abs(an));
                if (diff < 1e-8) continue;  // both effectively zero
                worst = std::max(worst, diff / denom);
            }
        }
    };
    check_store(model.params);
    check_store(head.params);
    return worst;
}

}  // namespace

std::vector<CheckResult> run_check(const RunConfig& cfg) {
    std::vector<CheckResult> results;
    auto check = [&](const std::string& name, const std::function<bool(std::string&)>& fn) {
        CheckResult r;
        r.name = name;
        try {
            r.pass = fn(r.detail);
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    };

    check("config_validation", [&](std::string&) {
        cfg.validate();
        RunConfig bad = cfg;
        bad.sampler.gate.tau_on = 0.3;
        bad.sampler.gate.tau_off = 0.6;
        try {
            bad.validate();
            return false;  // inverted thresholds must fail validation
        } catch (const ConfigError&) {
            return true;
        }
    });

    check("tokenize_round_trip", [&](std::string&) {
        Rng rng(11);
        for (const PatchSpec spec : {PatchSpec{1, 1, 1}, PatchSpec{2, 2, 2}, PatchSpec{2, 4, 1}}) {
            LatentVideo z = LatentVideo::gaussian(4, 4, 4, 3, rng);
            if (!bitwise_equal(untokenize(tokenize(z, spec)), z)) return false;
            const TokenField tok = tokenize(z, spec);
            if (static_cast<std::size_t>(tok.rows()) * tok.cols() != z.size()) return false;
        }
        return true;
    });

    check("scene_change_window", [&](std::string&) {
        SceneParams p;
        const ContactScene scene = make_contact_scene(p);
        for (int tau = 0; tau + 1 < p.t; ++tau) {
            double change = 0.0;
            for (int hh = 0; hh < p.h; ++hh)
                for (int ww = 0; ww < p.w; ++ww)
                    for (int ch = 0; ch < p.c; ++ch)
                        change += std::abs(scene.clean_latent.at(tau + 1, hh, ww, ch) -
                                           scene.clean_latent.at(tau, hh, ww, ch));
            const bool inside = tau >= p.tau_e && tau < p.tau_s;
            if (inside != (change > 0.0)) return false;
        }
        return true;
    });

    check("gate_arithmetic", [&](std::string&) {
        GateConfig g;
        ActivityMap a;
        a.values = {0.5, 0.7, 0.3};
        const GateVector gv = soft_gate(a, g);
        const double s24 = 1.0 / (1.0 + std::exp(-2.4));
        return std::abs(gv[0] - 0.5) < 1e-12 && std::abs(gv[1] - s24) < 1e-12 &&
               std::abs(gv[2] - (1.0 - s24)) < 1e-12;
    });

    check("hysteresis_state_machine", [&](std::string&) {
        GateConfig g;
        Rng rng(5);
        for (int trial = 0; trial < 2000; ++trial) {
            GateState state = GateState::zeros(1);
            for (int step = 0; step < 32; ++step) {
                ActivityMap a;
                a.values = {rng.uniform()};
                const GateState next = hysteresis_step(a, state, g);
                const double v = a.values[0];
                if (v >= g.tau_on && next.bin[0] != 1) return false;
                if (v <= g.tau_off && next.bin[0] != 0) return false;
                if (v > g.tau_off && v < g.tau_on && next.bin[0] != state.bin[0]) return false;
                state = next;
            }
        }
        return true;
    });

    check("schedule_identities", [&](std::string&) {
        GateConfig g;
        const GateVector gate = {0.4, 0.0, 1.0};
        const GateVector ones = apply_schedule(gate, 0.0);
        for (double v : ones)
            if (v != 1.0) return false;
        const GateVector same = apply_schedule(gate, 1.0);
        for (std::size_t i = 0; i < gate.size(); ++i)
            if (same[i] != gate[i]) return false;
        return std::abs(schedule_rho(0.8, g) - 0.5) < 1e-12 && schedule_rho(0.5, g) == 1.0 &&
               std::abs(schedule_rho(1.0, g)) < 1e-12;
    });

    check("oracle_solver_exactness", [&](std::string&) {
        Rng rng(17);
        LatentVideo z0 = LatentVideo::gaussian(2, 4, 4, 2, rng);
        LatentVideo z1 = LatentVideo::gaussian(2, 4, 4, 2, rng);
        const PatchSpec spec{1, 2, 2};
        OracleField oracle(z0, z1, spec);
        for (int k : {1, 4, 50}) {
            for (auto solver : {SamplerConfig::Solver::euler, SamplerConfig::Solver::heun}) {
                const TimeGrid grid = uniform_time_grid(k);
                LatentVideo z = z0;
                auto provider = [&](const LatentVideo& zz, double tt) {
                    return oracle.forward(zz, Conditioning::null(1), tt).v_hat;
                };
                for (int i = 0; i < k; ++i) {
                    z = solver_step(z, provider, grid.points[i], grid.points[i + 1], solver);
                }
                for (std::size_t i = 0; i < z.data().size(); ++i) {
                    if (std::abs(z.data()[i] - z1.data()[i]) > 1e-10) return false;
                }
            }
        }
        return true;
    });

    check("cfg_identities", [&](std::string&) {
        Rng rng(23);
        LatentVideo a = LatentVideo::gaussian(2, 2, 2, 2, rng);
        LatentVideo b = LatentVideo::gaussian(2, 2, 2, 2, rng);
        const LatentVideo w0 = cfg_combine(a, b, 0.0);
        if (!bitwise_equal(w0, a)) return false;
        const LatentVideo same = cfg_combine(a, a, 4.0);
        for (std::size_t i = 0; i < a.data().size(); ++i) {
            if (std::abs(same.data()[i] - a.data()[i]) > 1e-12) return false;
        }
        return true;
    });

    check("zero_impact_init", [&](std::string&) {
        DiTConfig mc = micro_config();
        MicroDiT model(mc);
        EventHeadConfig hc;
        hc.feature_dim = mc.width;
        hc.time_dim = mc.width;
        EventHead head(hc);
        init_zero_impact(model, head, 3);
        Rng rng(29);
        LatentVideo z = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, rng);
        DiTOutput out = dit_forward(model, z, Conditioning::null(mc.cond_dim), 0.4);
        for (double v : out.v_hat.data())
            if (v != 0.0) return false;
        ActivityMap a = event_head_forward(head, out.final_tokens, 0.4);
        for (double v : a.values)
            if (v >= 0.003) return false;
        return true;
    });

    check("gradient_check_micro", [&](std::string& detail) {
        double worst = 0.0;
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            worst = std::max(worst, gradient_check_worst_rel_err(seed));
        }
        detail = "worst rel err " + std::to_string(worst);
        return worst < 1e-4;
    });

    check("loss_identities", [&](std::string&) {
        Mat delta(2, 2);
        delta.v = {1.0, 2.0, 3.0, 4.0};
        const double mean_sq = (1.0 + 4.0 + 9.0 + 16.0) / 4.0;
        if (std::abs(loss_real({1.0, 1.0}, delta)) > 1e-15) return false;
        if (std::abs(loss_real({0.0, 0.0}, delta) - mean_sq) > 1e-12) return false;
        if (std::abs(loss_order({0.0, 0.0}, delta, 0.62, 0.38) - 2.0 * mean_sq) > 1e-12)
            return false;
        if (std::abs(loss_order({0.9, 0.9}, delta, 0.62, 0.38)) > 1e-15) return false;
        if (std::abs(loss_cons({0.0, 0.0}, delta, {0.0, 0.0}, delta)) > 1e-15) return false;
        TimeWeightConfig tw;
        return std::abs(time_weight(1.0, tw) - std::exp(-2.4)) < 1e-12 &&
               time_weight(0.6, tw) == 1.0;
    });

    check("pseudo_target_properties", [&](std::string&) {
        // pure camera drift: suppressed magnitudes vanish, clip rejected
        SceneParams p;
        p.tau_e = 4;
        p.tau_s = 4;  // no blob motion
        p.vel_r = p.vel_c = 0;
        p.blob_value = 0.0;
        p.camera_drift.assign(p.t, 0.0);
        for (int tau = 0; tau < p.t; ++tau) p.camera_drift[tau] = 0.3 * tau;
        const ContactScene scene = make_contact_scene(p);
        const PatchSpec spatial{1, 1, 1};
        const Mat m = latent_change_magnitude(scene.clean_latent, spatial);
        const Mat ms = suppress_camera(m);
        for (double v : ms.v)
            if (v != 0.0) return false;
        PseudoTargetConfig pc;
        const Mat a = activity_target(ms, pc);
        if (diffuseness_accept(frame_mean_activity(a), 0.99)) return false;
        const std::vector<double> phase = phase_target(a, pc.epsilon);
        for (std::size_t i = 1; i < phase.size(); ++i) {
            if (phase[i] < phase[i - 1] - 1e-15) return false;
        }
        return true;
    });

    check("gate_off_equivalence", [&](std::string&) {
        DiTConfig mc = micro_config();
        MicroDiT model(mc);
        EventHeadConfig hc;
        hc.feature_dim = mc.width;
        hc.time_dim = mc.width;
        EventHead head(hc);
        init_random(model, head, 41);
        DiTField field(model);
        const SampleSpace space = SampleSpace::from(mc);
        Conditioning y;
        y.embedding.assign(mc.cond_dim, 0.25);

        SamplerConfig s1;
        s1.steps = 8;
        s1.gating_enabled = false;
        SamplerConfig s2;
        s2.steps = 8;
        s2.schedule_mode = SamplerConfig::ScheduleMode::constant;
        s2.schedule_const = 0.0;
        const SampleResult r1 = sample(field, &head, y, s1, 99, space);
        const SampleResult r2 = sample(field, &head, y, s2, 99, space);
        return bitwise_equal(r1.final_latent, r2.final_latent);
    });

    check("evaluation_counts", [&](std::string&) {
        DiTConfig mc = micro_config();
        MicroDiT model(mc);
        EventHeadConfig hc;
        hc.feature_dim = mc.width;
        hc.time_dim = mc.width;
        EventHead head(hc);
        init_random(model, head, 43);
        DiTField field(model);
        const SampleSpace space = SampleSpace::from(mc);
        Conditioning y;
        y.embedding.assign(mc.cond_dim, 0.1);
        SamplerConfig cfg_euler;
        cfg_euler.steps = 5;
        SamplerConfig cfg_heun = cfg_euler;
        cfg_heun.solver = SamplerConfig::Solver::heun;
        const SampleResult re = sample(field, &head, y, cfg_euler, 7, space);
        const SampleResult rh = sample(field, &head, y, cfg_heun, 7, space);
        return re.trajectory.backbone_evals == 2 * 5 && rh.trajectory.backbone_evals == 4 * 5;
    });

    return results;
}

}  // namespace evd
