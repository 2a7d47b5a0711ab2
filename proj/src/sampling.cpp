#include "evd/sampling.hpp"

#include <cmath>
#include <string>

#include "evd/rng.hpp"

namespace evd {

void SamplerConfig::validate() const {
    if (steps < 1) throw ConfigError("sampler.steps must be >= 1");
    if (!(w_cfg >= 0.0)) throw ConfigError("sampler.w_cfg must be non-negative");
    gate.validate();
    if (schedule_mode == ScheduleMode::constant &&
        !(schedule_const >= 0.0 && schedule_const <= 1.0)) {
        throw ConfigError("sampler.schedule_const must lie in [0,1]");
    }
    if (!custom_grid.empty()) custom_time_grid(custom_grid);
}

LatentVideo cfg_combine(const LatentVideo& v_cond, const LatentVideo& v_uncond, double w_cfg) {
    if (!v_cond.same_shape(v_uncond)) {
        throw ShapeError("cfg_combine: branch shapes differ");
    }
    LatentVideo out(v_cond.frames(), v_cond.height(), v_cond.width(), v_cond.channels());
    const auto& a = v_cond.data();
    const auto& b = v_uncond.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = (1.0 + w_cfg) * a[i] - w_cfg * b[i];
    }
    return out;
}

LatentVideo solver_step(const LatentVideo& z, const FieldProvider& field, double t0, double t1,
                        SamplerConfig::Solver mode) {
    if (!(t1 > t0)) {
        throw ConfigError("solver_step: times must be strictly increasing");
    }
    const double dt = t1 - t0;
    LatentVideo f1 = field(z, t0);
    LatentVideo out(z.frames(), z.height(), z.width(), z.channels());
    if (mode == SamplerConfig::Solver::euler) {
        for (std::size_t i = 0; i < out.data().size(); ++i) {
            out.data()[i] = z.data()[i] + dt * f1.data()[i];
        }
        return out;
    }
    // heun: predictor, then trapezoidal corrector
    LatentVideo zp(z.frames(), z.height(), z.width(), z.channels());
    for (std::size_t i = 0; i < zp.data().size(); ++i) {
        zp.data()[i] = z.data()[i] + dt * f1.data()[i];
    }
    LatentVideo f2 = field(zp, t1);
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        out.data()[i] = z.data()[i] + 0.5 * dt * (f1.data()[i] + f2.data()[i]);
    }
    return out;
}

SampleResult sample(const VelocityField& field, const EventHead* head, const Conditioning& y,
                    const SamplerConfig& cfg, uint64_t seed, const SampleSpace& space) {
    cfg.validate();
    if (cfg.gating_enabled && cfg.activity_source == SamplerConfig::ActivitySource::event_head &&
        head == nullptr) {
        throw ConfigError("sampling with the event-head activity source needs an event head");
    }
    const TokenGrid grid = space.grid();
    const int n = grid.count();
    const Conditioning null_y = Conditioning::null(static_cast<int>(y.embedding.size()));
    const TimeGrid tg =
        cfg.custom_grid.empty() ? uniform_time_grid(cfg.steps) : custom_time_grid(cfg.custom_grid);

    Rng rng(seed);
    LatentVideo z = LatentVideo::gaussian(space.t, space.h, space.w, space.c, rng);

    SampleResult res;
    res.trajectory.latents.push_back(z);
    GateState state = GateState::zeros(n);

    for (int k = 0; k < tg.steps(); ++k) {
        bool advanced = false;
        bool recorded = false;
        GateVector step_gate;
        std::vector<double> step_activity;

        FieldProvider provider = [&](const LatentVideo& zq, double tq) -> LatentVideo {
            FieldEval cond = field.forward(zq, y, tq);
            res.trajectory.backbone_evals++;
            FieldEval uncond = field.forward(zq, null_y, tq);
            res.trajectory.backbone_evals++;
            LatentVideo v = cfg_combine(cond.v_hat, uncond.v_hat, cfg.w_cfg);
            if (!cfg.gating_enabled) {
                if (!recorded) {
                    step_gate.assign(n, 1.0);
                    step_activity.clear();
                    recorded = true;
                }
                return v;
            }

            ActivityMap a_raw;
            if (cfg.activity_source == SamplerConfig::ActivitySource::event_head) {
                const Mat& tokens =
                    cfg.event_branch == SamplerConfig::EventBranch::conditional
                        ? cond.final_tokens
                        : uncond.final_tokens;
                a_raw = event_head_forward(*head, tokens, tq);
            } else {
                a_raw.values = motion_mask_activity(zq, space.patch, cfg.motion_mask);
            }
            ActivityMap a_sm = smooth_activity(a_raw, grid, cfg.gate.smoothing_enabled);
            GateVector gbar = soft_gate(a_sm, cfg.gate);
            if (!advanced) {
                state = hysteresis_step(a_sm, state, cfg.gate);
                advanced = true;
            }
            GateVector g = combine_gate(gbar, state, cfg.gate.combine);
            GateVector g_sched;
            switch (cfg.schedule_mode) {
                case SamplerConfig::ScheduleMode::anneal:
                    g_sched = apply_schedule(g, schedule_rho(tq, cfg.gate));
                    break;
                case SamplerConfig::ScheduleMode::constant:
                    g_sched = apply_schedule(g, cfg.schedule_const);
                    break;
                case SamplerConfig::ScheduleMode::off:
                    g_sched = g;
                    break;
            }
            if (!recorded) {
                step_gate = g_sched;
                step_activity = a_sm.values;
                recorded = true;
            }
            return gate_field(v, g_sched, space.patch);
        };

        z = solver_step(z, provider, tg.points[k], tg.points[k + 1], cfg.solver);
        res.trajectory.latents.push_back(z);
        res.trajectory.gates.push_back(std::move(step_gate));
        res.trajectory.activities.push_back(std::move(step_activity));
    }

    res.final_latent = res.trajectory.latents.back();
    return res;
}

std::vector<SampleResult> sample_batch(const VelocityField& field, const EventHead* head,
                                       const std::vector<Conditioning>& ys,
                                       const SamplerConfig& cfg, uint64_t seed,
                                       const SampleSpace& space) {
    std::vector<SampleResult> out;
    out.reserve(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) {
        out.push_back(sample(field, head, ys[i], cfg, Rng::split(seed, i), space));
    }
    return out;
}

}  // namespace evd
