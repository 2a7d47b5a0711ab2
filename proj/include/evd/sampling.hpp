#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "evd/backbone.hpp"
#include "evd/flow.hpp"
#include "evd/gating.hpp"
#include "evd/pseudo_events.hpp"
#include "evd/tensor.hpp"

namespace evd {

struct SamplerConfig {
    int steps = 50;
    double w_cfg = 4.0;
    GateConfig gate;
    enum class Solver { euler, heun } solver = Solver::euler;
    bool gating_enabled = true;
    /// anneal: rho(t) ramp; constant: fixed rho = schedule_const; off: the
    /// scheduled blend is skipped (gate used as-is).
    enum class ScheduleMode { anneal, constant, off } schedule_mode = ScheduleMode::anneal;
    double schedule_const = 1.0;
    /// Which CFG branch's final tokens feed the event head.
    enum class EventBranch { conditional, unconditional } event_branch = EventBranch::conditional;
    /// event_head: learned activity; motion_mask: pseudo-event activity
    /// computed from the partially denoised latent (no trained head).
    enum class ActivitySource { event_head, motion_mask } activity_source =
        ActivitySource::event_head;
    PseudoTargetConfig motion_mask;  // knobs for the motion_mask source
    std::vector<double> custom_grid;  // optional non-uniform monotone grid

    void validate() const;
};

/// Latent shape plus the patch grid the gate operates on.
struct SampleSpace {
    int t = 16, h = 8, w = 8, c = 4;
    PatchSpec patch{2, 2, 2};

    TokenGrid grid() const { return token_grid(t, h, w, patch); }
    static SampleSpace from(const DiTConfig& cfg) {
        return SampleSpace{cfg.t, cfg.h, cfg.w, cfg.c, cfg.patch};
    }
};

struct Trajectory {
    std::vector<LatentVideo> latents;             // K+1 entries
    std::vector<GateVector> gates;                // K entries (predictor-point gate)
    std::vector<std::vector<double>> activities;  // K entries (smoothed activity)
    long backbone_evals = 0;
};

struct SampleResult {
    LatentVideo final_latent;
    Trajectory trajectory;
};

/// (1 + w) v_cond - w v_uncond, elementwise.
LatentVideo cfg_combine(const LatentVideo& v_cond, const LatentVideo& v_uncond, double w_cfg);

using FieldProvider = std::function<LatentVideo(const LatentVideo&, double)>;

/// One solver step over [t0, t1] with an already-gated direction field.
/// Euler: z + dt*f(z,t0). Heun: predictor then trapezoidal correction.
LatentVideo solver_step(const LatentVideo& z, const FieldProvider& field, double t0, double t1,
                        SamplerConfig::Solver mode);

/// Event-driven sampling with CFG: per step, CFG field, activity, smoothing
/// and soft gate, one hysteresis advance (at the predictor point), schedule,
/// gate application, solver step. head may be null when gating is disabled
/// or the motion-mask source is selected.
SampleResult sample(const VelocityField& field, const EventHead* head, const Conditioning& y,
                    const SamplerConfig& cfg, uint64_t seed, const SampleSpace& space);

/// Independent trajectories with per-trajectory seeds split(seed, i).
std::vector<SampleResult> sample_batch(const VelocityField& field, const EventHead* head,
                                       const std::vector<Conditioning>& ys,
                                       const SamplerConfig& cfg, uint64_t seed,
                                       const SampleSpace& space);

}  // namespace evd
