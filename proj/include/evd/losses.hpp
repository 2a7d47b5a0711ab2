#pragma once

#include <cstdint>
#include <vector>

#include "evd/backbone.hpp"
#include "evd/flow.hpp"
#include "evd/gating.hpp"
#include "evd/rng.hpp"
#include "evd/tensor.hpp"

namespace evd {

/// Objective knobs. All norms are mean-reduced over elements (and over the
/// batch), so the lambda weights compare across shapes.
struct LossConfig {
    double lambda_real = 0.12;
    double lambda_cons = 0.08;
    double lambda_order = 0.03;
    TimeWeightConfig time_weight;
    double delta_jitter = 0.10;     // consistency jitter half-width
    double p_event_dropout = 0.25;  // with this prob. the sample's activity is zeroed
    double tau_on = 0.62;
    double tau_off = 0.38;
    bool use_smoothed_activity_in_losses = true;
    /// false = event pathway fully detached: no head forward, no dropout or
    /// jitter draws; the step reduces to a plain flow-matching update.
    bool event_pathway_enabled = true;

    void validate() const;
};

struct TrainConfig {
    int steps = 2000;
    int batch_size = 8;
    double lr_backbone = 3e-4;
    double lr_event = 1e-3;  // second parameter group for the event head
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double weight_decay = 0.02;
    double grad_clip = 0.5;
    double ema_decay = 0.999;
    uint64_t seed = 0;

    void validate() const;
};

struct LossBreakdown {
    double base = 0.0;
    double real = 0.0;
    double cons = 0.0;
    double order = 0.0;
    double weight = 1.0;  // w(t), batch mean
    double total = 0.0;
    double grad_norm = 0.0;  // pre-clip global norm
};

/// mean((v_hat - (z1 - z0))^2)
double loss_base(const LatentVideo& v_hat, const LatentVideo& z0, const LatentVideo& z1);

/// mean(((1 - a_i) * delta_ic)^2)
double loss_real(const std::vector<double>& activity, const Mat& delta);

/// mean((a_i d_ic - a'_i d'_ic)^2); the caller draws t' = clip(t+delta, 0, 1).
double loss_cons(const std::vector<double>& a_t, const Mat& d_t,
                 const std::vector<double>& a_t2, const Mat& d_t2);

/// mean(1[a<tau_on] d^2) + mean(1[a<tau_off] d^2); hard indicators, so
/// gradients flow only through delta.
double loss_order(const std::vector<double>& activity, const Mat& delta, double tau_on,
                  double tau_off);

LossBreakdown loss_total(double base, double real, double cons, double order, double t,
                         const LossConfig& cfg);

/// Global-norm gradient clip across both stores; returns the pre-clip norm.
double clip_global_norm(ParamStore& model, ParamStore& head, double max_norm);

/// EMA shadow of both parameter stores: e <- d*e + (1-d)*p.
struct EmaState {
    std::vector<double> model_shadow;
    std::vector<double> head_shadow;

    void init(const ParamStore& model, const ParamStore& head);
    void update(const ParamStore& model, const ParamStore& head, double decay);
    void copy_to(ParamStore& model, ParamStore& head) const;
};

/// AdamW with decoupled weight decay and two learning-rate groups
/// (backbone vs event head).
class AdamW {
public:
    AdamW(const ParamStore& model, const ParamStore& head, const TrainConfig& cfg);
    void step(ParamStore& model, ParamStore& head);
    long steps_taken() const { return t_; }

private:
    void apply(ParamStore& store, std::vector<double>& m, std::vector<double>& v, double lr);
    TrainConfig cfg_;
    std::vector<double> m_model_, v_model_, m_head_, v_head_;
    long t_ = 0;
};

struct TrainSample {
    const LatentVideo* z1 = nullptr;
    const Conditioning* y = nullptr;
};

/// The stochastic draws of one training sample, fixed so the objective is a
/// deterministic function of the parameters (finite-difference checks).
struct FixedSampleDraw {
    const LatentVideo* z0 = nullptr;
    double t = 0.5;
    double t2 = 0.5;  // consistency time, already clipped to [0,1]
    bool dropped = false;
};

/// Forward-only per-sample objective.
LossBreakdown sample_loss_forward(const MicroDiT& model, const EventHead& head,
                                  const LatentVideo& z1, const Conditioning& y,
                                  const FixedSampleDraw& draw, const LossConfig& cfg);

/// Forward plus reverse pass; accumulates parameter gradients of
/// grad_scale * total into both stores and returns the breakdown.
LossBreakdown sample_loss_backward(MicroDiT& model, EventHead& head, const LatentVideo& z1,
                                   const Conditioning& y, const FixedSampleDraw& draw,
                                   const LossConfig& cfg, double grad_scale);

/// One optimization step over a batch, following the training loop order:
/// draw (z0, t), interpolate, forward, event activity, event dropout,
/// losses (base / realization / consistency with a second forward at
/// t' = clip(t+delta,0,1) / ordering), time-weighted total, backward, clip,
/// AdamW update with two groups, EMA update. Throws TrainingError naming the
/// term if any loss is non-finite. Event dropout zeroes the sample's
/// activity at both times, so the head receives no gradient from dropped
/// samples.
class Trainer {
public:
    Trainer(MicroDiT& model, EventHead& head, const LossConfig& loss_cfg,
            const TrainConfig& train_cfg);

    LossBreakdown step(const std::vector<TrainSample>& batch);

    Rng& rng() { return rng_; }
    const EmaState& ema() const { return ema_; }
    EmaState& ema() { return ema_; }
    long steps_taken() const { return opt_.steps_taken(); }

private:
    MicroDiT& model_;
    EventHead& head_;
    LossConfig loss_cfg_;
    TrainConfig train_cfg_;
    AdamW opt_;
    EmaState ema_;
    Rng rng_;
};

}  // namespace evd
