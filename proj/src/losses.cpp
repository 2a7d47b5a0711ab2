#include "evd/losses.hpp"

#include <cmath>
#include <string>

namespace evd {

void LossConfig::validate() const {
    if (lambda_real < 0.0 || lambda_cons < 0.0 || lambda_order < 0.0) {
        throw ConfigError("loss lambdas must be non-negative");
    }
    if (!(delta_jitter > 0.0 && delta_jitter < 1.0)) {
        throw ConfigError("loss.delta_jitter must lie in (0,1)");
    }
    if (!(p_event_dropout >= 0.0 && p_event_dropout <= 1.0)) {
        throw ConfigError("loss.p_event_dropout must lie in [0,1]");
    }
    if (!(tau_on > tau_off)) {
        throw ConfigError("loss.tau_on must exceed loss.tau_off");
    }
    if (!(time_weight.t_star_loss > 0.0 && time_weight.t_star_loss < 1.0)) {
        throw ConfigError("loss.time_weight.t_star_loss must lie in (0,1)");
    }
    if (!(time_weight.kappa > 0.0)) {
        throw ConfigError("loss.time_weight.kappa must be positive");
    }
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train.steps must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(lr_backbone > 0.0) || !(lr_event > 0.0)) {
        throw ConfigError("train learning rates must be positive");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("train adam betas must lie in [0,1)");
    }
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
    if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) {
        throw ConfigError("train.ema_decay must lie in [0,1]");
    }
}

double loss_base(const LatentVideo& v_hat, const LatentVideo& z0, const LatentVideo& z1) {
    if (!v_hat.same_shape(z0) || !v_hat.same_shape(z1)) {
        throw ShapeError("loss_base: shapes differ");
    }
    const auto& vh = v_hat.data();
    const auto& a = z0.data();
    const auto& b = z1.data();
    double s = 0.0;
    for (std::size_t i = 0; i < vh.size(); ++i) {
        const double r = vh[i] - (b[i] - a[i]);
        s += r * r;
    }
    return s / vh.size();
}

double loss_real(const std::vector<double>& activity, const Mat& delta) {
    if (static_cast<int>(activity.size()) != delta.rows) {
        throw ShapeError("loss_real: activity length does not match token count");
    }
    double s = 0.0;
    for (int i = 0; i < delta.rows; ++i) {
        const double gap = 1.0 - activity[i];
        const double* row = delta.row(i);
        for (int j = 0; j < delta.cols; ++j) {
            const double r = gap * row[j];
            s += r * r;
        }
    }
    return s / (static_cast<double>(delta.rows) * delta.cols);
}

double loss_cons(const std::vector<double>& a_t, const Mat& d_t, const std::vector<double>& a_t2,
                 const Mat& d_t2) {
    if (d_t.rows != d_t2.rows || d_t.cols != d_t2.cols ||
        static_cast<int>(a_t.size()) != d_t.rows || static_cast<int>(a_t2.size()) != d_t2.rows) {
        throw ShapeError("loss_cons: shapes differ");
    }
    double s = 0.0;
    for (int i = 0; i < d_t.rows; ++i) {
        const double ai = a_t[i];
        const double bi = a_t2[i];
        const double* r1 = d_t.row(i);
        const double* r2 = d_t2.row(i);
        for (int j = 0; j < d_t.cols; ++j) {
            const double r = ai * r1[j] - bi * r2[j];
            s += r * r;
        }
    }
    return s / (static_cast<double>(d_t.rows) * d_t.cols);
}

double loss_order(const std::vector<double>& activity, const Mat& delta, double tau_on,
                  double tau_off) {
    if (static_cast<int>(activity.size()) != delta.rows) {
        throw ShapeError("loss_order: activity length does not match token count");
    }
    double s = 0.0;
    for (int i = 0; i < delta.rows; ++i) {
        const double ind = (activity[i] < tau_on ? 1.0 : 0.0) + (activity[i] < tau_off ? 1.0 : 0.0);
        if (ind == 0.0) continue;
        const double* row = delta.row(i);
        double e = 0.0;
        for (int j = 0; j < delta.cols; ++j) e += row[j] * row[j];
        s += ind * e;
    }
    return s / (static_cast<double>(delta.rows) * delta.cols);
}

LossBreakdown loss_total(double base, double real, double cons, double order, double t,
                         const LossConfig& cfg) {
    LossBreakdown b;
    b.base = base;
    b.real = real;
    b.cons = cons;
    b.order = order;
    b.weight = time_weight(t, cfg.time_weight);
    b.total = base + b.weight * (cfg.lambda_real * real + cfg.lambda_cons * cons +
                                 cfg.lambda_order * order);
    return b;
}

double clip_global_norm(ParamStore& model, ParamStore& head, double max_norm) {
    const double norm = std::sqrt(model.grad_sq_sum() + head.grad_sq_sum());
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        model.scale_grad(s);
        head.scale_grad(s);
    }
    return norm;
}

void EmaState::init(const ParamStore& model, const ParamStore& head) {
    model_shadow.clear();
    head_shadow.clear();
    for (const auto& p : model.all()) model_shadow.insert(model_shadow.end(), p.w.begin(), p.w.end());
    for (const auto& p : head.all()) head_shadow.insert(head_shadow.end(), p.w.begin(), p.w.end());
}

void EmaState::update(const ParamStore& model, const ParamStore& head, double decay) {
    std::size_t k = 0;
    for (const auto& p : model.all())
        for (double w : p.w) {
            model_shadow[k] = decay * model_shadow[k] + (1.0 - decay) * w;
            ++k;
        }
    k = 0;
    for (const auto& p : head.all())
        for (double w : p.w) {
            head_shadow[k] = decay * head_shadow[k] + (1.0 - decay) * w;
            ++k;
        }
}

void EmaState::copy_to(ParamStore& model, ParamStore& head) const {
    std::size_t k = 0;
    for (auto& p : model.all())
        for (double& w : p.w) w = model_shadow[k++];
    k = 0;
    for (auto& p : head.all())
        for (double& w : p.w) w = head_shadow[k++];
}

AdamW::AdamW(const ParamStore& model, const ParamStore& head, const TrainConfig& cfg)
    : cfg_(cfg) {
    m_model_.assign(model.total_size(), 0.0);
    v_model_.assign(model.total_size(), 0.0);
    m_head_.assign(head.total_size(), 0.0);
    v_head_.assign(head.total_size(), 0.0);
}

void AdamW::apply(ParamStore& store, std::vector<double>& m, std::vector<double>& v, double lr) {
    constexpr double eps = 1e-8;
    const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& p : store.all()) {
        for (std::size_t i = 0; i < p.w.size(); ++i, ++k) {
            const double g = p.g[i];
            m[k] = cfg_.adam_beta1 * m[k] + (1.0 - cfg_.adam_beta1) * g;
            v[k] = cfg_.adam_beta2 * v[k] + (1.0 - cfg_.adam_beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + cfg_.weight_decay * p.w[i]);
        }
    }
}

void AdamW::step(ParamStore& model, ParamStore& head) {
    ++t_;
    apply(model, m_model_, v_model_, cfg_.lr_backbone);
    apply(head, m_head_, v_head_, cfg_.lr_event);
}

Trainer::Trainer(MicroDiT& model, EventHead& head, const LossConfig& loss_cfg,
                 const TrainConfig& train_cfg)
    : model_(model),
      head_(head),
      loss_cfg_(loss_cfg),
      train_cfg_(train_cfg),
      opt_(model.params, head.params, train_cfg),
      rng_(train_cfg.seed) {
    loss_cfg_.validate();
    train_cfg_.validate();
    ema_.init(model.params, head.params);
}

namespace {

void check_finite(double x, const char* term) {
    if (!std::isfinite(x)) {
        throw TrainingError(std::string("non-finite ") + term + " loss");
    }
}

}  // namespace

LossBreakdown sample_loss_forward(const MicroDiT& model, const EventHead& head,
                                  const LatentVideo& z1, const Conditioning& y,
                                  const FixedSampleDraw& draw, const LossConfig& cfg) {
    const DiTConfig& mc = model.cfg;
    const TokenGrid grid = mc.grid();
    FlowSample fs = interpolate(*draw.z0, z1, draw.t);
    DiTOutput out1 = dit_forward(model, fs.z_t, y, draw.t);
    TokenField delta1 = tokenize(out1.v_hat, mc.patch);
    const double base = loss_base(out1.v_hat, *draw.z0, z1);

    if (!cfg.event_pathway_enabled) {
        return loss_total(base, 0.0, 0.0, 0.0, draw.t, cfg);
    }

    std::vector<double> a1(grid.count(), 0.0);
    ActivityMap a_raw1 = event_head_forward(head, out1.final_tokens, draw.t);
    if (!draw.dropped) {
        a1 = smooth_activity(a_raw1, grid, cfg.use_smoothed_activity_in_losses).values;
    }
    const double real = loss_real(a1, delta1.m);

    double cons = 0.0;
    if (cfg.lambda_cons > 0.0) {
        FlowSample fs2 = interpolate(*draw.z0, z1, draw.t2);
        DiTOutput out2 = dit_forward(model, fs2.z_t, y, draw.t2);
        TokenField delta2 = tokenize(out2.v_hat, mc.patch);
        std::vector<double> a2(grid.count(), 0.0);
        ActivityMap a_raw2 = event_head_forward(head, out2.final_tokens, draw.t2);
        if (!draw.dropped) {
            a2 = smooth_activity(a_raw2, grid, cfg.use_smoothed_activity_in_losses).values;
        }
        cons = loss_cons(a1, delta1.m, a2, delta2.m);
    }
    const double order = loss_order(a1, delta1.m, cfg.tau_on, cfg.tau_off);
    return loss_total(base, real, cons, order, draw.t, cfg);
}

LossBreakdown sample_loss_backward(MicroDiT& model, EventHead& head, const LatentVideo& z1,
                                   const Conditioning& y, const FixedSampleDraw& draw,
                                   const LossConfig& cfg, double grad_scale) {
    const DiTConfig& mc = model.cfg;
    const TokenGrid grid = mc.grid();
    const int n_tok = grid.count();
    const int tok_dim = mc.token_dim();
    const double inv_nd = 1.0 / (static_cast<double>(n_tok) * tok_dim);

    FlowSample fs = interpolate(*draw.z0, z1, draw.t);
    DiTTrace trace1;
    DiTOutput out1 = dit_forward(model, fs.z_t, y, draw.t, &trace1);
    TokenField delta1 = tokenize(out1.v_hat, mc.patch);

    const double base = loss_base(out1.v_hat, *draw.z0, z1);
    check_finite(base, "base");

    LatentVideo d_vhat1(mc.t, mc.h, mc.w, mc.c);
    {
        const double scale = grad_scale * 2.0 / fs.v_t.size();
        for (std::size_t i = 0; i < d_vhat1.data().size(); ++i) {
            d_vhat1.data()[i] = scale * (out1.v_hat.data()[i] - fs.v_t.data()[i]);
        }
    }

    if (!cfg.event_pathway_enabled) {
        dit_backward(model, trace1, nullptr, &d_vhat1);
        return loss_total(base, 0.0, 0.0, 0.0, draw.t, cfg);
    }

    const double w_t = time_weight(draw.t, cfg.time_weight);

    HeadTrace htrace1;
    ActivityMap a_raw1 = event_head_forward(head, out1.final_tokens, draw.t, &htrace1);
    std::vector<double> a1(n_tok, 0.0);
    if (!draw.dropped) {
        a1 = smooth_activity(a_raw1, grid, cfg.use_smoothed_activity_in_losses).values;
    }

    const double real = loss_real(a1, delta1.m);
    check_finite(real, "realization");

    DiTTrace trace2;
    HeadTrace htrace2;
    TokenField delta2;
    std::vector<double> a2(n_tok, 0.0);
    double cons = 0.0;
    bool have_branch2 = false;
    if (cfg.lambda_cons > 0.0) {
        FlowSample fs2 = interpolate(*draw.z0, z1, draw.t2);
        DiTOutput out2 = dit_forward(model, fs2.z_t, y, draw.t2, &trace2);
        delta2 = tokenize(out2.v_hat, mc.patch);
        ActivityMap a_raw2 = event_head_forward(head, out2.final_tokens, draw.t2, &htrace2);
        if (!draw.dropped) {
            a2 = smooth_activity(a_raw2, grid, cfg.use_smoothed_activity_in_losses).values;
        }
        cons = loss_cons(a1, delta1.m, a2, delta2.m);
        check_finite(cons, "consistency");
        have_branch2 = true;
    }

    const double order = loss_order(a1, delta1.m, cfg.tau_on, cfg.tau_off);
    check_finite(order, "ordering");

    LossBreakdown part = loss_total(base, real, cons, order, draw.t, cfg);
    check_finite(part.total, "total");

    // ---- gradient assembly in the token domain ----
    Mat d_delta1(n_tok, tok_dim);
    std::vector<double> d_a1(n_tok, 0.0);

    // realization: d/d delta = 2 (1-a)^2 delta / ND; d/d a_i = -2(1-a_i) sum_c delta^2 / ND
    {
        const double c = 2.0 * inv_nd * w_t * cfg.lambda_real * grad_scale;
        for (int i = 0; i < n_tok; ++i) {
            const double gap = 1.0 - a1[i];
            const double* dr = delta1.m.row(i);
            double* gr = d_delta1.row(i);
            double sq = 0.0;
            for (int j = 0; j < tok_dim; ++j) {
                gr[j] += c * gap * gap * dr[j];
                sq += dr[j] * dr[j];
            }
            d_a1[i] += -c * gap * sq;
        }
    }

    // ordering: indicators are flat in a; gradient through delta only
    {
        const double c = 2.0 * inv_nd * w_t * cfg.lambda_order * grad_scale;
        for (int i = 0; i < n_tok; ++i) {
            const double ind =
                (a1[i] < cfg.tau_on ? 1.0 : 0.0) + (a1[i] < cfg.tau_off ? 1.0 : 0.0);
            if (ind == 0.0) continue;
            const double* dr = delta1.m.row(i);
            double* gr = d_delta1.row(i);
            for (int j = 0; j < tok_dim; ++j) gr[j] += c * ind * dr[j];
        }
    }

    // consistency: r = a1 d1 - a2 d2; both forwards receive gradients
    Mat d_delta2;
    std::vector<double> d_a2;
    if (have_branch2) {
        d_delta2 = Mat(n_tok, tok_dim);
        d_a2.assign(n_tok, 0.0);
        const double c = 2.0 * inv_nd * w_t * cfg.lambda_cons * grad_scale;
        for (int i = 0; i < n_tok; ++i) {
            const double* r1 = delta1.m.row(i);
            const double* r2 = delta2.m.row(i);
            double* g1 = d_delta1.row(i);
            double* g2 = d_delta2.row(i);
            double ra1 = 0.0, ra2 = 0.0;
            for (int j = 0; j < tok_dim; ++j) {
                const double r = a1[i] * r1[j] - a2[i] * r2[j];
                g1[j] += c * r * a1[i];
                g2[j] += -c * r * a2[i];
                ra1 += r * r1[j];
                ra2 += r * r2[j];
            }
            d_a1[i] += c * ra1;
            d_a2[i] += -c * ra2;
        }
    }

    // push token-domain gradients back through Tok (a permutation)
    {
        LatentVideo d_from_tok = untokenize_like(d_delta1, delta1);
        for (std::size_t i = 0; i < d_vhat1.data().size(); ++i) {
            d_vhat1.data()[i] += d_from_tok.data()[i];
        }
    }

    Mat d_tokens1;
    bool have_head_grad1 = false;
    if (!draw.dropped) {
        std::vector<double> d_a_raw1 =
            smooth_activity_adjoint(d_a1, grid, cfg.use_smoothed_activity_in_losses);
        d_tokens1 = event_head_backward(head, htrace1, d_a_raw1);
        have_head_grad1 = true;
    }
    dit_backward(model, trace1, have_head_grad1 ? &d_tokens1 : nullptr, &d_vhat1);

    if (have_branch2) {
        LatentVideo d_vhat2 = untokenize_like(d_delta2, delta2);
        Mat d_tokens2;
        bool have_head_grad2 = false;
        if (!draw.dropped) {
            std::vector<double> d_a_raw2 =
                smooth_activity_adjoint(d_a2, grid, cfg.use_smoothed_activity_in_losses);
            d_tokens2 = event_head_backward(head, htrace2, d_a_raw2);
            have_head_grad2 = true;
        }
        dit_backward(model, trace2, have_head_grad2 ? &d_tokens2 : nullptr, &d_vhat2);
    }
    return part;
}

LossBreakdown Trainer::step(const std::vector<TrainSample>& batch) {
    if (batch.empty()) throw ConfigError("train step needs a non-empty batch");
    const DiTConfig& mc = model_.cfg;

    model_.params.zero_grad();
    head_.params.zero_grad();

    const bool event_on = loss_cfg_.event_pathway_enabled;
    const double inv_b = 1.0 / batch.size();
    LossBreakdown acc;

    for (const TrainSample& sample : batch) {
        FixedSampleDraw draw;
        LatentVideo z0 = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, rng_);
        draw.z0 = &z0;
        draw.t = rng_.uniform();
        draw.t2 = draw.t;
        draw.dropped = false;
        if (event_on) {
            draw.dropped = rng_.uniform() < loss_cfg_.p_event_dropout;
            const double jitter =
                rng_.uniform(-loss_cfg_.delta_jitter, loss_cfg_.delta_jitter);
            draw.t2 = std::min(1.0, std::max(0.0, draw.t + jitter));
        }

        LossBreakdown part;
        try {
            part = sample_loss_backward(model_, head_, *sample.z1, *sample.y, draw, loss_cfg_,
                                        inv_b);
        } catch (const TrainingError& e) {
            throw TrainingError(std::string(e.what()) + " at step " +
                                std::to_string(opt_.steps_taken()));
        }
        acc.base += part.base;
        acc.real += part.real;
        acc.cons += part.cons;
        acc.order += part.order;
        acc.weight += part.weight;
        acc.total += part.total;
    }

    acc.base *= inv_b;
    acc.real *= inv_b;
    acc.cons *= inv_b;
    acc.order *= inv_b;
    acc.weight *= inv_b;
    acc.total *= inv_b;

    acc.grad_norm = clip_global_norm(model_.params, head_.params, train_cfg_.grad_clip);
    opt_.step(model_.params, head_.params);
    ema_.update(model_.params, head_.params, train_cfg_.ema_decay);
    return acc;
}

}  // namespace evd
