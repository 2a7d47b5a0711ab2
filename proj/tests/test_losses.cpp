#include <doctest.h>

#include <cmath>
#include <limits>

#include "evd/backbone.hpp"
#include "evd/losses.hpp"
#include "evd/rng.hpp"

using namespace evd;

namespace {

DiTConfig micro() {
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

EventHeadConfig micro_head() {
    EventHeadConfig h;
    h.feature_dim = 8;
    h.time_dim = 8;
    h.hidden = 8;
    return h;
}

}  // namespace

TEST_CASE("base loss is zero on the exact target and closed-form on zero field") {
    Rng rng(1);
    const LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 2, rng);
    const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 2, rng);
    LatentVideo v(2, 2, 2, 2);
    for (std::size_t i = 0; i < v.data().size(); ++i) v.data()[i] = z1.data()[i] - z0.data()[i];
    CHECK(loss_base(v, z0, z1) == 0.0);

    LatentVideo zero_field(2, 2, 2, 2);
    LatentVideo zero_noise(2, 2, 2, 2);
    double mean_sq = 0.0;
    for (double x : z1.data()) mean_sq += x * x;
    mean_sq /= z1.size();
    CHECK(loss_base(zero_field, zero_noise, z1) == doctest::Approx(mean_sq).epsilon(1e-15));
}

TEST_CASE("base loss equals a brute-force elementwise reduction") {
    Rng rng(2);
    const LatentVideo z0 = LatentVideo::gaussian(2, 4, 4, 3, rng);
    const LatentVideo z1 = LatentVideo::gaussian(2, 4, 4, 3, rng);
    const LatentVideo v = LatentVideo::gaussian(2, 4, 4, 3, rng);
    double brute = 0.0;
    for (int t = 0; t < 2; ++t)
        for (int h = 0; h < 4; ++h)
            for (int w = 0; w < 4; ++w)
                for (int c = 0; c < 3; ++c) {
                    const double r = v.at(t, h, w, c) - (z1.at(t, h, w, c) - z0.at(t, h, w, c));
                    brute += r * r;
                }
    brute /= v.size();
    CHECK(loss_base(v, z0, z1) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("realization loss masking identities and hand value") {
    Mat delta(4, 1);
    delta.v = {0.0, 2.0, 0.0, 0.0};
    CHECK(loss_real({1.0, 1.0, 1.0, 1.0}, delta) == 0.0);
    const double full = loss_real({0.0, 0.0, 0.0, 0.0}, delta);
    CHECK(full == doctest::Approx(4.0 / 4.0).epsilon(1e-15));  // mean(delta^2)
    // a = 0.5 on the active token: ((1-0.5)*2)^2 / 4 = 0.25
    CHECK(loss_real({1.0, 0.5, 1.0, 1.0}, delta) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("consistency loss identities and hand value") {
    Mat d1(1, 1), d2(1, 1);
    d1.v = {1.0};
    d2.v = {3.0};
    CHECK(loss_cons({1.0}, d1, {1.0}, d1) == 0.0);              // identical operands
    CHECK(loss_cons({0.0}, d1, {0.0}, d2) == 0.0);              // fully masked
    CHECK(loss_cons({1.0}, d1, {1.0}, d2) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("ordering loss indicator structure") {
    Mat delta(2, 2);
    delta.v = {1.0, 2.0, 3.0, 4.0};
    const double mean_sq = (1.0 + 4.0 + 9.0 + 16.0) / 4.0;
    CHECK(loss_order({0.9, 0.9}, delta, 0.62, 0.38) == 0.0);
    CHECK(loss_order({0.1, 0.1}, delta, 0.62, 0.38) ==
          doctest::Approx(2.0 * mean_sq).epsilon(1e-12));
    CHECK(loss_order({0.5, 0.5}, delta, 0.62, 0.38) == doctest::Approx(mean_sq).epsilon(1e-12));
}

TEST_CASE("total loss composition and time weighting") {
    LossConfig cfg;
    SUBCASE("zero lambdas reduce to base") {
        cfg.lambda_real = cfg.lambda_cons = cfg.lambda_order = 0.0;
        const LossBreakdown b = loss_total(1.5, 9.0, 9.0, 9.0, 0.2, cfg);
        CHECK(b.total == 1.5);
    }
    SUBCASE("early branch applies unit weight") {
        const LossBreakdown b = loss_total(1.0, 2.0, 3.0, 4.0, 0.5, cfg);
        CHECK(b.weight == 1.0);
        CHECK(b.total ==
              doctest::Approx(1.0 + 0.12 * 2.0 + 0.08 * 3.0 + 0.03 * 4.0).epsilon(1e-15));
        CHECK(b.total >= b.base);
    }
    SUBCASE("late times scale the auxiliary block by exp(-2.4)") {
        const LossBreakdown b = loss_total(1.0, 2.0, 3.0, 4.0, 1.0, cfg);
        const double aux = 0.12 * 2.0 + 0.08 * 3.0 + 0.03 * 4.0;
        CHECK(b.total == doctest::Approx(1.0 + std::exp(-2.4) * aux).epsilon(1e-12));
    }
}

TEST_CASE("global-norm clip and EMA update arithmetic") {
    MicroDiT model(micro());
    EventHead head(micro_head());

    SUBCASE("below threshold leaves gradients unchanged") {
        model.params.at("embed.w").g[0] = 0.3;
        const double norm = clip_global_norm(model.params, head.params, 0.5);
        CHECK(norm == doctest::Approx(0.3).epsilon(1e-15));
        CHECK(model.params.at("embed.w").g[0] == 0.3);
    }
    SUBCASE("double the threshold scales gradients by one half") {
        model.params.at("embed.w").g[0] = 1.0;  // norm 1.0, clip at 0.5
        const double norm = clip_global_norm(model.params, head.params, 0.5);
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(model.params.at("embed.w").g[0] == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("EMA with decay 1 is frozen; decay 0 tracks parameters") {
        init_random(model, head, 5);
        EmaState ema;
        ema.init(model.params, head.params);
        const double before = ema.model_shadow[0];
        model.params.all()[0].w[0] += 1.0;
        ema.update(model.params, head.params, 1.0);
        CHECK(ema.model_shadow[0] == before);
        ema.update(model.params, head.params, 0.0);
        CHECK(ema.model_shadow[0] == model.params.all()[0].w[0]);
    }
    SUBCASE("EMA recurrence e <- d e + (1-d) p") {
        init_random(model, head, 6);
        EmaState ema;
        ema.init(model.params, head.params);
        const double e0 = ema.model_shadow[0];
        const double p0 = model.params.all()[0].w[0] + 0.7;
        model.params.all()[0].w[0] = p0;
        ema.update(model.params, head.params, 0.9);
        CHECK(ema.model_shadow[0] == doctest::Approx(0.9 * e0 + 0.1 * p0).epsilon(1e-15));
    }
}

TEST_CASE("event dropout zeroes the activity pathway") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 21, 0.2);
    Rng rng(3);
    const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning y;
    y.embedding = {0.1, 0.2, -0.3, 0.4};

    FixedSampleDraw draw;
    draw.z0 = &z0;
    draw.t = 0.4;
    draw.t2 = 0.45;
    draw.dropped = true;

    LossConfig cfg;
    model.params.zero_grad();
    head.params.zero_grad();
    const LossBreakdown b = sample_loss_backward(model, head, z1, y, draw, cfg, 1.0);

    // activity == 0 -> realization equals mean(delta^2) and consistency is masked
    const DiTOutput out = dit_forward(model, interpolate(z0, z1, draw.t).z_t, y, draw.t);
    const TokenField delta = tokenize(out.v_hat, model.cfg.patch);
    double mean_sq = 0.0;
    for (double v : delta.m.v) mean_sq += v * v;
    mean_sq /= delta.m.v.size();
    CHECK(b.real == doctest::Approx(mean_sq).epsilon(1e-12));
    CHECK(b.cons == 0.0);

    // the head receives no gradient from a dropped sample
    for (const auto& p : head.params.all()) {
        for (double g : p.g) CHECK(g == 0.0);
    }
    // the backbone still receives gradients
    double backbone_grad = 0.0;
    for (const auto& p : model.params.all()) {
        for (double g : p.g) backbone_grad += std::abs(g);
    }
    CHECK(backbone_grad > 0.0);
}

TEST_CASE("full objective gradients match central finite differences") {
    const double h = 1e-5;
    double worst = 0.0;
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        MicroDiT model(micro());
        EventHead head(micro_head());
        init_random(model, head, seed, 0.2);
        Rng rng(Rng::split(seed, 3));
        const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
        LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 1, rng);
        Conditioning y;
        y.embedding = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};

        FixedSampleDraw draw;
        draw.z0 = &z0;
        draw.t = 0.3 + 0.4 * rng.uniform();
        draw.t2 = std::min(1.0, std::max(0.0, draw.t + rng.uniform(-0.1, 0.1)));

        LossConfig cfg;
        cfg.p_event_dropout = 0.0;

        model.params.zero_grad();
        head.params.zero_grad();
        sample_loss_backward(model, head, z1, y, draw, cfg, 1.0);

        auto sweep = [&](ParamStore& store) {
            for (auto& p : store.all()) {
                for (std::size_t i = 0; i < p.w.size(); ++i) {
                    const double orig = p.w[i];
                    p.w[i] = orig + h;
                    const double fp = sample_loss_forward(model, head, z1, y, draw, cfg).total;
                    p.w[i] = orig - h;
                    const double fm = sample_loss_forward(model, head, z1, y, draw, cfg).total;
                    p.w[i] = orig;
                    const double fd = (fp - fm) / (2.0 * h);
                    const double an = p.g[i];
                    const double diff = std::abs(fd - an);
                    if (diff < 1e-8) continue;
                    worst = std::max(worst, diff / std::max(std::abs(fd), std::abs(an)));
                }
            }
        };
        sweep(model.params);
        sweep(head.params);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("detached training step equals a hand-rolled flow-matching step bitwise") {
    const DiTConfig mc = micro();
    TrainConfig tc;
    tc.seed = 31;
    tc.batch_size = 2;

    Rng scene_rng(9);
    const LatentVideo z1a = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, scene_rng);
    const LatentVideo z1b = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, scene_rng);
    Conditioning ya, yb;
    ya.embedding = {0.1, 0.2, 0.3, 0.4};
    yb.embedding = {-0.1, 0.0, 0.2, -0.4};

    // path A: Trainer with the event pathway detached and zero lambdas
    MicroDiT model_a(mc);
    EventHead head_a(micro_head());
    init_zero_impact(model_a, head_a, tc.seed);
    LossConfig off;
    off.lambda_real = off.lambda_cons = off.lambda_order = 0.0;
    off.event_pathway_enabled = false;
    Trainer trainer(model_a, head_a, off, tc);
    std::vector<TrainSample> batch = {{&z1a, &ya}, {&z1b, &yb}};
    for (int s = 0; s < 3; ++s) trainer.step(batch);

    // path B: hand-rolled base-only step with the same seeded draws
    MicroDiT model_b(mc);
    EventHead head_b(micro_head());
    init_zero_impact(model_b, head_b, tc.seed);
    AdamW opt(model_b.params, head_b.params, tc);
    EmaState ema;
    ema.init(model_b.params, head_b.params);
    Rng rng(tc.seed);
    for (int s = 0; s < 3; ++s) {
        model_b.params.zero_grad();
        head_b.params.zero_grad();
        for (const TrainSample& sample : batch) {
            const LatentVideo z0 = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, rng);
            const double t = rng.uniform();
            const FlowSample fs = interpolate(z0, *sample.z1, t);
            DiTTrace trace;
            const DiTOutput out = dit_forward(model_b, fs.z_t, *sample.y, t, &trace);
            LatentVideo d_vhat(mc.t, mc.h, mc.w, mc.c);
            const double scale = 2.0 / (fs.v_t.size() * static_cast<double>(batch.size()));
            for (std::size_t i = 0; i < d_vhat.data().size(); ++i) {
                d_vhat.data()[i] = scale * (out.v_hat.data()[i] - fs.v_t.data()[i]);
            }
            dit_backward(model_b, trace, nullptr, &d_vhat);
        }
        clip_global_norm(model_b.params, head_b.params, tc.grad_clip);
        opt.step(model_b.params, head_b.params);
        ema.update(model_b.params, head_b.params, tc.ema_decay);
    }

    for (std::size_t p = 0; p < model_a.params.all().size(); ++p) {
        const auto& pa = model_a.params.all()[p];
        const auto& pb = model_b.params.all()[p];
        for (std::size_t i = 0; i < pa.w.size(); ++i) CHECK(pa.w[i] == pb.w[i]);
    }
}

TEST_CASE("non-finite losses abort with the offending term named") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_zero_impact(model, head, 1);
    LatentVideo z1(2, 2, 2, 1);
    z1.data()[0] = std::numeric_limits<double>::quiet_NaN();
    Conditioning y = Conditioning::null(4);
    TrainConfig tc;
    tc.batch_size = 1;
    LossConfig lc;
    Trainer trainer(model, head, lc, tc);
    std::vector<TrainSample> batch = {{&z1, &y}};
    CHECK_THROWS_WITH_AS(trainer.step(batch), doctest::Contains("base"), TrainingError);
}

TEST_CASE("consistency draw clipping keeps t-prime inside the unit interval") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_zero_impact(model, head, 2);
    Rng rng(10);
    const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning y = Conditioning::null(4);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.seed = 12;
    LossConfig lc;
    lc.delta_jitter = 0.9;  // wide jitter forces clipping at the boundaries
    Trainer trainer(model, head, lc, tc);
    std::vector<TrainSample> batch = {{&z1, &y}, {&z1, &y}, {&z1, &y}, {&z1, &y}};
    // interpolate() throws if any t' escapes [0,1]
    for (int s = 0; s < 25; ++s) CHECK_NOTHROW(trainer.step(batch));
}

TEST_CASE("loss config validation catches inverted thresholds") {
    LossConfig bad;
    bad.tau_on = 0.3;
    bad.tau_off = 0.6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("at zero-impact init the gated pathway contributes nothing to the objective") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_zero_impact(model, head, 77);
    Rng rng(78);
    const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning y;
    y.embedding = {0.2, 0.1, 0.0, -0.3};
    FixedSampleDraw draw;
    draw.z0 = &z0;
    draw.t = 0.37;
    draw.t2 = 0.41;
    LossConfig cfg;
    const LossBreakdown b = sample_loss_forward(model, head, z1, y, draw, cfg);
    // v_hat == 0 exactly, so delta == 0 and every auxiliary term vanishes
    const double base_at_zero = loss_base(LatentVideo(2, 2, 2, 1), z0, z1);
    CHECK(b.base == doctest::Approx(base_at_zero).epsilon(1e-15));
    CHECK(std::abs(b.total - b.base) < 1e-6);
    CHECK(b.real == 0.0);
    CHECK(b.cons == 0.0);
    CHECK(b.order == 0.0);
}

TEST_CASE("loss terms are non-negative and the total dominates the base") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 91, 0.3);
    Rng rng(92);
    LossConfig cfg;
    cfg.p_event_dropout = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
        LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 1, rng);
        Conditioning y;
        y.embedding = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        FixedSampleDraw draw;
        draw.z0 = &z0;
        draw.t = rng.uniform();
        draw.t2 = std::min(1.0, std::max(0.0, draw.t + rng.uniform(-0.1, 0.1)));
        const LossBreakdown b = sample_loss_forward(model, head, z1, y, draw, cfg);
        CHECK(b.base >= 0.0);
        CHECK(b.real >= 0.0);
        CHECK(b.cons >= 0.0);
        CHECK(b.order >= 0.0);
        CHECK(b.total >= b.base);
    }
}

TEST_CASE("zero jitter makes the consistency term vanish exactly") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 93, 0.3);
    Rng rng(94);
    const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning y = Conditioning::null(4);
    FixedSampleDraw draw;
    draw.z0 = &z0;
    draw.t = 0.52;
    draw.t2 = 0.52;  // t' == t: both forwards are identical and deterministic
    LossConfig cfg;
    const LossBreakdown b = sample_loss_forward(model, head, z1, y, draw, cfg);
    CHECK(b.cons == 0.0);
}
