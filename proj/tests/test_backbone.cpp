#include <doctest.h>

#include <cmath>

#include "evd/backbone.hpp"
#include "evd/losses.hpp"
#include "evd/rng.hpp"
#include "evd/sampling.hpp"

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

bool value_equal(const LatentVideo& a, const LatentVideo& b) {
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("all-zero parameters produce a zero velocity field") {
    MicroDiT model(micro());  // stores start zeroed
    Rng rng(1);
    const LatentVideo z = LatentVideo::gaussian(2, 2, 2, 1, rng);
    const DiTOutput out = dit_forward(model, z, Conditioning::null(4), 0.3);
    for (double v : out.v_hat.data()) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic given parameters and inputs") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 42);
    Rng rng(2);
    const LatentVideo z = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning y;
    y.embedding = {0.1, -0.2, 0.3, 0.4};
    const DiTOutput a = dit_forward(model, z, y, 0.7);
    const DiTOutput b = dit_forward(model, z, y, 0.7);
    CHECK(value_equal(a.v_hat, b.v_hat));
    for (std::size_t i = 0; i < a.final_tokens.v.size(); ++i) {
        CHECK(a.final_tokens.v[i] == b.final_tokens.v[i]);
    }
}

TEST_CASE("null conditioning equals an explicit zero embedding bitwise") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 7);
    Rng rng(3);
    const LatentVideo z = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning zero;
    zero.embedding.assign(4, 0.0);
    zero.is_null = false;
    const DiTOutput a = dit_forward(model, z, Conditioning::null(4), 0.5);
    const DiTOutput b = dit_forward(model, z, zero, 0.5);
    CHECK(value_equal(a.v_hat, b.v_hat));
}

TEST_CASE("shape mismatches are rejected") {
    MicroDiT model(micro());
    LatentVideo wrong(2, 4, 2, 1);
    CHECK_THROWS_AS(dit_forward(model, wrong, Conditioning::null(4), 0.5), ShapeError);
    Rng rng(4);
    const LatentVideo z = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning bad;
    bad.embedding = {0.0, 0.0};
    CHECK_THROWS_AS(dit_forward(model, z, bad, 0.5), ShapeError);
}

TEST_CASE("analytic gradient of the field norm matches central differences") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 11, 0.2);
    Rng rng(5);
    const LatentVideo z = LatentVideo::gaussian(2, 2, 2, 1, rng);
    Conditioning y;
    y.embedding = {0.3, -0.1, 0.2, 0.5};
    const double t = 0.42;

    // loss = sum(v_hat^2); d loss / d v_hat = 2 v_hat
    auto loss_of = [&]() {
        const DiTOutput out = dit_forward(model, z, y, t);
        double s = 0.0;
        for (double v : out.v_hat.data()) s += v * v;
        return s;
    };

    DiTTrace trace;
    const DiTOutput out = dit_forward(model, z, y, t, &trace);
    LatentVideo d_vhat(2, 2, 2, 1);
    for (std::size_t i = 0; i < d_vhat.data().size(); ++i) {
        d_vhat.data()[i] = 2.0 * out.v_hat.data()[i];
    }
    model.params.zero_grad();
    dit_backward(model, trace, nullptr, &d_vhat);

    const double h = 1e-5;
    double worst = 0.0;
    for (auto& p : model.params.all()) {
        for (std::size_t i = 0; i < p.w.size(); ++i) {
            const double orig = p.w[i];
            p.w[i] = orig + h;
            const double fp = loss_of();
            p.w[i] = orig - h;
            const double fm = loss_of();
            p.w[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = p.g[i];
            const double diff = std::abs(fd - an);
            if (diff < 1e-8) continue;
            worst = std::max(worst, diff / std::max(std::abs(fd), std::abs(an)));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("event head logistic values at fixed logits") {
    EventHead head(micro_head());  // all-zero params: logits 0
    Mat tokens(6, 8);
    Rng rng(6);
    for (double& v : tokens.v) v = rng.normal();

    ActivityMap a = event_head_forward(head, tokens, 0.5);
    for (double v : a.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

    head.params.at("head.b2").w[0] = -6.0;
    a = event_head_forward(head, tokens, 0.5);
    const double sig_m6 = 1.0 / (1.0 + std::exp(6.0));
    for (double v : a.values) CHECK(v == doctest::Approx(sig_m6).epsilon(1e-12));

    head.params.at("head.b2").w[0] = 6.0;
    a = event_head_forward(head, tokens, 0.5);
    const double sig_p6 = 1.0 / (1.0 + std::exp(-6.0));
    for (double v : a.values) CHECK(v == doctest::Approx(sig_p6).epsilon(1e-12));
}

TEST_CASE("event head rejects mismatched token width") {
    EventHead head(micro_head());
    Mat tokens(4, 5);
    CHECK_THROWS_AS(event_head_forward(head, tokens, 0.5), ShapeError);
}

TEST_CASE("zero-impact init silences field and activity") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_zero_impact(model, head, 123);
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const LatentVideo z = LatentVideo::gaussian(2, 2, 2, 1, rng);
        Conditioning y;
        y.embedding = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        const double t = rng.uniform();
        const DiTOutput out = dit_forward(model, z, y, t);
        for (double v : out.v_hat.data()) CHECK(v == 0.0);
        const ActivityMap a = event_head_forward(head, out.final_tokens, t);
        for (double v : a.values) CHECK(v < 0.003);
    }
}

TEST_CASE("zero-impact init is reproducible from the seed") {
    MicroDiT m1(micro()), m2(micro());
    EventHead h1(micro_head()), h2(micro_head());
    init_zero_impact(m1, h1, 99);
    init_zero_impact(m2, h2, 99);
    for (std::size_t p = 0; p < m1.params.all().size(); ++p) {
        const auto& a = m1.params.all()[p];
        const auto& b = m2.params.all()[p];
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.w[i] == b.w[i]);
    }
    MicroDiT m3(micro());
    EventHead h3(micro_head());
    init_zero_impact(m3, h3, 100);
    bool any_diff = false;
    for (std::size_t i = 0; i < m1.params.at("embed.w").size(); ++i) {
        any_diff |= m1.params.at("embed.w").w[i] != m3.params.at("embed.w").w[i];
    }
    CHECK(any_diff);
}

TEST_CASE("oracle field realizes the exact velocity target") {
    Rng rng(8);
    const LatentVideo z0 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    const LatentVideo z1 = LatentVideo::gaussian(2, 2, 2, 1, rng);
    const OracleField oracle(z0, z1, PatchSpec{1, 1, 1});

    const FieldEval e = oracle.forward(z0, Conditioning::null(4), 0.2);
    CHECK(loss_base(e.v_hat, z0, z1) == 0.0);

    // CFG self-combination returns the field unchanged
    const LatentVideo combined = cfg_combine(e.v_hat, e.v_hat, 4.0);
    for (std::size_t i = 0; i < combined.data().size(); ++i) {
        CHECK(combined.data()[i] == doctest::Approx(e.v_hat.data()[i]).epsilon(1e-12));
    }

    // final tokens are the tokenized field
    const TokenField tok = tokenize(e.v_hat, PatchSpec{1, 1, 1});
    for (std::size_t i = 0; i < tok.m.v.size(); ++i) CHECK(e.final_tokens.v[i] == tok.m.v[i]);
}

TEST_CASE("time embedding requires an even width") {
    CHECK_THROWS_AS(time_embedding(0.5, 7), ConfigError);
    const auto e = time_embedding(0.25, 8);
    CHECK(e.size() == 8);
    for (double v : e) CHECK(std::isfinite(v));
}
