#include <doctest.h>

#include <cmath>

#include "evd/metrics.hpp"
#include "evd/rng.hpp"
#include "evd/sampling.hpp"

using namespace evd;

namespace {

DiTConfig micro() {
    DiTConfig c;
    c.t = 4;
    c.h = 4;
    c.w = 4;
    c.c = 2;
    c.patch = PatchSpec{2, 2, 2};
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
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("cfg_combine identities") {
    Rng rng(1);
    const LatentVideo a = LatentVideo::gaussian(2, 2, 2, 1, rng);
    const LatentVideo b = LatentVideo::gaussian(2, 2, 2, 1, rng);

    const LatentVideo w0 = cfg_combine(a, b, 0.0);
    CHECK(value_equal(w0, a));

    const LatentVideo same = cfg_combine(a, a, 7.3);
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        CHECK(same.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-12));
    }

    // scalar probe: w = 4, cond = 1, uncond = 0 -> 5
    LatentVideo ones(1, 1, 1, 1), zeros(1, 1, 1, 1);
    ones.data()[0] = 1.0;
    const LatentVideo probe = cfg_combine(ones, zeros, 4.0);
    CHECK(probe.data()[0] == 5.0);

    LatentVideo wrong(1, 1, 2, 1);
    CHECK_THROWS_AS(cfg_combine(ones, wrong, 1.0), ShapeError);
}

TEST_CASE("solver steps with a constant field") {
    LatentVideo z(1, 1, 1, 1);
    z.data()[0] = 2.0;
    LatentVideo c(1, 1, 1, 1);
    c.data()[0] = 3.0;
    auto constant = [&](const LatentVideo&, double) { return c; };

    const LatentVideo euler = solver_step(z, constant, 0.0, 0.25, SamplerConfig::Solver::euler);
    CHECK(euler.data()[0] == doctest::Approx(2.75).epsilon(1e-15));

    const LatentVideo heun = solver_step(z, constant, 0.0, 0.25, SamplerConfig::Solver::heun);
    CHECK(heun.data()[0] == doctest::Approx(euler.data()[0]).epsilon(1e-15));

    CHECK_THROWS_AS(solver_step(z, constant, 0.5, 0.5, SamplerConfig::Solver::euler), ConfigError);
    CHECK_THROWS_AS(solver_step(z, constant, 0.5, 0.4, SamplerConfig::Solver::euler), ConfigError);
}

TEST_CASE("oracle field lands exactly on the clean latent for any step count") {
    Rng rng(2);
    const LatentVideo z0 = LatentVideo::gaussian(2, 4, 4, 2, rng);
    const LatentVideo z1 = LatentVideo::gaussian(2, 4, 4, 2, rng);
    const OracleField oracle(z0, z1, PatchSpec{1, 2, 2});
    auto provider = [&](const LatentVideo& z, double t) {
        return oracle.forward(z, Conditioning::null(1), t).v_hat;
    };
    for (int k : {1, 4, 50}) {
        for (auto mode : {SamplerConfig::Solver::euler, SamplerConfig::Solver::heun}) {
            const TimeGrid grid = uniform_time_grid(k);
            LatentVideo z = z0;
            for (int i = 0; i < k; ++i) {
                z = solver_step(z, provider, grid.points[i], grid.points[i + 1], mode);
            }
            double max_err = 0.0;
            for (std::size_t i = 0; i < z.data().size(); ++i) {
                max_err = std::max(max_err, std::abs(z.data()[i] - z1.data()[i]));
            }
            CHECK(max_err < 1e-10);
        }
    }
}

TEST_CASE("sampling is deterministic given seed, config, parameters") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 5);
    DiTField field(model);
    Conditioning y;
    y.embedding = {0.2, -0.1, 0.4, 0.3};
    SamplerConfig cfg;
    cfg.steps = 6;
    const SampleSpace space = SampleSpace::from(model.cfg);
    const SampleResult a = sample(field, &head, y, cfg, 1234, space);
    const SampleResult b = sample(field, &head, y, cfg, 1234, space);
    REQUIRE(a.trajectory.latents.size() == b.trajectory.latents.size());
    for (std::size_t i = 0; i < a.trajectory.latents.size(); ++i) {
        CHECK(value_equal(a.trajectory.latents[i], b.trajectory.latents[i]));
    }
    const SampleResult c = sample(field, &head, y, cfg, 1235, space);
    CHECK(!value_equal(a.final_latent, c.final_latent));
}

TEST_CASE("trajectory records K+1 latents and K gate entries") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 6);
    DiTField field(model);
    SamplerConfig cfg;
    cfg.steps = 7;
    const SampleResult r = sample(field, &head, Conditioning::null(4), cfg, 3,
                                  SampleSpace::from(model.cfg));
    CHECK(r.trajectory.latents.size() == 8);
    CHECK(r.trajectory.gates.size() == 7);
    CHECK(r.trajectory.activities.size() == 7);
}

TEST_CASE("gating disabled is bit-identical to a forced-zero schedule") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 7);
    DiTField field(model);
    Conditioning y;
    y.embedding = {0.5, 0.1, -0.2, 0.0};
    const SampleSpace space = SampleSpace::from(model.cfg);
    for (uint64_t seed = 0; seed < 5; ++seed) {
        for (auto solver : {SamplerConfig::Solver::euler, SamplerConfig::Solver::heun}) {
            SamplerConfig off;
            off.steps = 5;
            off.solver = solver;
            off.gating_enabled = false;
            SamplerConfig rho0 = off;
            rho0.gating_enabled = true;
            rho0.schedule_mode = SamplerConfig::ScheduleMode::constant;
            rho0.schedule_const = 0.0;
            const SampleResult a = sample(field, &head, y, off, seed, space);
            const SampleResult b = sample(field, &head, y, rho0, seed, space);
            for (std::size_t i = 0; i < a.trajectory.latents.size(); ++i) {
                CHECK(value_equal(a.trajectory.latents[i], b.trajectory.latents[i]));
            }
        }
    }
}

TEST_CASE("backbone evaluation counts: 2 per euler step, 4 per heun step") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 8);
    DiTField field(model);
    SamplerConfig cfg;
    cfg.steps = 9;
    const SampleSpace space = SampleSpace::from(model.cfg);
    const SampleResult e = sample(field, &head, Conditioning::null(4), cfg, 1, space);
    CHECK(e.trajectory.backbone_evals == 2 * 9);
    cfg.solver = SamplerConfig::Solver::heun;
    const SampleResult h = sample(field, &head, Conditioning::null(4), cfg, 1, space);
    CHECK(h.trajectory.backbone_evals == 4 * 9);
}

TEST_CASE("a zero-impact head freezes the latent until the anneal region") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_zero_impact(model, head, 9);
    // give the backbone a non-zero field while keeping the head silent
    Rng wr(10);
    for (double& w : model.params.at("out.w").w) w = 0.1 * wr.normal();
    DiTField field(model);
    SamplerConfig cfg;
    cfg.steps = 10;  // t_k = k/10; anneal opens for t > 0.6
    const SampleSpace space = SampleSpace::from(model.cfg);
    const SampleResult r = sample(field, &head, Conditioning::null(4), cfg, 77, space);

    const TimeGrid grid = uniform_time_grid(cfg.steps);
    bool any_late_motion = false;
    for (int k = 0; k < cfg.steps; ++k) {
        const bool frozen =
            value_equal(r.trajectory.latents[k], r.trajectory.latents[k + 1]);
        if (grid.points[k] <= 0.6 + 1e-12) {
            CHECK(frozen);  // gate exactly zero: sigma(-6) activity, bin stays 0, rho = 1
        } else {
            any_late_motion |= !frozen;
        }
    }
    CHECK(any_late_motion);
}

TEST_CASE("an all-ones gate with the oracle field still lands on z1") {
    Rng rng(11);
    const DiTConfig mc = micro();
    const LatentVideo z1 = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, rng);

    // run the full sampler but substitute the oracle for the backbone
    class WrappedOracle : public VelocityField {
    public:
        WrappedOracle(const LatentVideo& z0, const LatentVideo& z1, const PatchSpec& spec)
            : oracle_(z0, z1, spec) {}
        FieldEval forward(const LatentVideo& z, const Conditioning& y, double t) const override {
            return oracle_.forward(z, y, t);
        }
        int feature_dim() const override { return oracle_.feature_dim(); }

    private:
        OracleField oracle_;
    };

    // the sampler draws z0 from the seed; reproduce it to build the oracle
    const SampleSpace space = SampleSpace::from(mc);
    Rng noise(42);
    const LatentVideo z0 = LatentVideo::gaussian(space.t, space.h, space.w, space.c, noise);
    WrappedOracle field(z0, z1, mc.patch);

    EventHeadConfig hc;
    hc.feature_dim = mc.patch.p_t * mc.patch.p_h * mc.patch.p_w * mc.c;
    hc.time_dim = 8;
    EventHead head(hc);

    SamplerConfig cfg;
    cfg.steps = 12;
    cfg.gating_enabled = true;
    cfg.schedule_mode = SamplerConfig::ScheduleMode::constant;
    cfg.schedule_const = 0.0;  // gate blended to all-ones
    const SampleResult r = sample(field, &head, Conditioning::null(4), cfg, 42, space);
    double max_err = 0.0;
    for (std::size_t i = 0; i < z1.data().size(); ++i) {
        max_err = std::max(max_err, std::abs(r.final_latent.data()[i] - z1.data()[i]));
    }
    CHECK(max_err < 1e-10);
}

TEST_CASE("frozen-state property: an all-zero gate leaves the latent unchanged") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_zero_impact(model, head, 13);
    Rng wr(14);
    for (double& w : model.params.at("out.w").w) w = 0.1 * wr.normal();
    DiTField field(model);
    SamplerConfig cfg;
    cfg.steps = 5;
    cfg.schedule_mode = SamplerConfig::ScheduleMode::off;  // no blend toward ones
    const SampleSpace space = SampleSpace::from(model.cfg);
    const SampleResult r = sample(field, &head, Conditioning::null(4), cfg, 15, space);
    for (std::size_t k = 0; k + 1 < r.trajectory.latents.size(); ++k) {
        CHECK(value_equal(r.trajectory.latents[k], r.trajectory.latents[k + 1]));
    }
}

TEST_CASE("motion-mask source gates without an event head") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 16);
    DiTField field(model);
    SamplerConfig cfg;
    cfg.steps = 4;
    cfg.activity_source = SamplerConfig::ActivitySource::motion_mask;
    const SampleSpace space = SampleSpace::from(model.cfg);
    const SampleResult r = sample(field, nullptr, Conditioning::null(4), cfg, 17, space);
    CHECK(r.trajectory.latents.size() == 5);
    for (const auto& g : r.trajectory.gates) {
        for (double v : g) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("event-head source requires a head") {
    MicroDiT model(micro());
    DiTField field(model);
    SamplerConfig cfg;
    CHECK_THROWS_AS(sample(field, nullptr, Conditioning::null(4), cfg, 1,
                           SampleSpace::from(model.cfg)),
                    ConfigError);
}

TEST_CASE("batch sampling derives independent per-trajectory seeds") {
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 18);
    DiTField field(model);
    SamplerConfig cfg;
    cfg.steps = 3;
    const SampleSpace space = SampleSpace::from(model.cfg);
    std::vector<Conditioning> ys = {Conditioning::null(4), Conditioning::null(4)};
    const auto results = sample_batch(field, &head, ys, cfg, 7, space);
    REQUIRE(results.size() == 2);
    CHECK(!value_equal(results[0].final_latent, results[1].final_latent));
    // trajectory i reproduces a direct call with the split seed
    const SampleResult direct = sample(field, &head, ys[1], cfg, Rng::split(7, 1), space);
    CHECK(value_equal(results[1].final_latent, direct.final_latent));
}

TEST_CASE("update energy buckets split pre/in/post by the event window") {
    // hand-built trajectory on a (4,2,2,1) latent with patch (2,1,1):
    // token slices cover frames [0,2) and [2,4)
    Trajectory traj;
    LatentVideo z0(4, 2, 2, 1);
    LatentVideo z1(4, 2, 2, 1);
    z1.data() = z0.data();
    // update only in the second slice (frames 2..3)
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w) {
            z1.at(2, h, w, 0) = 2.0;
            z1.at(3, h, w, 0) = 2.0;
        }
    traj.latents = {z0, z1};
    const PatchSpec spec{2, 1, 1};

    // window [2,4): first slice is pre, second is in
    EnergyMetrics em = update_energy(traj, spec, 2, 4);
    CHECK(em.e_pre == 0.0);
    CHECK(em.e_in == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(em.e_post == 0.0);

    // window [0,2): first slice in, second post
    em = update_energy(traj, spec, 0, 2);
    CHECK(em.e_in == 0.0);
    CHECK(em.e_post == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("ungated oracle sampling matches the closed-form update energy") {
    // an ungated oracle field applies dt * (z1 - z0) each step, so the mean
    // squared per-element update in each bucket is mean_k(dt_k^2) times the
    // bucket's mean squared velocity
    Rng rng(21);
    const DiTConfig mc = micro();
    const LatentVideo z1 = LatentVideo::gaussian(mc.t, mc.h, mc.w, mc.c, rng);

    class WrappedOracle : public VelocityField {
    public:
        WrappedOracle(const LatentVideo& z0, const LatentVideo& z1, const PatchSpec& spec)
            : oracle_(z0, z1, spec) {}
        FieldEval forward(const LatentVideo& z, const Conditioning& y, double t) const override {
            return oracle_.forward(z, y, t);
        }
        int feature_dim() const override { return oracle_.feature_dim(); }

    private:
        OracleField oracle_;
    };

    const SampleSpace space = SampleSpace::from(mc);
    Rng noise(77);
    const LatentVideo z0 = LatentVideo::gaussian(space.t, space.h, space.w, space.c, noise);
    WrappedOracle field(z0, z1, mc.patch);

    SamplerConfig cfg;
    cfg.steps = 8;
    cfg.gating_enabled = false;
    const SampleResult r = sample(field, nullptr, Conditioning::null(4), cfg, 77, space);

    const int tau_e = 2, tau_s = 4;  // frame window; patch p_t = 2 splits slices cleanly
    const EnergyMetrics em = update_energy(r.trajectory, mc.patch, tau_e, tau_s);

    // closed form per bucket
    const TokenGrid grid = token_grid(space.t, space.h, space.w, mc.patch);
    const auto phases = classify_tokens(grid, mc.patch, tau_e, tau_s);
    LatentVideo v(space.t, space.h, space.w, space.c);
    for (std::size_t i = 0; i < v.data().size(); ++i) {
        v.data()[i] = z1.data()[i] - z0.data()[i];
    }
    TokenField vtok = tokenize(v, mc.patch);
    double sums[3] = {0, 0, 0};
    long counts[3] = {0, 0, 0};
    for (int i = 0; i < vtok.rows(); ++i) {
        const double* row = vtok.m.row(i);
        double e = 0.0;
        for (int j = 0; j < vtok.cols(); ++j) e += row[j] * row[j];
        sums[static_cast<int>(phases[i])] += e;
        counts[static_cast<int>(phases[i])] += vtok.cols();
    }
    const double dt_sq_mean = 1.0 / (cfg.steps * static_cast<double>(cfg.steps));
    REQUIRE(counts[0] > 0);
    REQUIRE(counts[1] > 0);
    CHECK(em.e_pre == doctest::Approx(dt_sq_mean * sums[0] / counts[0]).epsilon(1e-9));
    CHECK(em.e_in == doctest::Approx(dt_sq_mean * sums[1] / counts[1]).epsilon(1e-9));
    if (counts[2] > 0) {
        CHECK(em.e_post == doctest::Approx(dt_sq_mean * sums[2] / counts[2]).epsilon(1e-9));
    }
}

TEST_CASE("gating differences are observable: full constant gating deviates from ungated") {
    // the bitwise-equivalence oracle has teeth: with a head that emits
    // mid-range activity, constant full-strength gating must not match the
    // ungated run
    MicroDiT model(micro());
    EventHead head(micro_head());
    init_random(model, head, 55, 0.4);
    DiTField field(model);
    const SampleSpace space = SampleSpace::from(model.cfg);
    SamplerConfig off;
    off.steps = 5;
    off.gating_enabled = false;
    SamplerConfig gated = off;
    gated.gating_enabled = true;
    gated.schedule_mode = SamplerConfig::ScheduleMode::constant;
    gated.schedule_const = 1.0;
    const SampleResult a = sample(field, &head, Conditioning::null(4), off, 9, space);
    const SampleResult b = sample(field, &head, Conditioning::null(4), gated, 9, space);
    CHECK(!value_equal(a.final_latent, b.final_latent));
}
