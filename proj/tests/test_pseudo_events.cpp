#include <doctest.h>

#include <cmath>
#include <set>

#include "evd/pseudo_events.hpp"
#include "evd/rng.hpp"
#include "evd/scene.hpp"

using namespace evd;

TEST_CASE("static clips have zero change magnitude") {
    LatentVideo z(4, 4, 4, 2);
    for (double& v : z.data()) v = 1.5;
    const Mat m = latent_change_magnitude(z, PatchSpec{1, 1, 1});
    CHECK(m.rows == 3);
    for (double v : m.v) CHECK(v == 0.0);

    LatentVideo single(1, 4, 4, 2);
    CHECK_THROWS_AS(latent_change_magnitude(single, PatchSpec{1, 1, 1}), ShapeError);
}

TEST_CASE("a +2 change in every channel of one token gives magnitude 2") {
    LatentVideo z(2, 2, 2, 3);
    for (int c = 0; c < 3; ++c) z.at(1, 0, 1, c) = 2.0;
    const Mat m = latent_change_magnitude(z, PatchSpec{1, 1, 1});
    CHECK(m.at(0, 1) == doctest::Approx(2.0).epsilon(1e-15));
    for (int i = 0; i < m.cols; ++i) {
        if (i != 1) CHECK(m.at(0, i) == 0.0);
    }
}

TEST_CASE("magnitudes are invariant to the sign of change") {
    LatentVideo up(2, 2, 2, 1), down(2, 2, 2, 1);
    up.at(1, 0, 0, 0) = 3.0;
    down.at(1, 0, 0, 0) = -3.0;
    const Mat mu = latent_change_magnitude(up, PatchSpec{1, 1, 1});
    const Mat md = latent_change_magnitude(down, PatchSpec{1, 1, 1});
    for (std::size_t i = 0; i < mu.v.size(); ++i) CHECK(mu.v[i] == md.v[i]);
}

TEST_CASE("camera suppression removes frame-constant magnitude exactly") {
    Mat m(2, 8);
    for (int i = 0; i < 8; ++i) m.at(0, i) = 0.7;  // uniform drift
    m.at(1, 0) = 8.0;                              // one active token among zeros
    const Mat s = suppress_camera(m);
    for (int i = 0; i < 8; ++i) CHECK(s.at(0, i) == 0.0);
    CHECK(s.at(1, 0) == doctest::Approx(7.0).epsilon(1e-15));  // 8 - mean(8/8)
    for (int i = 1; i < 8; ++i) CHECK(s.at(1, i) == 0.0);
}

TEST_CASE("camera suppression is invariant to per-frame constant shifts") {
    Rng rng(3);
    Mat m(3, 6);
    for (double& v : m.v) v = std::abs(rng.normal());
    Mat shifted = m;
    const double shifts[3] = {0.4, 1.3, 0.0};
    for (int tau = 0; tau < 3; ++tau)
        for (int i = 0; i < 6; ++i) shifted.at(tau, i) += shifts[tau];
    const Mat a = suppress_camera(m);
    const Mat b = suppress_camera(shifted);
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("activity target is a centered logistic in the magnitude") {
    PseudoTargetConfig cfg;
    cfg.mu_mode = PseudoTargetConfig::MuMode::fixed;
    cfg.mu_fixed = 0.3;
    cfg.softness = 0.1;
    Mat m(1, 3);
    m.v = {0.3, 0.3 + 3 * 0.1, 0.0};
    const Mat a = activity_target(m, cfg);
    CHECK(a.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a.at(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-12));
    // monotone: larger magnitude never lowers activity
    CHECK(a.at(0, 1) > a.at(0, 0));
    CHECK(a.at(0, 0) > a.at(0, 2));
}

TEST_CASE("median location parameter is the per-frame median") {
    PseudoTargetConfig cfg;  // median mode
    cfg.softness = 0.05;
    Mat m(1, 5);
    m.v = {0.0, 0.1, 0.2, 0.3, 0.4};
    const Mat a = activity_target(m, cfg);
    CHECK(a.at(0, 2) == doctest::Approx(0.5).epsilon(1e-12));  // the median token
}

TEST_CASE("phase target accumulates activity mass") {
    SUBCASE("all activity in the first frame saturates immediately") {
        Mat a(3, 2);
        a.v = {1.0, 1.0, 0.0, 0.0, 0.0, 0.0};
        const auto p = phase_target(a, 1e-9);
        CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(p[1] == doctest::Approx(p[0]).epsilon(1e-15));
        CHECK(p[2] == doctest::Approx(p[0]).epsilon(1e-15));
    }
    SUBCASE("uniform activity gives a linear ramp") {
        Mat a(4, 2);
        for (double& v : a.v) v = 0.5;
        const double eps = 1e-9;
        const auto p = phase_target(a, eps);
        const double total = 4.0;  // 4 frames * 2 tokens * 0.5
        for (int tau = 0; tau < 4; ++tau) {
            CHECK(p[tau] == doctest::Approx((tau + 1) * 1.0 / (total + eps)).epsilon(1e-12));
        }
    }
    SUBCASE("zero activity keeps the phase at zero") {
        Mat a(3, 4);
        const auto p = phase_target(a, 1e-9);
        for (double v : p) CHECK(v == 0.0);
    }
    SUBCASE("phase is nondecreasing with final value S/(S+eps)") {
        Rng rng(4);
        Mat a(6, 5);
        for (double& v : a.v) v = rng.uniform();
        double total = 0.0;
        for (double v : a.v) total += v;
        const double eps = 1e-6;
        const auto p = phase_target(a, eps);
        for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] >= p[i - 1]);
        CHECK(p.back() == doctest::Approx(total / (total + eps)).epsilon(1e-12));
        CHECK(p.back() < 1.0);
    }
}

TEST_CASE("confidence summarizes activity over the selected set") {
    CHECK(confidence_target({0.1, 0.2, 0.05}, 0.3) == 0.0);  // empty selection
    CHECK(confidence_target({0.9, 0.9, 0.9, 0.9, 0.1, 0.1}, 0.3) ==
          doctest::Approx(0.9).epsilon(1e-15));
    CHECK(confidence_target({1.0, 1.0}, 0.3) == 1.0);
}

TEST_CASE("diffuseness filter accepts point masses and rejects uniform maps") {
    std::vector<double> point(16, 0.0);
    point[5] = 1.0;
    CHECK(normalized_entropy(point) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(diffuseness_accept(point, 0.5));

    std::vector<double> uniform(16, 0.25);
    CHECK(normalized_entropy(uniform) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!diffuseness_accept(uniform, 0.99));

    // half the tokens uniformly active: H = log(N/2)/log(N)
    std::vector<double> half(16, 0.0);
    for (int i = 0; i < 8; ++i) half[i] = 0.7;
    CHECK(normalized_entropy(half) ==
          doctest::Approx(std::log(8.0) / std::log(16.0)).epsilon(1e-12));

    std::vector<double> zeros(16, 0.0);
    CHECK(!diffuseness_accept(zeros, 0.99));  // all-zero maps reject by convention
    CHECK_THROWS_AS(diffuseness_accept({}, 0.5), ShapeError);
}

TEST_CASE("clip activity score is the top-20 percent frame mean") {
    SUBCASE("static clip scores zero") {
        LatentVideo z(11, 2, 2, 1);
        CHECK(clip_activity_score(z, PatchSpec{1, 1, 1}) == 0.0);
    }
    SUBCASE("one active frame among ten pairs averages into the top two") {
        LatentVideo z(11, 2, 2, 1);  // 10 frame pairs
        // frame pair 3: every cell changes by 5 -> frame mean magnitude 5
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 2; ++w)
                for (int tau = 4; tau < 11; ++tau) z.at(tau, h, w, 0) = 5.0;
        const double score = clip_activity_score(z, PatchSpec{1, 1, 1});
        CHECK(score == doctest::Approx(2.5).epsilon(1e-12));  // top-2 mean of {5, 0}
    }
    SUBCASE("score is homogeneous of degree one") {
        SceneParams p;
        const ContactScene scene = make_contact_scene(p);
        LatentVideo doubled = scene.clean_latent;
        for (double& v : doubled.data()) v *= 2.0;
        const double s1 = clip_activity_score(scene.clean_latent, PatchSpec{1, 1, 1});
        const double s2 = clip_activity_score(doubled, PatchSpec{1, 1, 1});
        CHECK(s2 == doctest::Approx(2.0 * s1).epsilon(1e-12));
    }
}

TEST_CASE("pure camera drift yields exactly zero suppressed magnitude and is rejected") {
    SceneParams p;
    p.vel_r = p.vel_c = 0;
    p.tau_e = p.tau_s = 0;
    p.blob_value = 0.0;  // drift only, no content
    p.camera_drift.assign(p.t, 0.0);
    for (int tau = 0; tau < p.t; ++tau) p.camera_drift[tau] = 0.2 * tau * tau / p.t;
    const ContactScene scene = make_contact_scene(p);

    const Mat m = latent_change_magnitude(scene.clean_latent, PatchSpec{1, 1, 1});
    const Mat ms = suppress_camera(m);
    for (double v : ms.v) CHECK(v == 0.0);

    PseudoTargetConfig cfg;
    const Mat a = activity_target(ms, cfg);
    // with median mu = 0 the map is uniformly sigma(0) = 0.5
    for (double v : a.v) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(!diffuseness_accept(frame_mean_activity(a), 0.99));
}

TEST_CASE("per-frame argmax of the activity target matches brute-force changed tokens") {
    SceneParams p;  // defaults: blob 2x2 moving right frames 4..10, value 3
    p.patch = PatchSpec{1, 1, 1};
    const ContactScene scene = make_contact_scene(p);
    const LatentVideo& z = scene.clean_latent;

    const Mat m = latent_change_magnitude(z, PatchSpec{1, 1, 1});
    const Mat ms = suppress_camera(m);
    PseudoTargetConfig cfg;
    const Mat a = activity_target(ms, cfg);

    for (int tau = 0; tau + 1 < p.t; ++tau) {
        // brute force: tokens whose cell changed between frames tau, tau+1
        std::set<int> changed;
        for (int h = 0; h < p.h; ++h)
            for (int w = 0; w < p.w; ++w)
                for (int c = 0; c < p.c; ++c)
                    if (z.at(tau + 1, h, w, c) != z.at(tau, h, w, c)) changed.insert(h * p.w + w);
        if (changed.empty()) continue;  // static frame pair

        double maxa = 0.0;
        for (int i = 0; i < a.cols; ++i) maxa = std::max(maxa, a.at(tau, i));
        std::set<int> argmax;
        for (int i = 0; i < a.cols; ++i) {
            if (a.at(tau, i) == maxa) argmax.insert(i);
        }
        CHECK(argmax == changed);
    }
}

TEST_CASE("motion-mask activity lands on the model token grid") {
    SceneParams p;
    const ContactScene scene = make_contact_scene(p);
    PseudoTargetConfig cfg;
    const auto act = motion_mask_activity(scene.clean_latent, PatchSpec{2, 2, 2}, cfg);
    const TokenGrid grid = token_grid(p.t, p.h, p.w, PatchSpec{2, 2, 2});
    CHECK(static_cast<int>(act.size()) == grid.count());
    for (double v : act) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
