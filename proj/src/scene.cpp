#include "evd/scene.hpp"

#include <algorithm>
#include <string>

#include "evd/rng.hpp"

namespace evd {

void blob_position(const SceneParams& p, int tau, int* row, int* col) {
    const int moved = std::clamp(tau, p.tau_e, p.tau_s) - p.tau_e;
    *row = p.row0 + p.vel_r * moved;
    *col = p.col0 + p.vel_c * moved;
}

ContactScene make_contact_scene(const SceneParams& p) {
    if (!(0 <= p.tau_e && p.tau_e <= p.tau_s && p.tau_s <= p.t)) {
        throw GeometryError("event window [" + std::to_string(p.tau_e) + "," +
                            std::to_string(p.tau_s) + ") must satisfy 0 <= tau_e <= tau_s <= T");
    }
    if (p.blob_h <= 0 || p.blob_w <= 0) {
        throw GeometryError("blob extent must be positive");
    }
    if (p.noise_sigma < 0.0) {
        throw GeometryError("noise_sigma must be non-negative");
    }
    if (!p.camera_drift.empty() && static_cast<int>(p.camera_drift.size()) != p.t) {
        throw GeometryError("camera_drift must have one offset per frame");
    }

    const TokenGrid grid = token_grid(p.t, p.h, p.w, p.patch);

    ContactScene scene;
    scene.params = p;
    scene.clean_latent = LatentVideo(p.t, p.h, p.w, p.c);

    for (int tau = 0; tau < p.t; ++tau) {
        int r, c;
        blob_position(p, tau, &r, &c);
        if (r < 0 || c < 0 || r + p.blob_h > p.h || c + p.blob_w > p.w) {
            throw GeometryError("blob exits grid at frame " + std::to_string(tau) +
                                " (top-left " + std::to_string(r) + "," + std::to_string(c) + ")");
        }
        for (int dr = 0; dr < p.blob_h; ++dr) {
            for (int dc = 0; dc < p.blob_w; ++dc) {
                for (int ch = 0; ch < p.c; ++ch) {
                    scene.clean_latent.at(tau, r + dr, c + dc, ch) = p.blob_value;
                }
            }
        }
    }

    if (!p.camera_drift.empty()) {
        for (int tau = 0; tau < p.t; ++tau) {
            const double off = p.camera_drift[tau];
            for (int hh = 0; hh < p.h; ++hh)
                for (int ww = 0; ww < p.w; ++ww)
                    for (int ch = 0; ch < p.c; ++ch)
                        scene.clean_latent.at(tau, hh, ww, ch) += off;
        }
    }

    if (p.noise_sigma > 0.0) {
        Rng rng(p.noise_seed);
        for (double& x : scene.clean_latent.data()) x += p.noise_sigma * rng.normal();
    }

    // truth_activity: token i is 1 iff the blob actually moves and the
    // token's patch overlaps a blob footprint at some frame in [tau_e,
    // tau_s). A zero-velocity or empty window produces no latent change and
    // an all-zero map.
    scene.truth_activity.assign(grid.count(), 0);
    const bool moves = (p.vel_r != 0 || p.vel_c != 0) && p.tau_s > p.tau_e;
    if (moves) {
        int token = 0;
        for (int it = 0; it < grid.nt; ++it) {
            for (int ih = 0; ih < grid.nh; ++ih) {
                for (int iw = 0; iw < grid.nw; ++iw, ++token) {
                    const int t0 = it * p.patch.p_t, t1 = t0 + p.patch.p_t;
                    const int h0 = ih * p.patch.p_h, h1 = h0 + p.patch.p_h;
                    const int w0 = iw * p.patch.p_w, w1 = w0 + p.patch.p_w;
                    bool hit = false;
                    for (int tau = std::max(t0, p.tau_e); tau < std::min(t1, p.tau_s) && !hit;
                         ++tau) {
                        int r, c;
                        blob_position(p, tau, &r, &c);
                        hit = r < h1 && r + p.blob_h > h0 && c < w1 && c + p.blob_w > w0;
                    }
                    scene.truth_activity[token] = hit ? 1 : 0;
                }
            }
        }
    }

    return scene;
}

}  // namespace evd
