#pragma once

#include <cstdint>
#include <vector>

#include "evd/tensor.hpp"

namespace evd {

class Rng;

/// Geometry and noise knobs for a synthetic contact scene. The blob is a
/// constant-value axis-aligned rectangle painted into all channels. It rests
/// at (row0, col0) through frame tau_e, translates at an integer
/// cells-per-frame velocity for frames tau_e..tau_s, and rests again
/// afterwards, so frame-to-frame latent change is nonzero exactly for frame
/// pairs tau in [tau_e, tau_s).
struct SceneParams {
    int t = 16, h = 8, w = 8, c = 4;
    PatchSpec patch{2, 2, 2};  // grid used for truth_activity
    int blob_h = 2, blob_w = 2;
    int row0 = 3, col0 = 0;
    int vel_r = 0, vel_c = 1;
    int tau_e = 4, tau_s = 10;
    double blob_value = 3.0;
    double noise_sigma = 0.0;
    std::vector<double> camera_drift;  // per-frame global offset; empty = off
    uint64_t noise_seed = 0;
};

/// Synthetic latent clip with ground-truth per-token event labels.
struct ContactScene {
    LatentVideo clean_latent;
    std::vector<uint8_t> truth_activity;  // length N on params.patch grid
    SceneParams params;

    int tau_e() const { return params.tau_e; }
    int tau_s() const { return params.tau_s; }
};

/// Builds the scene. Throws GeometryError if the blob leaves the grid at any
/// frame or the window is invalid, ShapeError if the patch spec does not
/// divide the shape.
ContactScene make_contact_scene(const SceneParams& params);

/// Blob top-left corner at frame tau (clamped motion profile).
void blob_position(const SceneParams& p, int tau, int* row, int* col);

}  // namespace evd
