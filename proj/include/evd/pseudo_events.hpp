#pragma once

#include <vector>

#include "evd/tensor.hpp"

namespace evd {

/// Knobs for self-supervised event pseudo-targets.
struct PseudoTargetConfig {
    double softness = 0.05;  // s in the soft threshold
    enum class MuMode { median, fixed } mu_mode = MuMode::median;
    double mu_fixed = 0.0;
    double tau_a = 0.3;               // activity threshold for confidence
    double entropy_threshold = 0.90;  // normalized-entropy rejection level
    double epsilon = 1e-6;            // phase normalization guard
    /// true: activity targets consume camera-suppressed magnitudes;
    /// false: raw magnitudes.
    bool use_camera_suppressed = true;

    void validate() const;
};

/// Per-frame-pair, per-spatial-token change magnitudes:
/// m[tau][i] = (1/C) * L1(Tok(z^{tau+1})_i - Tok(z^tau)_i).
/// Tokens are spatial patches (the temporal extent is forced to 1 here);
/// rows index frame pairs 0..T-2. Throws on single-frame clips.
Mat latent_change_magnitude(const LatentVideo& z1, const PatchSpec& spec);

/// Camera-motion suppression: m~ = max(0, m - frame mean).
Mat suppress_camera(const Mat& m);

/// a* = sigmoid((m - mu)/s); mu is the per-frame median by default.
Mat activity_target(const Mat& m, const PseudoTargetConfig& cfg);

/// p*_tau = (sum_{j<=tau} <a*_j, 1>) / (sum_all + eps); nondecreasing.
std::vector<double> phase_target(const Mat& activity, double epsilon);

/// Mean activity over tokens with a* >= tau_a, clipped to [0,1];
/// 0 when the selected set is empty.
double confidence_target(const std::vector<double>& activity_map, double tau_a);

/// Shannon entropy of the normalized map divided by log N; returns 1.0 for
/// an all-zero map (treated as maximally diffuse).
double normalized_entropy(const std::vector<double>& activity_map);

/// Accepts a clip-level activity map when its normalized entropy is at most
/// the threshold; all-zero maps are rejected.
bool diffuseness_accept(const std::vector<double>& activity_map, double threshold);

/// Time-mean of a per-frame activity map, as the clip-level map used by the
/// diffuseness filter and confidence summaries.
std::vector<double> frame_mean_activity(const Mat& activity);

/// Mean of the top-20% per-frame magnitudes (mean over tokens per frame;
/// ceil(0.2*(T-1)) frames; stable sort, ties broken by frame index).
double clip_activity_score(const LatentVideo& z1, const PatchSpec& spec);

/// Motion-mask gate source: pseudo-event activity of the (partially
/// denoised) latent, aggregated from frame pairs onto the model token grid
/// (mean over the pairs each temporal slice covers).
std::vector<double> motion_mask_activity(const LatentVideo& z, const PatchSpec& model_patch,
                                         const PseudoTargetConfig& cfg);

}  // namespace evd
