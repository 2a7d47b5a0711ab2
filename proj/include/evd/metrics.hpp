#pragma once

#include <cstdint>
#include <vector>

#include "evd/sampling.hpp"
#include "evd/scene.hpp"
#include "evd/tensor.hpp"

namespace evd {

/// Gated-update energy before, during, and after the ground-truth event
/// window: tokens are classified by their temporal slice (fully before
/// tau_e = pre; starting at or after tau_s = post; otherwise in), and each
/// bucket reports the mean squared per-element update over all solver steps.
struct EnergyMetrics {
    double e_pre = 0.0;
    double e_in = 0.0;
    double e_post = 0.0;

    double pre_plus_post() const { return e_pre + e_post; }
};

enum class TokenPhase : uint8_t { pre, in, post };

std::vector<TokenPhase> classify_tokens(const TokenGrid& grid, const PatchSpec& spec, int tau_e,
                                        int tau_s);

EnergyMetrics update_energy(const Trajectory& traj, const PatchSpec& spec, int tau_e, int tau_s);

/// Per-run aggregates: causal energy buckets plus the final-sample MSE to
/// the clean target when ground truth is available.
struct MetricsRecord {
    EnergyMetrics energy;
    double final_mse = 0.0;
    long backbone_evals = 0;
    int scenes = 0;
};

double latent_mse(const LatentVideo& a, const LatentVideo& b);

}  // namespace evd
